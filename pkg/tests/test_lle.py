import dataclasses

import numpy as np
import pytest

from cbmfs.cbm import CbmConfig, cbm_scores
from cbmfs.embedding_store import BaseMatrix, SyntheticSpec, build_base_matrix, generate_synthetic
from cbmfs.errors import InvalidConfig, KTooLarge, SingularSystem
from cbmfs.harness import ProtocolConfig, sample_episode
from cbmfs.inductive import classify_rows, inductive_score_matrix
from cbmfs.lle import LleConfig, cbm_lle_scores, fit_lle, knn, local_weights, transform
from cbmfs.metrics import cosine, neg_euclidean, neg_kl, softmax

from oracles import constrained_ls_oracle, knn_oracle, lle_embedding_oracle


def _random_base(rng, n=10, c=5):
    return BaseMatrix(rng.standard_normal((c, n)), tuple(range(n)))


class TestKnn:
    def test_exact_match(self, rng):
        B = _random_base(rng)
        assert list(knn(B, B.matrix[:, 3], 1)) == [3]

    def test_self_exclusion(self, rng):
        B = _random_base(rng)
        got = knn(B, B.matrix[:, 3], 1, exclude=3)
        assert list(got) == knn_oracle(B.columns, B.columns[3], 1, exclude=3)
        assert got[0] != 3

    def test_full_sort_oracle(self, rng):
        B = _random_base(rng)
        for _ in range(20):
            x = rng.standard_normal(5)
            assert list(knn(B, x, 4)) == knn_oracle(B.columns, x, 4)

    def test_ties_go_to_lower_index(self):
        m = np.array([[1.0, -1.0, 0.0, 1.0], [0.0, 0.0, 5.0, 0.0]])
        B = BaseMatrix(m, (0, 1, 2, 3))
        assert list(knn(B, np.zeros(2), 3)) == [0, 1, 3]

    def test_k_too_large(self, rng):
        B = _random_base(rng, n=4)
        with pytest.raises(KTooLarge):
            knn(B, np.zeros(5), 5)
        with pytest.raises(KTooLarge):
            knn(B, np.zeros(5), 4, exclude=0)


class TestLocalWeights:
    def test_midpoint(self, rng):
        n = rng.standard_normal((2, 6))
        np.testing.assert_allclose(local_weights(n.mean(axis=0), n), [0.5, 0.5], atol=1e-12)

    def test_single_neighbor(self, rng):
        assert local_weights(rng.standard_normal(4), rng.standard_normal((1, 4))).tolist() == [1.0]

    def test_unregularized_against_constrained_ls(self, rng):
        x, n = rng.standard_normal(8), rng.standard_normal((5, 8))
        w = local_weights(x, n, reg=0.0)
        np.testing.assert_allclose(w, constrained_ls_oracle(x, n, 0.0), rtol=0, atol=1e-6)
        assert abs(w.sum() - 1) < 1e-10

    def test_regularized_against_constrained_ls(self, rng):
        x, n = rng.standard_normal(3), rng.standard_normal((7, 3))
        w = local_weights(x, n, reg=1e-3)
        np.testing.assert_allclose(w, constrained_ls_oracle(x, n, 1e-3), rtol=0, atol=1e-6)

    def test_translation_invariance(self, rng):
        x, n, t = rng.standard_normal(6), rng.standard_normal((4, 6)), rng.standard_normal(6) * 3
        np.testing.assert_allclose(local_weights(x + t, n + t), local_weights(x, n), atol=1e-9)

    def test_zero_trace_is_uniform(self):
        x = np.ones(3)
        np.testing.assert_allclose(local_weights(x, np.ones((4, 3)), reg=0.0), [0.25] * 4, atol=1e-12)

    def test_singular_without_regularization(self):
        x = np.zeros(2)
        n = np.array([[1.0, 0.0], [1.0, 0.0]])
        with pytest.raises(SingularSystem):
            local_weights(x, n, reg=0.0)


class TestFit:
    def test_simplex_structure(self):
        n = 7
        B = BaseMatrix(np.eye(n), tuple(range(n)))
        model = fit_lle(B, LleConfig(k=3, c_prime=4))
        A = np.eye(n) - model.weights
        M = A @ A.T
        np.testing.assert_allclose(M @ np.ones(n), 0.0, atol=1e-8)
        for v, lam in zip(model.reduced, model.eigenvalues):
            assert np.max(np.abs(M @ v - lam * v)) <= 1e-8

    def test_small_case_against_svd_oracle(self, rng):
        B = _random_base(rng, n=6, c=4)
        model = fit_lle(B, LleConfig(k=2, c_prime=2))
        expected, evals = lle_embedding_oracle(model.weights, 2)
        np.testing.assert_allclose(model.reduced, expected, rtol=0, atol=1e-6)
        np.testing.assert_allclose(model.eigenvalues, evals, rtol=0, atol=1e-10)

    def test_weight_matrix_layout(self, rng):
        B = _random_base(rng, n=12, c=5)
        model = fit_lle(B, LleConfig(k=4, c_prime=3))
        W = model.weights
        np.testing.assert_allclose(W.sum(axis=0), 1.0, atol=1e-10)
        assert np.all((W != 0).sum(axis=0) == 4)
        assert np.all(np.diag(W) == 0)
        for i in range(12):
            nbrs = knn_oracle(B.columns, B.columns[i], 4, exclude=i)
            assert list(model.neighbors[i]) == nbrs
            w = constrained_ls_oracle(B.columns[i], B.columns[nbrs], 1e-3)
            np.testing.assert_allclose(W[nbrs, i], w, atol=1e-6)

    def test_orthonormal_rows_and_signs(self, rng):
        model = fit_lle(_random_base(rng, n=20, c=6), LleConfig(k=5, c_prime=8))
        np.testing.assert_allclose(model.reduced @ model.reduced.T, np.eye(8), atol=1e-8)
        for v in model.reduced:
            assert v[np.argmax(np.abs(v))] > 0

    def test_c_prime_bound(self, rng):
        B = _random_base(rng, n=6)
        with pytest.raises(InvalidConfig):
            fit_lle(B, LleConfig(k=2, c_prime=6))
        with pytest.raises(KTooLarge):
            fit_lle(B, LleConfig(k=6, c_prime=2))

    def test_l2_normalization(self, rng):
        B = _random_base(rng, n=10)
        model = fit_lle(B, LleConfig(k=3, c_prime=2, l2_normalize=True))
        np.testing.assert_allclose(np.linalg.norm(model.base_columns, axis=1), 1.0, atol=1e-14)


class TestTransform:
    def test_midpoint_maps_to_midpoint(self, rng):
        m = rng.standard_normal((4, 10)) * 10
        m[:, 1] = m[:, 0] + 0.01 * rng.standard_normal(4)
        B = BaseMatrix(m, tuple(range(10)))
        model = fit_lle(B, LleConfig(k=2, c_prime=3))
        x = (m[:, 0] + m[:, 1]) / 2
        expected = (model.reduced[:, 0] + model.reduced[:, 1]) / 2
        np.testing.assert_allclose(transform(x, model), expected, atol=1e-9)

    def test_k1_returns_nearest_reduced_vector(self, rng):
        B = _random_base(rng, n=10)
        model = fit_lle(B, LleConfig(k=1, c_prime=3))
        x = rng.standard_normal(5)
        nearest = knn_oracle(B.columns, x, 1)[0]
        np.testing.assert_array_equal(transform(x, model), model.reduced[:, nearest])

    def test_composition_oracle(self, rng):
        B = _random_base(rng, n=15, c=6)
        model = fit_lle(B, LleConfig(k=4, c_prime=5))
        for _ in range(10):
            x = rng.standard_normal(6)
            idx = knn_oracle(B.columns, x, 4)
            w = constrained_ls_oracle(x, B.columns[idx], 1e-3)
            expected = model.reduced[:, idx] @ w
            np.testing.assert_allclose(transform(x, model), expected, rtol=0, atol=1e-6)

    def test_linear_in_reduced_matrix(self, rng):
        B = _random_base(rng, n=12)
        model = fit_lle(B, LleConfig(k=3, c_prime=4))
        scaled = dataclasses.replace(model, reduced=2.5 * model.reduced)
        X = rng.standard_normal((6, 5))
        np.testing.assert_allclose(scaled.transform_many(X), 2.5 * model.transform_many(X), atol=1e-12)


class _IdentityModel:
    """Stand-in whose 'reduction' is the identity map."""

    def __init__(self, base):
        self.reduced_columns = base.columns

    def transform_many(self, x):
        return np.asarray(x, dtype=np.float64)


def _episode(seed, n_way=5, k_shot=1, dim=8, n_base=20):
    spec = SyntheticSpec(dim=dim, n_base=n_base, n_novel=10, samples_per_class=20, noise_scale=0.5)
    base, novel = generate_synthetic(spec, seed)
    return sample_episode(novel, ProtocolConfig(n_way, k_shot, 3, 1, seed), 0), build_base_matrix(base)


class TestCbmLle:
    def test_alpha_one_matches_inductive(self):
        ep, B = _episode(1)
        psi = cbm_lle_scores(ep, B, LleConfig(k=4, c_prime=5), CbmConfig(alpha=1.0))
        ind = inductive_score_matrix(ep.queries, ep.prototypes())
        np.testing.assert_array_equal(classify_rows(psi), classify_rows(ind))

    @pytest.mark.parametrize("variant", [("cosine", True, "cosine"), ("neg_euclidean", False, "neg_euclidean"),
                                         ("cosine", True, "neg_kl")])
    def test_identity_reduction_equals_cbm(self, variant):
        ep, B = _episode(2)
        cfg = CbmConfig(*variant, alpha=0.4)
        got = cbm_lle_scores(ep, B, LleConfig(), cfg, model=_IdentityModel(B))
        np.testing.assert_array_equal(got, cbm_scores(ep, B, cfg))

    @pytest.mark.parametrize("variant", [("cosine", True, "cosine"), ("neg_euclidean", True, "neg_kl"),
                                         ("cosine", False, "neg_euclidean")])
    def test_end_to_end_oracle(self, variant):
        ep, B = _episode(3)
        lcfg, cfg = LleConfig(k=4, c_prime=3), CbmConfig(*variant, alpha=0.3)
        got = cbm_lle_scores(ep, B, lcfg, cfg)

        model = fit_lle(B, lcfg)
        Bt, _ = lle_embedding_oracle(model.weights, 3)
        scalar = {"cosine": cosine, "neg_euclidean": neg_euclidean, "neg_kl": neg_kl}

        def reduce(x):
            idx = knn_oracle(B.columns, x, 4)
            return Bt[:, idx] @ constrained_ls_oracle(x, B.columns[idx], 1e-3)

        def rho(v):
            r = np.array([scalar[cfg.sigma_prime](v, Bt[:, i]) for i in range(B.n_classes)])
            return softmax(r) if cfg.apply_softmax else r

        protos = [ep.support[n].mean(axis=0) for n in range(ep.n_way)]
        expected = np.empty_like(got)
        for qi, q in enumerate(ep.queries):
            rq = rho(reduce(q))
            for n, s in enumerate(protos):
                expected[qi, n] = 0.3 * cosine(q, s) + 0.7 * scalar[cfg.sigma](rq, rho(reduce(s)))
        np.testing.assert_allclose(got, expected, rtol=0, atol=1e-6)

    def test_l2_flag_normalizes_inputs(self, rng):
        ep, B = _episode(4)
        lcfg = LleConfig(k=4, c_prime=3, l2_normalize=True)
        model = fit_lle(B, lcfg)
        q = ep.queries[:3]
        np.testing.assert_allclose(model.transform_many(q), model.transform_many(q * 7.0), atol=1e-12)
