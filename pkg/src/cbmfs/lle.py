"""Locally linear embedding of the base-class means, with out-of-sample mapping.

Fitting reconstructs every base mean from its ``k`` nearest other base means,
collects the affine reconstruction weights into ``W`` (column ``i`` holds the
weights of base class ``i``), and embeds the base classes with the bottom
eigenvectors of ``M = (I - W)(I - W)^T`` after dropping the constant one.
A new vector is mapped by computing its reconstruction weights over its ``k``
nearest base means in the original space and applying those same weights to
the neighbours' embedded coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .cbm import CbmConfig, bipath_terms, combined_score
from .embedding_store import BaseMatrix
from .errors import DimensionMismatch, EigenFailure, InvalidConfig, KTooLarge, SingularSystem, ZeroVector
from .inductive import Episode


@dataclass(frozen=True)
class LleConfig:
    k: int = 10
    c_prime: int = 63
    l2_normalize: bool = False
    reg: float = 1e-3

    def __post_init__(self):
        if int(self.k) < 1:
            raise InvalidConfig("k must be at least 1")
        if int(self.c_prime) < 1:
            raise InvalidConfig("c_prime must be at least 1")
        if not self.reg >= 0:
            raise InvalidConfig("reg must be non-negative")

    def validate(self, n_base: int):
        if self.k >= n_base:
            raise KTooLarge(f"k={self.k} needs more than {n_base} base classes")
        if self.c_prime > n_base - 1:
            raise InvalidConfig(f"c_prime={self.c_prime} exceeds n_base - 1 = {n_base - 1}")


def l2_normalize_rows(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise ZeroVector("cannot L2-normalize a zero vector")
    return x / norms


def knn(base, x, k: int, exclude: int | None = None) -> np.ndarray:
    """Indices of the ``k`` base columns nearest to ``x``, ascending by distance.

    Ties go to the lower index. ``exclude`` removes one column from candidacy.
    """
    cols = base.columns if isinstance(base, BaseMatrix) else np.ascontiguousarray(base, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (cols.shape[1],):
        raise DimensionMismatch(f"vector of shape {x.shape} vs base dim {cols.shape[1]}")
    return knn_batch(cols, x[None, :], k, None if exclude is None else np.array([exclude]))[0]


def knn_batch(cols, x, k: int, exclude=None) -> np.ndarray:
    n_eligible = cols.shape[0] - (0 if exclude is None else 1)
    if k > n_eligible:
        raise KTooLarge(f"k={k} but only {n_eligible} eligible columns")
    if k < 1:
        raise InvalidConfig("k must be at least 1")
    excl = np.full(x.shape[0], -1, dtype=np.int64) if exclude is None else np.asarray(exclude, dtype=np.int64)
    return kernels.knn_rows(np.ascontiguousarray(x, dtype=np.float64), cols, int(k), excl)


def local_weights(x, neighbors, reg: float = 1e-3) -> np.ndarray:
    """Affine reconstruction weights of ``x`` from ``neighbors`` (one per row)."""
    x = np.asarray(x, dtype=np.float64)
    nbrs = np.asarray(neighbors, dtype=np.float64)
    if nbrs.ndim != 2 or nbrs.shape[1] != x.shape[0]:
        raise DimensionMismatch(f"neighbors {nbrs.shape} vs vector {x.shape}")
    return local_weights_batch(x[None, :], nbrs[None], reg)[0]


def local_weights_batch(x, nbrs, reg: float) -> np.ndarray:
    w = kernels.barycenter_weights(
        np.ascontiguousarray(x, dtype=np.float64), np.ascontiguousarray(nbrs, dtype=np.float64), float(reg)
    )
    bad = np.flatnonzero(np.isnan(w[:, 0]))
    if bad.size:
        raise SingularSystem(f"local covariance not invertible for {bad.size} point(s); increase reg")
    return w


@dataclass(frozen=True)
class LleModel:
    config: LleConfig
    base_columns: np.ndarray  # (n_base, c), post-normalization
    neighbors: np.ndarray  # (n_base, k)
    weights: np.ndarray  # W, (n_base, n_base)
    reduced: np.ndarray  # B~, (c_prime, n_base)
    eigenvalues: np.ndarray  # (c_prime,)

    @property
    def reduced_columns(self) -> np.ndarray:
        return np.ascontiguousarray(self.reduced.T)

    def prepare(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return l2_normalize_rows(x) if self.config.l2_normalize else x

    def transform_many(self, x) -> np.ndarray:
        """Map rows of ``x`` (n, c) into the embedded space, (n, c_prime)."""
        x = self.prepare(x)
        if x.shape[1] != self.base_columns.shape[1]:
            raise DimensionMismatch(f"vectors of dim {x.shape[1]} vs base dim {self.base_columns.shape[1]}")
        idx = knn_batch(self.base_columns, x, self.config.k)
        w = local_weights_batch(x, self.base_columns[idx], self.config.reg)
        emb = self.reduced_columns[idx]  # (n, k, c_prime)
        return np.einsum("nk,nkd->nd", w, emb)


def _fix_signs(vecs):
    # column-wise: make the largest-magnitude component positive
    pivots = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[pivots, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def fit_lle(base: BaseMatrix, config: LleConfig) -> LleModel:
    n = base.n_classes
    config.validate(n)
    cols = l2_normalize_rows(base.columns) if config.l2_normalize else np.array(base.columns)
    nbr_idx = knn_batch(cols, cols, config.k, exclude=np.arange(n))
    w = local_weights_batch(cols, cols[nbr_idx], config.reg)

    W = np.zeros((n, n))
    W[nbr_idx, np.arange(n)[:, None]] = w
    A = np.eye(n) - W
    M = A @ A.T
    M = 0.5 * (M + M.T)
    try:
        evals, evecs = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(f"eigendecomposition did not converge: {exc}") from exc
    if not (np.all(np.isfinite(evals)) and np.all(np.isfinite(evecs))):
        raise EigenFailure("eigendecomposition produced non-finite values")
    keep = slice(1, config.c_prime + 1)
    vecs = _fix_signs(evecs[:, keep])
    return LleModel(
        config=config,
        base_columns=np.ascontiguousarray(cols),
        neighbors=nbr_idx,
        weights=W,
        reduced=np.ascontiguousarray(vecs.T),
        eigenvalues=evals[keep].copy(),
    )


def transform(x, model: LleModel) -> np.ndarray:
    return model.transform_many(np.asarray(x, dtype=np.float64)[None, :])[0]


def lle_bipath_terms(episode: Episode, model: LleModel, cbm_config: CbmConfig):
    """(inductive, transductive) matrices with the transductive path in the embedded space."""
    protos = episode.prototypes()
    reduced = (
        model.transform_many(episode.queries),
        model.transform_many(protos),
        model.reduced_columns,
    )
    return bipath_terms(episode.queries, protos, None, cbm_config, reduced=reduced)


def cbm_lle_scores(
    episode: Episode,
    base: BaseMatrix,
    lle_config: LleConfig,
    cbm_config: CbmConfig,
    model: LleModel | None = None,
) -> np.ndarray:
    """Combined scores (n_queries, N); pass a fitted ``model`` to skip refitting."""
    if episode.dim != base.dim:
        raise DimensionMismatch(f"episode dim {episode.dim} vs base dim {base.dim}")
    if model is None:
        model = fit_lle(base, lle_config)
    phi, varphi = lle_bipath_terms(episode, model, cbm_config)
    return combined_score(phi, varphi, cbm_config.alpha)
