"""Pure-numpy kernels. Reference path and fallback when numba is absent."""

import numpy as np
from scipy.spatial.distance import cdist

ZERO_TRACE_FLOOR = 1e-12


def pairwise_cosine(a, b):
    na = np.sqrt(np.einsum("ij,ij->i", a, a))
    nb = np.sqrt(np.einsum("ij,ij->i", b, b))
    return (a @ b.T) / np.outer(na, nb)


def pairwise_neg_euclidean(a, b):
    return -cdist(a, b, "euclidean")


def softmax_rows(x):
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def pairwise_neg_kl(p, q, eps):
    p = np.maximum(p, eps)
    q = np.maximum(q, eps)
    lp = np.log(p)
    lq = np.log(q)
    # -sum_i p_i (log p_i - log q_i) for every (row of p, row of q)
    self_term = np.einsum("ij,ij->i", p, lp)
    return -(self_term[:, None] - p @ lq.T)


def knn_rows(x, base, k, exclude):
    d = cdist(x, base, "sqeuclidean")
    rows = np.flatnonzero(exclude >= 0)
    d[rows, exclude[rows]] = np.inf
    order = np.argsort(d, axis=1, kind="stable")
    return order[:, :k].astype(np.int64)


def _regularized_gram(x, nbrs, reg):
    diff = x[:, None, :] - nbrs
    gram = diff @ diff.transpose(0, 2, 1)
    k = nbrs.shape[1]
    trace = np.trace(gram, axis1=1, axis2=2)
    ridge = np.where(trace > 0, reg * trace / k, max(reg, ZERO_TRACE_FLOOR))
    gram += ridge[:, None, None] * np.eye(k)
    return gram


def barycenter_weights(x, nbrs, reg):
    """Rows of NaN flag systems that could not be solved."""
    gram = _regularized_gram(x, nbrs, reg)
    n, k = nbrs.shape[:2]
    ones = np.ones((n, k, 1))
    try:
        w = np.linalg.solve(gram, ones)[..., 0]
    except np.linalg.LinAlgError:
        w = np.full((n, k), np.nan)
        for i in range(n):
            try:
                w[i] = np.linalg.solve(gram[i], ones[i, :, 0])
            except np.linalg.LinAlgError:
                pass
    with np.errstate(invalid="ignore", divide="ignore"):
        w = w / w.sum(axis=1, keepdims=True)
    w[~np.all(np.isfinite(w), axis=1)] = np.nan
    return w
