"""Numba-compiled kernels. Same contracts as the numpy path."""

import math

import numpy as np
from numba import njit

ZERO_TRACE_FLOOR = 1e-12


# reassociation lets LLVM vectorize the reductions; no nnan/ninf, the
# kernels rely on inf and NaN
_FM = {"reassoc", "contract"}


@njit(cache=True, nogil=True, fastmath=_FM)
def _row_norms(a):
    n, c = a.shape
    out = np.empty(n)
    for i in range(n):
        s = 0.0
        for t in range(c):
            s += a[i, t] * a[i, t]
        out[i] = math.sqrt(s)
    return out


@njit(cache=True, nogil=True)
def pairwise_cosine(a, b):
    na = _row_norms(a)
    nb = _row_norms(b)
    out = np.dot(a, np.ascontiguousarray(b.T))
    for i in range(out.shape[0]):
        for j in range(out.shape[1]):
            out[i, j] /= na[i] * nb[j]
    return out


@njit(cache=True, nogil=True, fastmath=_FM)
def _sq_dist(a, b):
    n, c = a.shape
    m = b.shape[0]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(c):
                d = a[i, t] - b[j, t]
                s += d * d
            out[i, j] = s
    return out


@njit(cache=True, nogil=True)
def pairwise_neg_euclidean(a, b):
    return -np.sqrt(_sq_dist(a, b))


@njit(cache=True, nogil=True)
def softmax_rows(x):
    n, m = x.shape
    out = np.empty((n, m))
    for i in range(n):
        mx = x[i, 0]
        for j in range(1, m):
            if x[i, j] > mx:
                mx = x[i, j]
        s = 0.0
        for j in range(m):
            e = math.exp(x[i, j] - mx)
            out[i, j] = e
            s += e
        for j in range(m):
            out[i, j] /= s
    return out


@njit(cache=True, nogil=True)
def pairwise_neg_kl(p, q, eps):
    pc = np.maximum(p, eps)
    lq = np.log(np.maximum(q, eps))
    self_term = np.empty(pc.shape[0])
    for i in range(pc.shape[0]):
        s = 0.0
        for t in range(pc.shape[1]):
            s += pc[i, t] * math.log(pc[i, t])
        self_term[i] = s
    cross = np.dot(pc, np.ascontiguousarray(lq.T))
    for i in range(cross.shape[0]):
        for j in range(cross.shape[1]):
            cross[i, j] -= self_term[i]
    return cross


@njit(cache=True, nogil=True)
def knn_rows(x, base, k, exclude):
    d = _sq_dist(x, base)
    n = x.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        if exclude[i] >= 0:
            d[i, exclude[i]] = np.inf
        order = np.argsort(d[i], kind="mergesort")
        out[i] = order[:k]
    return out


@njit(cache=True, nogil=True)
def _solve_pivoted(a, rhs):
    """Gaussian elimination with partial pivoting; NaN result when singular."""
    k = a.shape[0]
    a = a.copy()
    x = rhs.copy()
    for col in range(k):
        piv = col
        best = abs(a[col, col])
        for r in range(col + 1, k):
            if abs(a[r, col]) > best:
                best = abs(a[r, col])
                piv = r
        if best == 0.0:
            x[:] = np.nan
            return x
        if piv != col:
            for t in range(k):
                tmp = a[col, t]
                a[col, t] = a[piv, t]
                a[piv, t] = tmp
            tmp = x[col]
            x[col] = x[piv]
            x[piv] = tmp
        for r in range(col + 1, k):
            f = a[r, col] / a[col, col]
            if f != 0.0:
                for t in range(col, k):
                    a[r, t] -= f * a[col, t]
                x[r] -= f * x[col]
    for r in range(k - 1, -1, -1):
        s = x[r]
        for t in range(r + 1, k):
            s -= a[r, t] * x[t]
        x[r] = s / a[r, r]
    return x


@njit(cache=True, nogil=True, fastmath=_FM)
def barycenter_weights(x, nbrs, reg):
    n, k, c = nbrs.shape
    out = np.empty((n, k))
    diff = np.empty((k, c))
    gram = np.empty((k, k))
    ones = np.ones(k)
    for i in range(n):
        for j in range(k):
            for t in range(c):
                diff[j, t] = x[i, t] - nbrs[i, j, t]
        trace = 0.0
        for j in range(k):
            for l in range(k):
                s = 0.0
                for t in range(c):
                    s += diff[j, t] * diff[l, t]
                gram[j, l] = s
            trace += gram[j, j]
        if trace > 0:
            ridge = reg * trace / k
        else:
            ridge = max(reg, ZERO_TRACE_FLOOR)
        for j in range(k):
            gram[j, j] += ridge
        w = _solve_pivoted(gram, ones)
        total = 0.0
        for j in range(k):
            total += w[j]
        ok = True
        for j in range(k):
            w[j] /= total
            if not math.isfinite(w[j]):
                ok = False
        for j in range(k):
            out[i, j] = w[j] if ok else np.nan
    return out
