"""Similarity and divergence kernels, plus the dense classification loss.

Every similarity follows the larger-is-more-similar convention, so
Euclidean distance and KL divergence enter negated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionMismatch, InvalidConfig, LengthMismatch, NotNormalized, ZeroVector

COSINE = "cosine"
NEG_EUCLIDEAN = "neg_euclidean"
NEG_KL = "neg_kl"

SIMILARITIES = (COSINE, NEG_EUCLIDEAN)
DISTRIBUTION_SIMILARITIES = (COSINE, NEG_EUCLIDEAN, NEG_KL)

KL_EPS = 1e-12
NORMALIZED_TOL = 1e-9


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape:
        raise LengthMismatch(f"vectors must be 1-D and equal length, got {a.shape} and {b.shape}")
    return a, b


def cosine(a, b) -> float:
    a, b = _pair(a, b)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroVector("cosine similarity is undefined for a zero vector")
    return float(a @ b / (na * nb))


def neg_euclidean(a, b) -> float:
    a, b = _pair(a, b)
    return -float(np.sqrt(np.sum((a - b) ** 2)))


def softmax(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("softmax needs finite input")
    z = np.exp(v - v.max())
    return z / z.sum()


def check_normalized(p, what="distribution"):
    p = np.asarray(p, dtype=np.float64)
    sums = p.sum(axis=-1)
    if np.any(p < 0) or np.any(np.abs(sums - 1.0) > NORMALIZED_TOL):
        raise NotNormalized(f"{what} is not a probability vector (apply softmax first)")
    return p


def neg_kl(p, q) -> float:
    """Negated KL(p || q), components floored at ``KL_EPS``."""
    p, q = _pair(p, q)
    check_normalized(p, "p")
    check_normalized(q, "q")
    pc = np.maximum(p, KL_EPS)
    qc = np.maximum(q, KL_EPS)
    return -float(np.sum(pc * (np.log(pc) - np.log(qc))))


SCALAR = {COSINE: cosine, NEG_EUCLIDEAN: neg_euclidean, NEG_KL: neg_kl}


def pairwise(kind: str, a, b) -> np.ndarray:
    """Similarity of every row of ``a`` against every row of ``b``."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"row sets are not conformable: {a.shape} vs {b.shape}")
    if kind == COSINE:
        if not (np.all(np.any(a != 0, axis=1)) and np.all(np.any(b != 0, axis=1))):
            raise ZeroVector("cosine similarity is undefined for a zero vector")
        return kernels.pairwise_cosine(a, b)
    if kind == NEG_EUCLIDEAN:
        return kernels.pairwise_neg_euclidean(a, b)
    if kind == NEG_KL:
        check_normalized(a, "query distribution")
        check_normalized(b, "support distribution")
        return kernels.pairwise_neg_kl(a, b, KL_EPS)
    raise InvalidConfig(f"unknown similarity {kind!r}")


def softmax_rows(x) -> np.ndarray:
    return kernels.softmax_rows(np.ascontiguousarray(x, dtype=np.float64))


@dataclass(frozen=True)
class LossInputs:
    features: np.ndarray  # c x r
    weights: np.ndarray  # c x n_classes
    bias: np.ndarray  # n_classes
    target: int
    temperature: float

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        p = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if f.ndim != 2 or p.ndim != 2 or b.ndim != 1:
            raise DimensionMismatch("features and weights must be 2-D, bias 1-D")
        if f.shape[0] != p.shape[0] or p.shape[1] != b.shape[0]:
            raise DimensionMismatch(f"shapes not conformable: F{f.shape} P{p.shape} b{b.shape}")
        if not 0 <= self.target < p.shape[1]:
            raise DimensionMismatch(f"target {self.target} outside [0, {p.shape[1]})")
        if not self.temperature > 0:
            raise InvalidConfig("temperature must be positive")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "weights", p)
        object.__setattr__(self, "bias", b)


def dense_classification_loss(inputs: LossInputs) -> float:
    """Temperature-scaled cross-entropy averaged over every spatial position."""
    logits = inputs.temperature * (inputs.features.T @ inputs.weights + inputs.bias)
    mx = logits.max(axis=1, keepdims=True)
    lse = mx[:, 0] + np.log(np.exp(logits - mx).sum(axis=1))
    return float(np.mean(lse - logits[:, inputs.target]))
