"""Cooperative bi-path scoring.

A query is compared with each class prototype twice: directly (cosine, the
inductive path) and through base classes, by comparing the two vectors'
similarity distributions over the base-class means (the transductive path).
The final score is ``alpha * inductive + (1 - alpha) * transductive``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding_store import BaseMatrix
from .errors import AlphaOutOfRange, DimensionMismatch, InvalidConfig, LengthMismatch
from .inductive import Episode, inductive_score_matrix
from .metrics import (
    COSINE,
    DISTRIBUTION_SIMILARITIES,
    NEG_EUCLIDEAN,
    NEG_KL,
    SCALAR,
    SIMILARITIES,
    check_normalized,
    pairwise,
    softmax,
    softmax_rows,
)


@dataclass(frozen=True)
class CbmConfig:
    sigma_prime: str = COSINE
    apply_softmax: bool = True
    sigma: str = COSINE
    alpha: float = 0.05

    def __post_init__(self):
        if self.sigma_prime not in SIMILARITIES:
            raise InvalidConfig(f"sigma_prime must be one of {SIMILARITIES}, got {self.sigma_prime!r}")
        if self.sigma not in DISTRIBUTION_SIMILARITIES:
            raise InvalidConfig(f"sigma must be one of {DISTRIBUTION_SIMILARITIES}, got {self.sigma!r}")
        if self.sigma == NEG_KL and not self.apply_softmax:
            raise InvalidConfig("sigma=neg_kl compares probability vectors and requires apply_softmax")
        check_alpha(self.alpha)
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def variant(self) -> tuple[str, bool, str]:
        return (self.sigma_prime, self.apply_softmax, self.sigma)

    def with_alpha(self, alpha: float) -> "CbmConfig":
        return CbmConfig(self.sigma_prime, self.apply_softmax, self.sigma, alpha)


def check_alpha(alpha):
    if not 0.0 <= alpha <= 1.0:
        raise AlphaOutOfRange(f"alpha must lie in [0, 1], got {alpha}")


def table5_variants() -> list[tuple[str, bool, str]]:
    """All ten (sigma_prime, softmax, sigma) combinations; KL only with softmax."""
    out = []
    for sp in (COSINE, NEG_EUCLIDEAN):
        for sm in (False, True):
            sigmas = (COSINE, NEG_EUCLIDEAN, NEG_KL) if sm else (COSINE, NEG_EUCLIDEAN)
            out.extend((sp, sm, s) for s in sigmas)
    return out


@dataclass(frozen=True)
class SimilarityDistribution:
    rho: np.ndarray
    normalized: bool

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=np.float64)
        if self.normalized:
            check_normalized(rho)
        object.__setattr__(self, "rho", rho)


def _base_columns(base):
    # plain arrays are taken as one row per base class
    return base.columns if isinstance(base, BaseMatrix) else np.ascontiguousarray(base, dtype=np.float64)


def similarity_distribution(v, base, config: CbmConfig) -> SimilarityDistribution:
    cols = _base_columns(base)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (cols.shape[1],):
        raise DimensionMismatch(f"vector of shape {v.shape} vs base dim {cols.shape[1]}")
    kernel = SCALAR[config.sigma_prime]
    rho = np.array([kernel(v, col) for col in cols])
    if config.apply_softmax:
        rho = softmax(rho)
    return SimilarityDistribution(rho, config.apply_softmax)


def similarity_distributions(vectors, base, config: CbmConfig) -> np.ndarray:
    """Batched: one distribution per row of ``vectors``, shape (n, n_base)."""
    rho = pairwise(config.sigma_prime, vectors, _base_columns(base))
    if config.apply_softmax:
        rho = softmax_rows(rho)
    return rho


def transductive_score(rho_q, rho_s, config: CbmConfig) -> float:
    a = rho_q.rho if isinstance(rho_q, SimilarityDistribution) else np.asarray(rho_q, dtype=np.float64)
    b = rho_s.rho if isinstance(rho_s, SimilarityDistribution) else np.asarray(rho_s, dtype=np.float64)
    if a.shape != b.shape:
        raise LengthMismatch(f"distributions differ in length: {a.shape} vs {b.shape}")
    return SCALAR[config.sigma](a, b)


def transductive_score_matrix(rho_q, rho_s, config: CbmConfig) -> np.ndarray:
    return pairwise(config.sigma, rho_q, rho_s)


def combined_score(phi, varphi, alpha):
    check_alpha(alpha)
    return alpha * phi + (1.0 - alpha) * varphi


def bipath_terms(queries, prototypes, base, config: CbmConfig, reduced=None):
    """Inductive and transductive score matrices, each (n_queries, N).

    ``reduced`` optionally supplies ``(queries, prototypes, base)`` in another
    space for the transductive path only; the inductive path always uses the
    given ``queries``/``prototypes``.
    """
    phi = inductive_score_matrix(queries, prototypes)
    tq, tp, tb = reduced if reduced is not None else (queries, prototypes, base)
    rho_q = similarity_distributions(tq, tb, config)
    rho_s = similarity_distributions(tp, tb, config)
    varphi = transductive_score_matrix(rho_q, rho_s, config)
    return phi, varphi


def cbm_scores(episode: Episode, base: BaseMatrix, config: CbmConfig) -> np.ndarray:
    """Per-query combined scores, shape (n_queries, N)."""
    if episode.dim != base.dim:
        raise DimensionMismatch(f"episode dim {episode.dim} vs base dim {base.dim}")
    phi, varphi = bipath_terms(episode.queries, episode.prototypes(), base, config)
    return combined_score(phi, varphi, config.alpha)

