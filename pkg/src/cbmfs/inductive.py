"""Prototype baseline: class means of the support set, cosine scores, argmax."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyScores, EmptySupport
from .metrics import COSINE, cosine, pairwise


@dataclass(frozen=True)
class Episode:
    """One N-way K-shot task.

    ``support`` has shape (N, K, c); ``queries`` is (n_queries, c) with the
    true class slot of each row in ``query_slots``. ``class_ids`` maps slot to
    dataset class id.
    """

    support: np.ndarray
    queries: np.ndarray
    query_slots: np.ndarray
    class_ids: tuple[int, ...]

    def __post_init__(self):
        s = np.ascontiguousarray(self.support, dtype=np.float64)
        q = np.ascontiguousarray(self.queries, dtype=np.float64)
        slots = np.asarray(self.query_slots, dtype=np.int64)
        if s.ndim != 3 or q.ndim != 2 or s.shape[2] != q.shape[1]:
            raise DimensionMismatch(f"support {s.shape} and queries {q.shape} not conformable")
        if slots.shape != (q.shape[0],) or np.any(slots < 0) or np.any(slots >= s.shape[0]):
            raise DimensionMismatch("query_slots must hold one valid slot per query")
        if len(self.class_ids) != s.shape[0] or len(set(self.class_ids)) != s.shape[0]:
            raise DimensionMismatch("class_ids must be distinct, one per slot")
        for arr in (s, q, slots):
            arr.setflags(write=False)
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "queries", q)
        object.__setattr__(self, "query_slots", slots)
        object.__setattr__(self, "class_ids", tuple(int(c) for c in self.class_ids))

    @property
    def n_way(self) -> int:
        return self.support.shape[0]

    @property
    def k_shot(self) -> int:
        return self.support.shape[1]

    @property
    def dim(self) -> int:
        return self.support.shape[2]

    def prototypes(self) -> np.ndarray:
        return self.support.mean(axis=1)


@dataclass(frozen=True)
class Prototype:
    vector: np.ndarray
    slot: int


def class_prototype(support_vectors, slot: int = 0) -> Prototype:
    v = np.asarray(support_vectors, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] == 0:
        raise EmptySupport("a prototype needs at least one support vector")
    return Prototype(v.mean(axis=0), slot)


def inductive_scores(q, prototypes) -> np.ndarray:
    """Cosine of ``q`` against each prototype (one score per class slot)."""
    vecs = [p.vector if isinstance(p, Prototype) else p for p in prototypes]
    return np.array([cosine(q, v) for v in vecs])


def inductive_score_matrix(queries, prototypes) -> np.ndarray:
    """Batched form: (n_queries, N) cosine scores."""
    return pairwise(COSINE, queries, prototypes)


def classify(scores) -> int:
    """Index of the maximum score; ties go to the lowest index."""
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise EmptyScores("cannot classify an empty score vector")
    return int(np.argmax(s))


def classify_rows(scores) -> np.ndarray:
    s = np.asarray(scores)
    if s.ndim != 2 or s.shape[1] == 0:
        raise EmptyScores("score matrix must have at least one column")
    return np.argmax(s, axis=1)
