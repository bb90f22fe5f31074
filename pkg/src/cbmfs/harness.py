"""Episodic evaluation: seeded task sampling, accuracy with 95% CI, sweeps.

Each task draws from its own generator keyed on ``(seed, task_index)``, so a
task's content never depends on which worker evaluates it or in what order.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable

import numpy as np

from .cbm import CbmConfig, bipath_terms, combined_score, table5_variants
from .embedding_store import BaseMatrix, EmbeddingDataset
from .errors import InsufficientSamples, InvalidConfig
from .inductive import Episode, classify_rows, inductive_score_matrix
from .lle import LleConfig, LleModel, fit_lle, lle_bipath_terms

Z95 = 1.96

INDUCTIVE = "inductive"
CBM = "cbm"
CBM_LLE = "cbm_lle"
METHODS = (INDUCTIVE, CBM, CBM_LLE)


@dataclass(frozen=True)
class ProtocolConfig:
    n_way: int = 5
    k_shot: int = 1
    n_query: int = 15
    n_tasks: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.n_way < 2 or self.k_shot < 1 or self.n_query < 1 or self.n_tasks < 1:
            raise InvalidConfig(f"invalid protocol {self}")
        if self.seed < 0:
            raise InvalidConfig("seed must be non-negative")

    def validate(self, novel: EmbeddingDataset):
        if self.n_way > len(novel):
            raise InsufficientSamples(f"{self.n_way}-way needs {self.n_way} classes, dataset has {len(novel)}")
        need = self.k_shot + self.n_query
        if need > min(novel.counts):
            raise InsufficientSamples(f"need {need} samples per class, smallest class has {min(novel.counts)}")


@dataclass(frozen=True)
class Method:
    kind: str = INDUCTIVE
    cbm: CbmConfig | None = None
    lle: LleConfig | None = None

    def __post_init__(self):
        if self.kind not in METHODS:
            raise InvalidConfig(f"method must be one of {METHODS}, got {self.kind!r}")
        if self.kind != INDUCTIVE and self.cbm is None:
            object.__setattr__(self, "cbm", CbmConfig())
        if self.kind == CBM_LLE and self.lle is None:
            object.__setattr__(self, "lle", LleConfig())

    @property
    def alpha(self) -> float:
        return 1.0 if self.kind == INDUCTIVE else self.cbm.alpha

    def describe(self) -> dict:
        out = {}
        if self.cbm is not None:
            out.update(asdict(self.cbm))
        if self.kind == CBM_LLE:
            out.update({f"lle_{k}": v for k, v in asdict(self.lle).items()})
        return out


def task_rng(seed: int, task_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, task_index])))


def sample_episode(novel: EmbeddingDataset, cfg: ProtocolConfig, task_index: int) -> Episode:
    cfg.validate(novel)
    rng = task_rng(cfg.seed, task_index)
    picks = rng.choice(len(novel), size=cfg.n_way, replace=False)
    support, queries = [], []
    for slot in picks:
        vecs = novel.classes[slot].vectors
        idx = rng.choice(vecs.shape[0], size=cfg.k_shot + cfg.n_query, replace=False)
        support.append(vecs[idx[: cfg.k_shot]])
        queries.append(vecs[idx[cfg.k_shot :]])
    return Episode(
        support=np.stack(support).astype(np.float64),
        queries=np.concatenate(queries).astype(np.float64),
        query_slots=np.repeat(np.arange(cfg.n_way), cfg.n_query),
        class_ids=tuple(novel.classes[i].class_id for i in picks),
    )


@dataclass
class Report:
    method: str
    config: dict
    n_way: int
    k_shot: int
    n_query: int
    n_tasks: int
    seed: int
    accuracy: float
    ci95: float
    per_task: np.ndarray = field(repr=False)
    elapsed_seconds: float = 0.0

    def to_dict(self, include_per_task: bool = False) -> dict:
        d = {
            "method": self.method,
            "config": self.config,
            "n_way": self.n_way,
            "k_shot": self.k_shot,
            "n_query": self.n_query,
            "n_tasks": self.n_tasks,
            "seed": self.seed,
            "accuracy": self.accuracy,
            "ci95": self.ci95,
            "elapsed_seconds": self.elapsed_seconds,
        }
        if include_per_task:
            d["per_task"] = self.per_task.tolist()
        return d

    def to_json(self, include_per_task: bool = False) -> str:
        return json.dumps(self.to_dict(include_per_task), indent=2, sort_keys=True)


def summarize(per_task) -> tuple[float, float]:
    """Mean accuracy and the 1.96-sigma normal half-width over tasks."""
    per_task = np.asarray(per_task, dtype=np.float64)
    if np.all(per_task == per_task[0]):
        # np.std of a constant array can come out as a few ulps
        return float(per_task[0]), 0.0
    return float(per_task.mean()), float(Z95 * per_task.std() / math.sqrt(per_task.size))


def _accuracy(scores, slots) -> float:
    return float(np.mean(classify_rows(scores) == slots))


class _Scorer:
    """Produces per-task (inductive, transductive) terms for one scoring path."""

    def __init__(self, base: BaseMatrix, kind: str, cbm: CbmConfig | None, model: LleModel | None):
        self.base = base
        self.kind = kind
        self.cbm = cbm
        self.model = model

    def terms(self, ep: Episode):
        if self.kind == INDUCTIVE:
            return inductive_score_matrix(ep.queries, ep.prototypes()), None
        if self.kind == CBM:
            return bipath_terms(ep.queries, ep.prototypes(), self.base, self.cbm)
        return lle_bipath_terms(ep, self.model, self.cbm)


def _task_accuracies(phi, varphi, slots, alphas) -> list[float]:
    if varphi is None:
        acc = _accuracy(phi, slots)
        return [acc] * len(alphas)
    return [_accuracy(combined_score(phi, varphi, a), slots) for a in alphas]


def _run_tasks(novel, cfg, scorer: _Scorer, alphas, threads: int) -> np.ndarray:
    """(n_tasks, len(alphas)) per-task accuracies, independent of ``threads``."""

    def run(chunk):
        out = []
        for t in chunk:
            ep = sample_episode(novel, cfg, t)
            phi, varphi = scorer.terms(ep)
            out.append(_task_accuracies(phi, varphi, ep.query_slots, alphas))
        return out

    tasks = range(cfg.n_tasks)
    threads = max(1, int(threads))
    if threads == 1:
        rows = run(tasks)
    else:
        n_chunks = min(cfg.n_tasks, threads * 4)
        chunks = [tasks[i::n_chunks] for i in range(n_chunks)]
        rows = [None] * cfg.n_tasks
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for chunk, res in zip(chunks, pool.map(run, chunks)):
                for t, r in zip(chunk, res):
                    rows[t] = r
    return np.asarray(rows, dtype=np.float64).reshape(cfg.n_tasks, len(alphas))


def _scorer_for(method: Method, base: BaseMatrix) -> _Scorer:
    model = fit_lle(base, method.lle) if method.kind == CBM_LLE else None
    return _Scorer(base, method.kind, method.cbm, model)


def evaluate(
    novel: EmbeddingDataset,
    base: BaseMatrix,
    method: Method,
    cfg: ProtocolConfig,
    threads: int = 1,
) -> Report:
    if novel.dim != base.dim:
        raise InvalidConfig(f"novel dim {novel.dim} vs base dim {base.dim}")
    cfg.validate(novel)
    start = time.perf_counter()
    scorer = _scorer_for(method, base)
    per_task = _run_tasks(novel, cfg, scorer, [method.alpha], threads)[:, 0]
    acc, ci = summarize(per_task)
    return Report(
        method=method.kind,
        config=method.describe(),
        n_way=cfg.n_way,
        k_shot=cfg.k_shot,
        n_query=cfg.n_query,
        n_tasks=cfg.n_tasks,
        seed=cfg.seed,
        accuracy=acc,
        ci95=ci,
        per_task=per_task,
        elapsed_seconds=time.perf_counter() - start,
    )


# ------------------------------------------------------------------ sweeps


def alpha_grid(start: float = 0.0, stop: float = 1.0, step: float = 0.05) -> list[float]:
    """Inclusive grid, values rounded to 10 decimals so 0.05 steps land exactly."""
    if step <= 0 or stop < start:
        raise InvalidConfig(f"bad alpha grid {start}:{stop}:{step}")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 10) for i in range(n)]


@dataclass(frozen=True)
class SweepGrid:
    method: str = CBM
    alphas: tuple[float, ...] = tuple(alpha_grid())
    variants: tuple[tuple[str, bool, str], ...] = ((CbmConfig().variant),)
    k_values: tuple[int, ...] = (10,)
    c_prime_values: tuple[int, ...] = (63,)
    l2_values: tuple[bool, ...] = (False,)
    reg: float = 1e-3

    def __post_init__(self):
        if self.method not in (CBM, CBM_LLE):
            raise InvalidConfig("sweeps cover the cbm and cbm_lle methods")
        if not self.alphas or not self.variants:
            raise InvalidConfig("sweep grid must be non-empty")
        if self.method == CBM_LLE and not (self.k_values and self.c_prime_values and self.l2_values):
            raise InvalidConfig("cbm_lle sweep needs k, c_prime and l2 values")
        for v in self.variants:
            CbmConfig(*v)  # validates the combination

    @classmethod
    def all_variants(cls, **kw) -> "SweepGrid":
        return cls(variants=tuple(table5_variants()), **kw)

    def lle_configs(self) -> list[LleConfig | None]:
        if self.method == CBM:
            return [None]
        return [
            LleConfig(k=k, c_prime=cp, l2_normalize=l2, reg=self.reg)
            for l2 in self.l2_values
            for k in self.k_values
            for cp in self.c_prime_values
        ]

    def methods(self) -> Iterable[Method]:
        """Every grid point in grid order (variant, LLE setting, alpha)."""
        for v in self.variants:
            for lle in self.lle_configs():
                for a in self.alphas:
                    yield Method(self.method, CbmConfig(*v, alpha=a), lle)


@dataclass
class SweepResult:
    ranked: list[tuple[Method, Report]]

    @property
    def best(self) -> tuple[Method, Report]:
        return self.ranked[0]

    def rows(self) -> list[dict]:
        out = []
        for rank, (m, r) in enumerate(self.ranked, start=1):
            lle = m.lle
            out.append(
                {
                    "rank": rank,
                    "method": m.kind,
                    "sigma_prime": m.cbm.sigma_prime,
                    "softmax": int(m.cbm.apply_softmax),
                    "sigma": m.cbm.sigma,
                    "alpha": m.cbm.alpha,
                    "l2_normalize": "" if lle is None else int(lle.l2_normalize),
                    "k": "" if lle is None else lle.k,
                    "c_prime": "" if lle is None else lle.c_prime,
                    "accuracy": repr(r.accuracy),
                    "ci95": repr(r.ci95),
                }
            )
        return out

    def to_csv(self) -> str:
        rows = self.rows()
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        return buf.getvalue()


def sweep(
    novel: EmbeddingDataset,
    base: BaseMatrix,
    grid: SweepGrid,
    cfg: ProtocolConfig,
    threads: int = 1,
) -> SweepResult:
    """Evaluate every grid point on the same task set and rank by accuracy.

    The per-task scoring terms are computed once per (variant, LLE setting)
    and reused across the alpha axis; accuracies equal those of separate
    :func:`evaluate` calls.
    """
    cfg.validate(novel)
    results = []
    order = 0
    for v in grid.variants:
        for lle in grid.lle_configs():
            start = time.perf_counter()
            model = fit_lle(base, lle) if lle is not None else None
            scorer = _Scorer(base, grid.method, CbmConfig(*v, alpha=1.0), model)
            acc_table = _run_tasks(novel, cfg, scorer, list(grid.alphas), threads)
            elapsed = (time.perf_counter() - start) / len(grid.alphas)
            for j, a in enumerate(grid.alphas):
                m = Method(grid.method, CbmConfig(*v, alpha=a), lle)
                per_task = acc_table[:, j].copy()
                acc, ci = summarize(per_task)
                rep = Report(m.kind, m.describe(), cfg.n_way, cfg.k_shot, cfg.n_query, cfg.n_tasks,
                             cfg.seed, acc, ci, per_task, elapsed)
                results.append((order, m, rep))
                order += 1
    results.sort(key=lambda t: (-t[2].accuracy, t[0]))
    return SweepResult([(m, r) for _, m, r in results])
