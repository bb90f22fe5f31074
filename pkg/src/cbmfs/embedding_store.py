"""Feature maps, pooled embeddings, class-grouped datasets and the base matrix.

Vectors are stored as float32 (the on-disk precision) and widened to float64
whenever arithmetic happens.

CBME file layout (all integers little-endian)::

    b"CBME" | u32 version=1 | u32 dim | u8 role (0=base, 1=novel) | u32 n_classes
    per class: u32 class_id | u32 n_vectors | n_vectors*dim float32, row-major

An optional ``<file>.labels.json`` sidecar maps class_id -> label.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    DimensionMismatch,
    EmptyClass,
    InvalidSpec,
    RoleMismatch,
    TruncatedFile,
    UnsupportedVersion,
)

MAGIC = b"CBME"
FORMAT_VERSION = 1
ROLES = ("base", "novel")

_HEADER = struct.Struct("<4sIIBI")
_CLASS_HEADER = struct.Struct("<II")


def _finite_or_raise(arr, what):
    if not np.all(np.isfinite(arr)):
        raise DimensionMismatch(f"{what} contains non-finite entries")


@dataclass(frozen=True)
class FeatureMap:
    """A ``c x r`` grid; column ``i`` is the local vector at position ``i``."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionMismatch(f"feature map must be a non-empty 2-D grid, got shape {arr.shape}")
        _finite_or_raise(arr, "feature map")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def resolution(self) -> int:
        return self.data.shape[1]


def gap(fmap: FeatureMap | np.ndarray) -> np.ndarray:
    """Global average pooling: the mean of the map's local vectors."""
    if not isinstance(fmap, FeatureMap):
        fmap = FeatureMap(fmap)
    return fmap.data.mean(axis=1)


@dataclass(frozen=True)
class EmbeddingClass:
    class_id: int
    vectors: np.ndarray
    label: str | None = None

    def __len__(self):
        return self.vectors.shape[0]


@dataclass(frozen=True)
class EmbeddingDataset:
    dim: int
    role: str
    classes: tuple[EmbeddingClass, ...]

    def __post_init__(self):
        if self.role not in ROLES:
            raise RoleMismatch(f"role must be one of {ROLES}, got {self.role!r}")
        if self.dim < 1:
            raise DimensionMismatch("dim must be positive")
        fixed = []
        seen = set()
        for cls in self.classes:
            cid = int(cls.class_id)
            if cid in seen:
                raise DimensionMismatch(f"duplicate class_id {cid}")
            seen.add(cid)
            vecs = np.asarray(cls.vectors, dtype=np.float32)
            if vecs.ndim != 2 or vecs.shape[1] != self.dim:
                raise DimensionMismatch(
                    f"class {cid}: vectors must have shape (n, {self.dim}), got {vecs.shape}"
                )
            if vecs.shape[0] == 0:
                raise EmptyClass(f"class {cid} has no vectors")
            _finite_or_raise(vecs, f"class {cid}")
            vecs = np.ascontiguousarray(vecs)
            vecs.setflags(write=False)
            fixed.append(EmbeddingClass(cid, vecs, cls.label))
        object.__setattr__(self, "classes", tuple(fixed))

    @classmethod
    def from_arrays(cls, vectors, labels, role="novel"):
        """Group a flat ``(n, c)`` array by integer ``labels`` (ascending class_id)."""
        vectors = np.asarray(vectors)
        labels = np.asarray(labels)
        ids = np.unique(labels)
        classes = tuple(EmbeddingClass(int(i), vectors[labels == i]) for i in ids)
        return cls(vectors.shape[1], role, classes)

    @property
    def class_ids(self) -> list[int]:
        return [c.class_id for c in self.classes]

    @property
    def counts(self) -> list[int]:
        return [len(c) for c in self.classes]

    def __len__(self):
        return len(self.classes)

    def equals(self, other: "EmbeddingDataset") -> bool:
        """Structural equality with bitwise comparison of vector payloads."""
        if (self.dim, self.role, len(self)) != (other.dim, other.role, len(other)):
            return False
        for a, b in zip(self.classes, other.classes):
            if a.class_id != b.class_id or a.label != b.label or a.vectors.shape != b.vectors.shape:
                return False
            if a.vectors.tobytes() != b.vectors.tobytes():
                return False
        return True


@dataclass(frozen=True)
class BaseMatrix:
    """``c x n_base`` matrix whose column ``i`` is the mean vector of base class ``i``."""

    matrix: np.ndarray
    class_ids: tuple[int, ...]
    columns: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2:
            raise DimensionMismatch("base matrix must be 2-D")
        if m.shape[1] < 2:
            raise DimensionMismatch("base matrix needs at least 2 base classes")
        if len(self.class_ids) != m.shape[1]:
            raise DimensionMismatch("class_ids must align with matrix columns")
        _finite_or_raise(m, "base matrix")
        m = m.copy()
        m.setflags(write=False)
        cols = np.ascontiguousarray(m.T)
        cols.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "class_ids", tuple(int(i) for i in self.class_ids))
        object.__setattr__(self, "columns", cols)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_classes(self) -> int:
        return self.matrix.shape[1]

    def save(self, path):
        np.savez(path, matrix=self.matrix, class_ids=np.asarray(self.class_ids, dtype=np.int64))

    @classmethod
    def load(cls, path):
        try:
            with np.load(path) as z:
                return cls(z["matrix"], tuple(z["class_ids"].tolist()))
        except (KeyError, ValueError) as exc:
            raise BadMagic(f"{path}: not a cached base matrix ({exc})") from exc


def class_mean(vectors) -> np.ndarray:
    """Two-pass mean in float64: plain mean plus a residual correction."""
    v = np.asarray(vectors, dtype=np.float64)
    mu = v.sum(axis=0) / v.shape[0]
    return mu + (v - mu).sum(axis=0) / v.shape[0]


def build_base_matrix(dataset: EmbeddingDataset) -> BaseMatrix:
    if dataset.role != "base":
        raise RoleMismatch(f"base matrix requires a base dataset, got role {dataset.role!r}")
    cols = []
    for cls in dataset.classes:
        if len(cls) == 0:
            raise EmptyClass(f"class {cls.class_id} has no vectors")
        cols.append(class_mean(cls.vectors))
    return BaseMatrix(np.stack(cols, axis=1), tuple(dataset.class_ids))


def split_classes(dataset: EmbeddingDataset, n_first: int):
    """Split by class into two disjoint datasets (e.g. validation / test)."""
    if not 0 < n_first < len(dataset):
        raise InvalidSpec(f"n_first must be in (0, {len(dataset)}), got {n_first}")
    head = EmbeddingDataset(dataset.dim, dataset.role, dataset.classes[:n_first])
    tail = EmbeddingDataset(dataset.dim, dataset.role, dataset.classes[n_first:])
    return head, tail


# ---------------------------------------------------------------- file IO


def labels_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".labels.json")


def save_dataset(dataset: EmbeddingDataset, path) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, dataset.dim, ROLES.index(dataset.role), len(dataset)))
        for cls in dataset.classes:
            fh.write(_CLASS_HEADER.pack(cls.class_id, len(cls)))
            fh.write(cls.vectors.astype("<f4", copy=False).tobytes(order="C"))
    labels = {str(c.class_id): c.label for c in dataset.classes if c.label is not None}
    if labels:
        labels_path(path).write_text(json.dumps(labels, indent=2, sort_keys=True))


def load_dataset(path) -> EmbeddingDataset:
    path = Path(path)
    buf = path.read_bytes()
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadMagic(f"{path}: not a CBME file (magic {buf[:4]!r})")
    if len(buf) < _HEADER.size:
        raise TruncatedFile(f"{path}: header truncated")
    _, version, dim, role, n_classes = _HEADER.unpack_from(buf, 0)
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"{path}: version {version} (supported: {FORMAT_VERSION})")
    if role >= len(ROLES):
        raise RoleMismatch(f"{path}: unknown role byte {role}")
    if dim == 0:
        raise DimensionMismatch(f"{path}: dim is 0")

    labels = {}
    lp = labels_path(path)
    if lp.exists():
        labels = {int(k): v for k, v in json.loads(lp.read_text()).items()}

    offset = _HEADER.size
    classes = []
    for _ in range(n_classes):
        if offset + _CLASS_HEADER.size > len(buf):
            raise TruncatedFile(f"{path}: class header past end of file")
        cid, n = _CLASS_HEADER.unpack_from(buf, offset)
        offset += _CLASS_HEADER.size
        nbytes = n * dim * 4
        if offset + nbytes > len(buf):
            raise TruncatedFile(f"{path}: class {cid} declares {n} vectors but payload is short")
        vecs = np.frombuffer(buf, dtype="<f4", count=n * dim, offset=offset).reshape(n, dim)
        offset += nbytes
        classes.append(EmbeddingClass(cid, vecs.astype(np.float32), labels.get(cid)))
    if offset != len(buf):
        raise DimensionMismatch(f"{path}: {len(buf) - offset} trailing bytes after last class")
    return EmbeddingDataset(dim, ROLES[role], tuple(classes))


# ------------------------------------------------------------ synthetic


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian-cluster generator settings.

    Centers are uniform in ``[-center_scale, center_scale]`` along each of
    ``latent_dim`` random orthonormal directions (all ``dim`` directions when
    ``latent_dim`` is None). ``noise_scale`` is the isotropic per-coordinate
    std of novel samples; ``base_noise_scale`` defaults to the same value.
    """

    dim: int
    n_base: int
    n_novel: int
    samples_per_class: int
    center_scale: float = 1.0
    noise_scale: float = 0.1
    base_noise_scale: float | None = None
    latent_dim: int | None = None

    def validate(self):
        for name in ("dim", "n_base", "n_novel", "samples_per_class"):
            if int(getattr(self, name)) < 1:
                raise InvalidSpec(f"{name} must be positive")
        if not self.center_scale > 0:
            raise InvalidSpec("center_scale must be positive")
        if not self.noise_scale >= 0:
            raise InvalidSpec("noise_scale must be non-negative")
        if self.base_noise_scale is not None and not self.base_noise_scale >= 0:
            raise InvalidSpec("base_noise_scale must be non-negative")
        if self.latent_dim is not None and not 1 <= self.latent_dim <= self.dim:
            raise InvalidSpec("latent_dim must lie in [1, dim]")


def generate_synthetic(spec: SyntheticSpec, seed: int):
    """Return ``(base, novel)`` datasets; class ids are ``0..n_base-1`` then the novel range."""
    spec.validate()
    rng = np.random.default_rng(seed)
    latent = spec.latent_dim or spec.dim
    if latent == spec.dim:
        basis = np.eye(spec.dim)
    else:
        basis, _ = np.linalg.qr(rng.standard_normal((spec.dim, latent)))
    n_total = spec.n_base + spec.n_novel
    coords = rng.uniform(-spec.center_scale, spec.center_scale, size=(n_total, latent))
    centers = coords @ basis.T
    base_noise = spec.noise_scale if spec.base_noise_scale is None else spec.base_noise_scale

    def make(ids, noise, role):
        classes = []
        for cid in ids:
            eps = rng.standard_normal((spec.samples_per_class, spec.dim))
            vecs = centers[cid] + noise * eps
            classes.append(EmbeddingClass(int(cid), vecs.astype(np.float32)))
        return EmbeddingDataset(spec.dim, role, tuple(classes))

    base = make(range(spec.n_base), base_noise, "base")
    novel = make(range(spec.n_base, n_total), spec.noise_scale, "novel")
    return base, novel
