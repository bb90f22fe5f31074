"""Hot kernels behind a backend switch.

``CBMFS_BACKEND`` selects the implementation: ``numba`` (compiled loops),
``numpy`` (vectorized reference) or ``auto`` (numba when importable).
All kernels take float64 C-contiguous row-major arrays.
"""

import importlib
import os
import warnings

BACKENDS = ("numba", "numpy")


def _numba_available():
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def resolve_backend(name=None):
    name = (name or os.environ.get("CBMFS_BACKEND", "auto")).strip().lower()
    if name == "auto":
        return "numba" if _numba_available() else "numpy"
    if name not in BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}; expected one of {BACKENDS} or 'auto'")
    if name == "numba" and not _numba_available():
        warnings.warn("numba requested but not importable; using numpy kernels", RuntimeWarning)
        return "numpy"
    return name


def load_backend(name=None):
    """Return the kernel module for ``name`` (or the env-selected one)."""
    return importlib.import_module(f"cbmfs.kernels._{resolve_backend(name)}")


BACKEND = resolve_backend()
_impl = load_backend(BACKEND)

pairwise_cosine = _impl.pairwise_cosine
pairwise_neg_euclidean = _impl.pairwise_neg_euclidean
pairwise_neg_kl = _impl.pairwise_neg_kl
softmax_rows = _impl.softmax_rows
knn_rows = _impl.knn_rows
barycenter_weights = _impl.barycenter_weights

__all__ = [
    "BACKEND",
    "BACKENDS",
    "barycenter_weights",
    "knn_rows",
    "load_backend",
    "pairwise_cosine",
    "pairwise_neg_euclidean",
    "pairwise_neg_kl",
    "resolve_backend",
    "softmax_rows",
]
