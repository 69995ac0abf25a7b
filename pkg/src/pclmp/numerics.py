"""Small deterministic vector kernels.

Everything works in float64. Arg-extrema break ties towards the lowest index,
which is what ``np.argmax``/``np.argmin`` already do.
"""
from __future__ import annotations

import numpy as np

from .errors import DimMismatch, EmptyInput, ZeroVector

ZERO_NORM = 1e-12


def as_vec(v) -> np.ndarray:
    return np.asarray(v, dtype=np.float64)


def l2_normalize(v) -> np.ndarray:
    v = as_vec(v)
    n = float(np.sqrt(np.dot(v, v)))
    if not np.isfinite(n) or n <= ZERO_NORM:
        raise ZeroVector(f"cannot normalize vector with norm {n:g}")
    return v / n


def normalize_rows(x) -> np.ndarray:
    """Row-wise ``l2_normalize`` for a 2-D array."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    if np.any(~np.isfinite(norms)) or np.any(norms <= ZERO_NORM):
        raise ZeroVector("cannot normalize a zero row")
    return x / norms[:, None]


def euclidean_dist(a, b) -> float:
    a, b = as_vec(a), as_vec(b)
    if a.shape != b.shape:
        raise DimMismatch(f"{a.shape} vs {b.shape}")
    d = a - b
    return float(np.sqrt(np.dot(d, d)))


def pairwise_sq_dists(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between the rows of ``x`` and ``y``."""
    xx = np.einsum("ij,ij->i", x, x)[:, None]
    yy = np.einsum("ij,ij->i", y, y)[None, :]
    return np.maximum(xx + yy - 2.0 * (x @ y.T), 0.0)


def stable_softmax(logits) -> np.ndarray:
    z = as_vec(logits)
    if z.size == 0:
        raise EmptyInput("softmax of an empty sequence")
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits) -> np.ndarray:
    z = as_vec(logits)
    if z.shape[-1] == 0:
        raise EmptyInput("log-softmax of an empty sequence")
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def argmax_idx(values) -> int:
    v = as_vec(values)
    if v.size == 0:
        raise EmptyInput("argmax of an empty sequence")
    return int(np.argmax(v))


def argmin_idx(values) -> int:
    v = as_vec(values)
    if v.size == 0:
        raise EmptyInput("argmin of an empty sequence")
    return int(np.argmin(v))
