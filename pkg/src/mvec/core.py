"""Deterministic numeric primitives shared by every other module.

Vectors and matrices are plain ``numpy.float64`` arrays; the helpers here
add the validation and the exact conventions (normalization guard, cosine
clamping, prefix slicing) that the rest of the toolkit relies on.  Random
streams are PCG64 generators derived from a single experiment seed plus a
named purpose, so each stage of a pipeline draws from its own reproducible
sequence.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateInputError, DimensionError

#: Norm guard used by every normalization in the package.
NORM_EPS = 1e-12

# Fixed registry of per-purpose stream keys.  New purposes get new ids;
# existing ids never change, or saved seeds would stop reproducing runs.
_PURPOSES = {
    "data": 1,
    "init": 2,
    "shuffle": 3,
    "trials": 4,
    "queries": 5,
    "gradcheck": 6,
}


def rng_for(seed: int, purpose: str) -> np.random.Generator:
    """Return a PCG64 generator for one named purpose of an experiment.

    Identical ``(seed, purpose)`` pairs yield bit-identical streams across
    runs and platforms.  Streams for different purposes are independent,
    so e.g. drawing more data does not shift parameter initialization.
    """
    if purpose not in _PURPOSES:
        raise ValueError(f"unknown rng purpose {purpose!r}; known: {sorted(_PURPOSES)}")
    seq = np.random.SeedSequence(seed, spawn_key=(_PURPOSES[purpose],))
    return np.random.Generator(np.random.PCG64(seq))


def as_vector(v, name: str = "vector") -> np.ndarray:
    """Coerce to a 1-D float64 array, rejecting empty or misshaped input."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size == 0:
        raise DimensionError(f"{name} must be nonempty")
    return arr


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float64 array."""
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def l2_normalize(v, eps: float = NORM_EPS) -> np.ndarray:
    """Return ``v / max(||v||, eps)``.

    The guard makes the zero vector a fixed point instead of an error;
    for any input with norm >= eps the result has unit norm to ~1e-12.
    """
    arr = as_vector(v)
    norm = float(np.linalg.norm(arr))
    return arr / max(norm, eps)


def cosine(a, b) -> float:
    """Cosine similarity of two nonzero vectors, clamped to [-1, 1]."""
    va = as_vector(a, "a")
    vb = as_vector(b, "b")
    if va.shape != vb.shape:
        raise DimensionError(f"length mismatch: {va.size} vs {vb.size}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na < NORM_EPS or nb < NORM_EPS:
        raise DegenerateInputError("cosine undefined for (near-)zero vector")
    return float(np.clip(np.dot(va, vb) / (na * nb), -1.0, 1.0))


def prefix(v, m: int) -> np.ndarray:
    """First ``m`` components of ``v``: a pure slice, no re-normalization."""
    arr = as_vector(v)
    if not 1 <= m <= arr.size:
        raise DimensionError(f"prefix length {m} out of range [1, {arr.size}]")
    return arr[:m]


def sq_l2_distance(a, b) -> float:
    """Squared euclidean distance; for unit vectors equals 2 - 2*cosine."""
    va = as_vector(a, "a")
    vb = as_vector(b, "b")
    if va.shape != vb.shape:
        raise DimensionError(f"length mismatch: {va.size} vs {vb.size}")
    diff = va - vb
    return float(np.dot(diff, diff))


def normalize_rows(mat: np.ndarray, eps: float = NORM_EPS) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalize a matrix; returns (unit rows, original row norms).

    Row norms below ``eps`` are clamped, mirroring :func:`l2_normalize`.
    """
    norms = np.linalg.norm(mat, axis=1)
    safe = np.maximum(norms, eps)
    return mat / safe[:, None], norms
