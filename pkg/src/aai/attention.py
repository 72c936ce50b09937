"""Dense attention primitives over float64 matrices.

Scores are ``q k^T / sqrt(d)``, weights are a row-wise softmax of scores plus an
additive mask whose ``-inf`` entries force exact zeros, and the head output is
the weight-mixed value rows.
"""

from __future__ import annotations

import math

import numpy as np

from ._backend import kernels
from .errors import ShapeError

NEG_INF = -np.inf


def as_matrix(x, name="matrix") -> np.ndarray:
    """Return ``x`` as a 2-D float64 array, raising ShapeError otherwise."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def scaled_dot_product(q, k, head_dim: int) -> np.ndarray:
    """Scores ``S[i, j] = <q_i, k_j> / sqrt(head_dim)``.

    ``q`` and ``k`` may have different row counts (a single decode query
    against a cache of keys) but must share their column count.
    """
    q = as_matrix(q, "q")
    k = as_matrix(k, "k")
    if q.shape[1] != k.shape[1]:
        raise ShapeError(f"q has {q.shape[1]} columns but k has {k.shape[1]}")
    if head_dim <= 0:
        raise ShapeError(f"head_dim must be positive, got {head_dim}")
    return (q @ k.T) / math.sqrt(head_dim)


def masked_softmax(S, M=None) -> np.ndarray:
    """Row-wise ``softmax(S + M)``.

    Max-subtracted per row. Entries where ``S + M`` is ``-inf`` come out as
    exactly 0. Raises DegenerateRowError if a row is masked everywhere.
    """
    S = as_matrix(S, "S")
    if M is not None:
        M = as_matrix(M, "M")
        if M.shape != S.shape:
            raise ShapeError(f"mask shape {M.shape} does not match scores {S.shape}")
    if not np.isfinite(S).all():
        raise ShapeError("scores must be finite; put -inf in the mask instead")
    return kernels.masked_softmax(S, M)


def softmax(S) -> np.ndarray:
    return masked_softmax(S, None)


def attend(A, v) -> np.ndarray:
    A = as_matrix(A, "A")
    v = as_matrix(v, "v")
    if A.shape[1] != v.shape[0]:
        raise ShapeError(f"A has {A.shape[1]} columns but v has {v.shape[0]} rows")
    return A @ v
