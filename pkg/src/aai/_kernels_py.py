"""Pure NumPy implementations of the hot kernels.

Mirrors the compiled ``aai._kernels`` module function for function. Integer
results (pattern counts) are identical across the two; floating results agree
to rounding of the summation order.
"""

import numpy as np

from .errors import DegenerateInputError, DegenerateRowError

NAME = "python"


def pattern_counts(H):
    """Return ``(active, diagonal, column, row)`` adjacency counts of a 0/1 map.

    ``column`` counts vertically adjacent active cells ``H[i,j] & H[i+1,j]``;
    ``row`` counts horizontally adjacent cells ``H[i,j] & H[i,j+1]``.
    """
    H = np.asarray(H, dtype=bool)
    active = int(H.sum())
    diagonal = int(np.count_nonzero(H[:-1, :-1] & H[1:, 1:]))
    column = int(np.count_nonzero(H[:-1, :] & H[1:, :]))
    row = int(np.count_nonzero(H[:, :-1] & H[:, 1:]))
    return active, diagonal, column, row


def weight_pattern_counts(A, threshold):
    A = np.asarray(A, dtype=np.float64)
    H = np.tril(A > threshold)
    return pattern_counts(H)


def masked_softmax(S, M=None):
    S = np.asarray(S, dtype=np.float64)
    Z = S if M is None else S + np.asarray(M, dtype=np.float64)
    live = Z != -np.inf
    ok = live.any(axis=1)
    if not ok.all():
        raise DegenerateRowError(f"row {int(np.argmin(ok))} is fully masked")
    m = np.max(np.where(live, Z, -np.inf), axis=1, keepdims=True)
    E = np.zeros_like(Z)
    np.exp(Z - m, out=E, where=live)
    return E / E.sum(axis=1, keepdims=True)


def causal_median(S):
    S = np.asarray(S, dtype=np.float64)
    if S.size == 0:
        raise DegenerateInputError("median over an empty score matrix")
    rows, cols = np.tril_indices(S.shape[0], m=S.shape[1])
    values = S[rows, cols]
    if values.size == 0:
        raise DegenerateInputError("no causal entries to take a median over")
    return _median(values)


def full_median(S):
    values = np.asarray(S, dtype=np.float64).ravel()
    if values.size == 0:
        raise DegenerateInputError("median over an empty score matrix")
    return _median(values)


def _median(values):
    n = values.size
    half = n // 2
    if n % 2:
        return float(np.partition(values, half)[half])
    part = np.partition(values, (half - 1, half))
    return float((part[half - 1] + part[half]) / 2)
