"""Intervention masks.

For a selected head the additive pre-softmax mask is

    final = causal + noref + ref

where ``causal`` blocks future keys, ``noref`` puts ``-inf`` on every noref pair
and ``ref`` puts ``c * median(S) + b`` on every ref pair. ``S`` is that head's
own score matrix in the current forward pass, so the boost tracks the scale of
each head. Heads that are not selected get the causal mask alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .attention import NEG_INF, as_matrix
from .errors import BoundsError, ConfigError, ShapeError
from .rules import ReferencePairSets

MEDIAN_SCOPES = ("causal_entries", "all_entries")


@dataclass(frozen=True)
class ReweightParams:
    coefficient: float = 1.0
    bias: float = 0.0
    median_scope: str = "causal_entries"

    def __post_init__(self):
        if self.median_scope not in MEDIAN_SCOPES:
            raise ConfigError(f"median_scope must be one of {MEDIAN_SCOPES}")


@dataclass(frozen=True)
class HeadMaskPlan:
    selected_heads: frozenset = frozenset()
    pairs: ReferencePairSets = field(default_factory=ReferencePairSets.empty)
    params: ReweightParams = ReweightParams()
    prefill_only: bool = True

    @classmethod
    def baseline(cls) -> "HeadMaskPlan":
        return cls()

    def is_selected(self, layer: int, head: int) -> bool:
        return (layer, head) in self.selected_heads


def causal_mask(L: int) -> np.ndarray:
    if L < 1:
        raise ShapeError("sequence length must be >= 1")
    M = np.zeros((L, L))
    M[np.triu_indices(L, k=1)] = NEG_INF
    return M


def _check_bounds(L, rows, cols, what):
    if rows.size and (rows.max() >= L or cols.max() >= L or min(rows.min(), cols.min()) < 0):
        raise BoundsError(f"{what} pair index out of range for length {L}")


def noref_mask(L: int, pairs: ReferencePairSets) -> np.ndarray:
    M = np.zeros((L, L))
    rows, cols = pairs.noref_arrays()
    _check_bounds(L, rows, cols, "noref")
    M[rows, cols] = NEG_INF
    return M


def median_of_scores(S, scope: str = "causal_entries") -> float:
    S = as_matrix(S, "S")
    if scope == "causal_entries":
        return kernels.causal_median(S)
    if scope == "all_entries":
        return kernels.full_median(S)
    raise ConfigError(f"median_scope must be one of {MEDIAN_SCOPES}")


def reweight_value(S, params: ReweightParams) -> float:
    """The additive boost ``c * median(S) + b`` for one head."""
    return params.coefficient * median_of_scores(S, params.median_scope) + params.bias


def ref_mask(S, pairs: ReferencePairSets, params: ReweightParams = ReweightParams()) -> np.ndarray:
    S = as_matrix(S, "S")
    L = S.shape[0]
    M = np.zeros_like(S)
    rows, cols = pairs.ref_arrays()
    if rows.size == 0:
        return M
    _check_bounds(L, rows, cols, "ref")
    M[rows, cols] = reweight_value(S, params)
    return M


def compose_final(S, plan: HeadMaskPlan, layer: int, head: int, L: int) -> np.ndarray:
    S = as_matrix(S, "S")
    if S.shape != (L, L):
        raise ShapeError(f"scores have shape {S.shape}, expected {(L, L)}")
    causal = causal_mask(L)
    if not plan.is_selected(layer, head):
        return causal
    return ref_mask(S, plan.pairs, plan.params) + noref_mask(L, plan.pairs) + causal
