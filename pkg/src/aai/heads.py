"""Head pattern analysis: binarize attention, score directions, classify, select.

A head's binarized map ``H`` keeps causal cells whose weight exceeds a
threshold. Three adjacency ratios describe it:

* diagonal: active cells whose down-right neighbour is active,
* vertical / horizontal: active cells with an active neighbour along a key
  column or along a query row.

Which of the last two is called "vertical" depends on ``orientation``.
``"prose"`` (default) treats a key column attended by consecutive queries as
vertical, which is the shape of an aggregation head. ``"literal"`` swaps the
two, pairing "vertical" with same-row neighbours.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from ._backend import kernels
from .errors import ConfigError, IncompleteTraceError, ShapeError, UnclassifiableError

ORIENTATIONS = ("prose", "literal")


class HeadClass(str, enum.Enum):
    ANCHOR_OR_COPY = "anchor_or_copy"
    AGGREGATION = "aggregation"
    OTHER = "other"


class SelectionMode(str, enum.Enum):
    AAI = "aai"
    AAI_AGG = "aai_agg"
    ALL_HEADS = "all_heads"
    BASELINE = "baseline"

    @classmethod
    def parse(cls, value) -> "SelectionMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).replace("-", "_").lower())
        except ValueError:
            choices = ", ".join(m.value for m in cls)
            raise ConfigError(f"unknown selection mode {value!r} (choose from {choices})") from None


@dataclass(frozen=True)
class SelectionThresholds:
    binarize_threshold: float = 0.04
    diag_threshold: float = 0.3
    vert_threshold: float = 0.6
    other_threshold: float = 0.3
    orientation: str = "prose"

    def __post_init__(self):
        if not self.binarize_threshold > 0:
            raise ConfigError("binarize_threshold must be > 0")
        if self.orientation not in ORIENTATIONS:
            raise ConfigError(f"orientation must be one of {ORIENTATIONS}")


@dataclass(frozen=True)
class BinaryAttentionMap:
    bits: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.bits.shape[0]

    @property
    def active_count(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True)
class HeadPattern:
    """Directional scores of one head. Scores are None when no cell is active."""

    diagonal: Optional[float]
    vertical: Optional[float]
    horizontal: Optional[float]
    active_count: int

    @property
    def defined(self) -> bool:
        return self.active_count > 0

    def as_tuple(self):
        return (self.diagonal, self.vertical, self.horizontal)


@dataclass(frozen=True)
class HeadRecord:
    layer: int
    head: int
    pattern: HeadPattern
    head_class: HeadClass


def binarize(A, threshold: float) -> BinaryAttentionMap:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError(f"attention map must be square, got shape {A.shape}")
    if not threshold > 0:
        raise ConfigError("threshold must be > 0")
    bits = np.tril(A > threshold)
    bits.setflags(write=False)
    return BinaryAttentionMap(bits)


def pattern_from_counts(active, diagonal, column, row, orientation="prose") -> HeadPattern:
    if orientation not in ORIENTATIONS:
        raise ConfigError(f"orientation must be one of {ORIENTATIONS}")
    if active == 0:
        return HeadPattern(None, None, None, 0)
    vertical, horizontal = (column, row) if orientation == "prose" else (row, column)
    return HeadPattern(diagonal / active, vertical / active, horizontal / active, active)


def directional_scores(H: BinaryAttentionMap, orientation: str = "prose") -> HeadPattern:
    return pattern_from_counts(*kernels.pattern_counts(H.bits), orientation=orientation)


def attention_pattern(A, thresholds: SelectionThresholds = SelectionThresholds()) -> HeadPattern:
    """Binarize and score in one pass (no boolean map is kept)."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError(f"attention map must be square, got shape {A.shape}")
    counts = kernels.weight_pattern_counts(A, thresholds.binarize_threshold)
    return pattern_from_counts(*counts, orientation=thresholds.orientation)


def classify_head(p: HeadPattern, t: SelectionThresholds = SelectionThresholds()) -> HeadClass:
    if not p.defined:
        raise UnclassifiableError("head has no active cells above the binarization threshold")
    if p.diagonal > t.diag_threshold:
        return HeadClass.ANCHOR_OR_COPY
    if (
        p.vertical > t.vert_threshold
        and p.horizontal < t.other_threshold
        and p.diagonal < t.other_threshold
    ):
        return HeadClass.AGGREGATION
    return HeadClass.OTHER


class HeadTable(list):
    """Per-head pattern records in (layer, head) order."""

    def __init__(self, records: Iterable[HeadRecord] = (), num_layers=None, num_heads=None):
        super().__init__(records)
        self.num_layers = num_layers
        self.num_heads = num_heads

    @property
    def heads(self):
        return [(r.layer, r.head) for r in self]

    def to_tsv(self) -> str:
        lines = ["layer\thead\ts_diag\ts_vert\ts_horiz\tclass"]
        for r in self:
            scores = ["nan" if s is None else repr(s) for s in r.pattern.as_tuple()]
            lines.append("\t".join([str(r.layer), str(r.head), *scores, r.head_class.value]))
        return "\n".join(lines) + "\n"

    def to_records(self) -> list:
        return [
            {
                "layer": r.layer,
                "head": r.head,
                "s_diag": r.pattern.diagonal,
                "s_vert": r.pattern.vertical,
                "s_horiz": r.pattern.horizontal,
                "active": r.pattern.active_count,
                "class": r.head_class.value,
            }
            for r in self
        ]

    def to_json(self) -> str:
        return json.dumps(
            {"num_layers": self.num_layers, "num_heads": self.num_heads, "heads": self.to_records()},
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "HeadTable":
        data = json.loads(text)
        records = []
        for rec in data["heads"]:
            pattern = HeadPattern(rec["s_diag"], rec["s_vert"], rec["s_horiz"], rec["active"])
            records.append(HeadRecord(rec["layer"], rec["head"], pattern, HeadClass(rec["class"])))
        return cls(records, data.get("num_layers"), data.get("num_heads"))


def analyze_model(trace, t: SelectionThresholds = SelectionThresholds()) -> HeadTable:
    """Classify every head of an AttentionTrace.

    Heads with no active cell get undefined scores and class ``other``.
    """
    records = []
    for layer in range(trace.num_layers):
        for head in range(trace.num_heads):
            A = trace.weights.get((layer, head))
            if A is None:
                raise IncompleteTraceError(f"trace has no weight matrix for layer {layer} head {head}")
            pattern = attention_pattern(A, t)
            head_class = classify_head(pattern, t) if pattern.defined else HeadClass.OTHER
            records.append(HeadRecord(layer, head, pattern, head_class))
    return HeadTable(records, trace.num_layers, trace.num_heads)


def select_heads(table: HeadTable, mode) -> frozenset:
    mode = SelectionMode.parse(mode)
    if mode is SelectionMode.BASELINE:
        return frozenset()
    if mode is SelectionMode.ALL_HEADS:
        return frozenset(table.heads)
    wanted = HeadClass.ANCHOR_OR_COPY if mode is SelectionMode.AAI else HeadClass.AGGREGATION
    return frozenset((r.layer, r.head) for r in table if r.head_class is wanted)
