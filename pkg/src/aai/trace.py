"""Attention traces and their on-disk format.

File layout::

    AAITRACE/1 {"version": 1, "num_layers": ..., "num_heads": ..., "seq_len": ...,
                "tokens": [...], "has_scores": ..., "kind": "attention"}\\n
    <weights: num_layers * num_heads matrices, layer-major, head-minor>
    <scores:  same layout, present iff has_scores>

Every matrix is ``seq_len x seq_len`` little-endian float64, row-major. The
header is one line of UTF-8 JSON. ``kind`` is ``"attention"`` for weight traces
(rows must sum to 1) or ``"mask"`` for exported additive masks (may hold -inf).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import IncompleteTraceError, TraceFormatError

MAGIC = "AAITRACE/1"
VERSION = 1
KINDS = ("attention", "mask")
IMPORT_ROW_TOLERANCE = 1e-6
_DTYPE = np.dtype("<f8")

HeadKey = Tuple[int, int]


def token_surface(token_id: int) -> str:
    if 32 <= token_id < 127:
        return chr(token_id)
    return f"<0x{token_id:02X}>" if token_id < 256 else f"<special:{token_id}>"


@dataclass
class AttentionTrace:
    num_layers: int
    num_heads: int
    seq_len: int
    tokens: List[str]
    weights: Dict[HeadKey, np.ndarray] = field(repr=False)
    scores: Optional[Dict[HeadKey, np.ndarray]] = field(default=None, repr=False)
    kind: str = "attention"

    def heads(self):
        return [(l, h) for l in range(self.num_layers) for h in range(self.num_heads)]

    def validate(self, tolerance: float = IMPORT_ROW_TOLERANCE) -> None:
        if self.kind not in KINDS:
            raise TraceFormatError(f"unknown trace kind {self.kind!r}")
        if len(self.tokens) != self.seq_len:
            raise TraceFormatError(f"{len(self.tokens)} tokens for seq_len {self.seq_len}")
        shape = (self.seq_len, self.seq_len)
        for key in self.heads():
            for name, table in (("weight", self.weights), ("score", self.scores)):
                if table is None:
                    continue
                if key not in table:
                    raise IncompleteTraceError(f"missing {name} matrix for layer {key[0]} head {key[1]}")
                if table[key].shape != shape:
                    raise TraceFormatError(f"{name} matrix {key} has shape {table[key].shape}")
            if self.kind == "attention":
                sums = self.weights[key].sum(axis=1)
                worst = float(np.max(np.abs(sums - 1.0))) if sums.size else 0.0
                if not worst <= tolerance:
                    raise TraceFormatError(
                        f"layer {key[0]} head {key[1]}: row sums deviate from 1 by {worst:.3g}"
                    )

    def header(self) -> dict:
        return {
            "version": VERSION,
            "num_layers": self.num_layers,
            "num_heads": self.num_heads,
            "seq_len": self.seq_len,
            "tokens": list(self.tokens),
            "has_scores": self.scores is not None,
            "kind": self.kind,
        }

    def to_bytes(self) -> bytes:
        header = MAGIC + " " + json.dumps(self.header(), ensure_ascii=True) + "\n"
        chunks = [header.encode("utf-8")]
        tables = [self.weights] + ([self.scores] if self.scores is not None else [])
        for table in tables:
            for key in self.heads():
                chunks.append(np.ascontiguousarray(table[key], dtype=_DTYPE).tobytes())
        return b"".join(chunks)

    @classmethod
    def from_bytes(cls, data: bytes, tolerance: float = IMPORT_ROW_TOLERANCE) -> "AttentionTrace":
        newline = data.find(b"\n")
        if newline < 0:
            raise TraceFormatError("missing header line")
        line = data[:newline].decode("utf-8", errors="replace")
        if not line.startswith(MAGIC + " "):
            raise TraceFormatError(f"bad magic; expected {MAGIC!r}")
        try:
            meta = json.loads(line[len(MAGIC) + 1 :])
        except json.JSONDecodeError as exc:
            raise TraceFormatError(f"header is not valid JSON: {exc}") from None
        try:
            if meta["version"] != VERSION:
                raise TraceFormatError(f"unsupported trace version {meta['version']}")
            L, n_layers, n_heads = int(meta["seq_len"]), int(meta["num_layers"]), int(meta["num_heads"])
            tokens, has_scores = list(meta["tokens"]), bool(meta["has_scores"])
        except (KeyError, TypeError, ValueError) as exc:
            raise TraceFormatError(f"malformed header field: {exc}") from None
        kind = meta.get("kind", "attention")
        if min(L, n_layers, n_heads) < 1:
            raise TraceFormatError("header dimensions must be positive")

        payload = memoryview(data)[newline + 1 :]
        per_matrix = L * L * _DTYPE.itemsize
        n_tables = 2 if has_scores else 1
        expected = per_matrix * n_layers * n_heads * n_tables
        if len(payload) < expected:
            present = len(payload) // per_matrix
            raise IncompleteTraceError(
                f"header declares {n_layers * n_heads * n_tables} matrices, payload holds {present}"
            )
        if len(payload) > expected:
            raise TraceFormatError(f"{len(payload) - expected} trailing bytes after the last matrix")

        keys = [(l, h) for l in range(n_layers) for h in range(n_heads)]
        tables = []
        offset = 0
        for _ in range(n_tables):
            table = {}
            for key in keys:
                arr = np.frombuffer(payload[offset : offset + per_matrix], dtype=_DTYPE).reshape(L, L)
                table[key] = arr.astype(np.float64)
                offset += per_matrix
            tables.append(table)
        trace = cls(n_layers, n_heads, L, tokens, tables[0], tables[1] if has_scores else None, kind)
        trace.validate(tolerance)
        return trace

    def equals(self, other: "AttentionTrace") -> bool:
        """Bit-exact equality of metadata and every matrix."""
        return self.to_bytes() == other.to_bytes()


def export_trace(trace: AttentionTrace, path) -> None:
    Path(path).write_bytes(trace.to_bytes())


def import_trace(path, tolerance: float = IMPORT_ROW_TOLERANCE) -> AttentionTrace:
    return AttentionTrace.from_bytes(Path(path).read_bytes(), tolerance)


def parse_matrix_ref(ref: str):
    """Split ``"<trace path>:<layer>:<head>"``."""
    try:
        path, layer, head = ref.rsplit(":", 2)
        return path, int(layer), int(head)
    except ValueError:
        raise TraceFormatError(f"matrix reference must look like trace.bin:LAYER:HEAD, got {ref!r}") from None
