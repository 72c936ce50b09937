"""Rule annotation and reference pair sets.

Prompts tag each rule line as ``# (Rule<n>): <content>``. Every later
``Rule<n>`` mention should look at that rule's content (a *ref* pair) and not at
any other rule's content (a *noref* pair). Pairs are ``(query, key)`` token
indices with ``query >= key``.

Tokens are UTF-8 bytes, the same vocabulary the toy decoder consumes, so pair
indices are model positions. Identifiers are found with a character-level regex
and projected onto the byte tokens that cover them.

Few-shot prompts restart numbering in every example, so rule identifiers are
scoped to *blocks* separated by ``-------`` lines; a mention only resolves to a
rule defined in its own block.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import AnnotationError

IDENTIFIER_RE = re.compile(r"\bRule(\d+)\b")
RULE_LINE_RE = re.compile(r"^#[ \t]*\((Rule(\d+))\):", re.MULTILINE)
BLOCK_SEPARATOR_RE = re.compile(r"^-{3,}[ \t]*$", re.MULTILINE)


@dataclass(frozen=True)
class Token:
    id: int
    start: int  # byte offsets into the UTF-8 encoding
    end: int

    @property
    def surface(self) -> bytes:
        return bytes([self.id])


def tokenize(text: str) -> List[Token]:
    return [Token(b, i, i + 1) for i, b in enumerate(text.encode("utf-8"))]


def detokenize(tokens) -> str:
    return b"".join(t.surface for t in tokens).decode("utf-8")


def token_ids(text: str) -> List[int]:
    return list(text.encode("utf-8"))


def _char_to_byte(text: str) -> np.ndarray:
    """Byte offset of every character index, plus one past the end."""
    widths = [len(c.encode("utf-8")) for c in text]
    return np.concatenate([[0], np.cumsum(widths, dtype=np.int64)]) if widths else np.zeros(1, np.int64)


@dataclass(frozen=True)
class Mention:
    rule_id: int
    block: int
    tokens: range
    defining: bool = False


@dataclass(frozen=True)
class RuleAnnotatedSequence:
    text: str
    tokens: Tuple[Token, ...] = field(repr=False)
    blocks: Tuple[range, ...]  # token ranges
    rule_spans: Dict[Tuple[int, int], range]  # (block, rule id) -> token range
    identifier_mentions: Tuple[Mention, ...]
    dangling_mentions: Tuple[Mention, ...] = ()

    def __len__(self):
        return len(self.tokens)

    def spans_in_block(self, block: int):
        return {rid: span for (b, rid), span in self.rule_spans.items() if b == block}


def annotate_rules(tokens_or_text) -> RuleAnnotatedSequence:
    """Locate rule spans and identifier mentions.

    A rule span runs from the ``Rule<n>`` identifier of its tag line to the end
    of that line (the ``# (`` prefix is excluded, the newline too).
    """
    if isinstance(tokens_or_text, str):
        text = tokens_or_text
        tokens = tuple(tokenize(text))
    else:
        tokens = tuple(tokens_or_text)
        text = detokenize(tokens)
    to_byte = _char_to_byte(text)

    def token_range(c0, c1):
        return range(int(to_byte[c0]), int(to_byte[c1]))

    block_starts = [0] + [m.end() for m in BLOCK_SEPARATOR_RE.finditer(text)]
    block_ends = [m.start() for m in BLOCK_SEPARATOR_RE.finditer(text)] + [len(text)]
    blocks = tuple(token_range(s, e) for s, e in zip(block_starts, block_ends))

    def block_of(char_index):
        lo, hi = 0, len(block_starts) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if block_starts[mid] <= char_index:
                lo = mid
            else:
                hi = mid - 1
        return lo

    spans: Dict[Tuple[int, int], range] = {}
    defining_at = {}
    for m in RULE_LINE_RE.finditer(text):
        rid = int(m.group(2))
        block = block_of(m.start())
        if (block, rid) in spans:
            raise AnnotationError(f"Rule{rid} is defined twice in block {block}")
        line_end = text.find("\n", m.start())
        line_end = len(text) if line_end < 0 else line_end
        spans[(block, rid)] = token_range(m.start(1), line_end)
        defining_at[m.start(1)] = (block, rid)

    mentions, dangling = [], []
    for m in IDENTIFIER_RE.finditer(text):
        rid = int(m.group(1))
        block = block_of(m.start())
        mention = Mention(rid, block, token_range(m.start(), m.end()), m.start() in defining_at)
        (mentions if (block, rid) in spans else dangling).append(mention)

    return RuleAnnotatedSequence(text, tokens, blocks, spans, tuple(mentions), tuple(dangling))


@dataclass(frozen=True)
class ReferencePairSets:
    ref_pairs: frozenset
    noref_pairs: frozenset

    @classmethod
    def empty(cls) -> "ReferencePairSets":
        return cls(frozenset(), frozenset())

    @property
    def is_empty(self) -> bool:
        return not self.ref_pairs and not self.noref_pairs

    def max_index(self) -> int:
        every = [max(p) for p in self.ref_pairs] + [max(p) for p in self.noref_pairs]
        return max(every, default=-1)

    @staticmethod
    def _arrays(pairs):
        if not pairs:
            return np.zeros(0, np.int64), np.zeros(0, np.int64)
        arr = np.array(sorted(pairs), dtype=np.int64)
        return arr[:, 0], arr[:, 1]

    def ref_arrays(self):
        return self._arrays(self.ref_pairs)

    def noref_arrays(self):
        return self._arrays(self.noref_pairs)

    def to_text(self) -> str:
        rows = [(i, j, "REF") for i, j in self.ref_pairs]
        rows += [(i, j, "NOREF") for i, j in self.noref_pairs]
        return "".join(f"{i} {j} {kind}\n" for i, j, kind in sorted(rows))

    @classmethod
    def from_text(cls, text: str) -> "ReferencePairSets":
        ref, noref = set(), set()
        for n, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 3 or parts[2] not in ("REF", "NOREF"):
                raise AnnotationError(f"pair line {n} is malformed: {line!r}")
            (ref if parts[2] == "REF" else noref).add((int(parts[0]), int(parts[1])))
        return cls(frozenset(ref), frozenset(noref))


def build_pair_sets(
    seq: RuleAnnotatedSequence,
    include_defining: bool = True,
    final_block_only: bool = False,
    query_limit: Optional[int] = None,
) -> ReferencePairSets:
    """Build the ref / noref pair sets of an annotated sequence.

    Args:
        include_defining: also bind the identifier on a rule's own tag line.
        final_block_only: only the last block's mentions and rules take part.
        query_limit: ignore mentions whose tokens reach this position or past
            it (used to restrict pairs to a prompt prefix).
    """
    last_block = len(seq.blocks) - 1
    ref, noref = set(), set()
    for mention in seq.identifier_mentions:
        if final_block_only and mention.block != last_block:
            continue
        if mention.defining and not include_defining:
            continue
        if query_limit is not None and mention.tokens.stop > query_limit:
            continue
        for rid, span in seq.spans_in_block(mention.block).items():
            target = ref if rid == mention.rule_id else noref
            for i in mention.tokens:
                # causal region only: keys at or before the query
                for j in range(span.start, min(span.stop, i + 1)):
                    target.add((i, j))
    return ReferencePairSets(frozenset(ref), frozenset(noref))


def pairs_for_query(
    seq: RuleAnnotatedSequence,
    i: int,
    include_defining: bool = True,
    final_block_only: bool = False,
):
    """Ref and noref key positions for the single query position ``i``."""
    last_block = len(seq.blocks) - 1
    ref, noref = set(), set()
    for mention in seq.identifier_mentions:
        if i not in mention.tokens:
            continue
        if final_block_only and mention.block != last_block:
            continue
        if mention.defining and not include_defining:
            continue
        for rid, span in seq.spans_in_block(mention.block).items():
            target = ref if rid == mention.rule_id else noref
            target.update(range(span.start, min(span.stop, i + 1)))
    return ref, noref
