import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aai.errors import AnnotationError
from aai.rules import (
    ReferencePairSets,
    annotate_rules,
    build_pair_sets,
    detokenize,
    pairs_for_query,
    tokenize,
)

WORDS = st.sampled_from(["the", "cow", "is", "blue", "Kühe", "θ", "nice", "KB", "=>", "F(", ")", "Rules", "rule7"])


@st.composite
def rule_prompts(draw):
    """Few-shot shaped prompts: blocks of rule lines followed by reasoning lines."""
    blocks = []
    for _ in range(draw(st.integers(1, 3))):
        ids = draw(st.lists(st.integers(1, 30), min_size=0, max_size=5, unique=True))
        lines = [f"# (Rule{i}): " + " ".join(draw(st.lists(WORDS, max_size=5))) for i in ids]
        for _ in range(draw(st.integers(0, 4))):
            words = draw(st.lists(WORDS, max_size=4))
            mention = draw(st.integers(1, 32))
            pos = draw(st.integers(0, len(words)))
            words.insert(pos, f"Rule{mention}")
            lines.insert(draw(st.integers(0, len(lines))), "=> " + " ".join(words))
        blocks.append("\n".join(lines))
    return "\n-------\n".join(blocks)


class TestTokenize:
    def test_identifier_offsets(self):
        toks = tokenize("Rule14")
        assert len(toks) == 6 and toks[0].start == 0 and toks[-1].end == 6
        assert detokenize(toks) == "Rule14"

    def test_empty(self):
        assert tokenize("") == []

    @settings(max_examples=200, deadline=None)
    @given(st.text())
    def test_round_trip(self, text):
        assert detokenize(tokenize(text)) == text


class TestAnnotate:
    def test_two_rules(self):
        seq = annotate_rules("# (Rule1): A.\n# (Rule2): B.")
        assert sorted(seq.rule_spans) == [(0, 1), (0, 2)]
        assert [m.defining for m in seq.identifier_mentions] == [True, True]
        assert seq.text[seq.rule_spans[(0, 1)].start : seq.rule_spans[(0, 1)].stop] == "Rule1): A."

    def test_reasoning_line_mention(self):
        text = "# (Rule16): Smart people are quiet.\n=> F(KB['Harry is smart'], Rule16) => `Harry is quiet`"
        seq = annotate_rules(text)
        later = [m for m in seq.identifier_mentions if not m.defining]
        assert len(later) == 1 and later[0].rule_id == 16
        assert text[later[0].tokens.start : later[0].tokens.stop] == "Rule16"

    def test_dangling(self):
        seq = annotate_rules("# (Rule1): A.\nsee Rule99")
        assert [m.rule_id for m in seq.dangling_mentions] == [99]
        pairs = build_pair_sets(seq)
        assert not any(i >= len("# (Rule1): A.\nsee ") for i, _ in pairs.ref_pairs | pairs.noref_pairs)

    def test_duplicate_rule(self):
        with pytest.raises(AnnotationError):
            annotate_rules("# (Rule1): A.\n# (Rule1): B.")

    def test_same_id_in_separate_blocks(self):
        seq = annotate_rules("# (Rule1): A.\n-------\n# (Rule1): B.\nRule1")
        assert sorted(seq.rule_spans) == [(0, 1), (1, 1)]
        mention = seq.identifier_mentions[-1]
        assert mention.block == 1
        ref_keys = {j for _, j in build_pair_sets(seq).ref_pairs if _ in mention.tokens}
        assert ref_keys <= set(seq.rule_spans[(1, 1)])

    def test_multibyte_offsets(self):
        text = "# (Rule1): Kühe sind blau.\nRule1"
        seq = annotate_rules(text)
        raw = text.encode()
        span = seq.rule_spans[(0, 1)]
        assert raw[span.start : span.stop].decode() == "Rule1): Kühe sind blau."
        m = seq.identifier_mentions[-1]
        assert raw[m.tokens.start : m.tokens.stop] == b"Rule1"

    @settings(max_examples=100, deadline=None)
    @given(rule_prompts())
    def test_spans_disjoint_and_ordered(self, text):
        seq = annotate_rules(text)
        ordered = sorted(seq.rule_spans.values(), key=lambda r: r.start)
        for a, b in zip(ordered, ordered[1:]):
            assert a.stop <= b.start
        for m in seq.identifier_mentions:
            assert (m.block, m.rule_id) in seq.rule_spans


class TestPairSets:
    def test_single_rule_single_mention(self):
        text = "# (Rule1): A is b.\nuse Rule1"
        seq = annotate_rules(text)
        pairs = build_pair_sets(seq, include_defining=False)
        span = seq.rule_spans[(0, 1)]
        mention = seq.identifier_mentions[-1].tokens
        assert pairs.noref_pairs == frozenset()
        assert pairs.ref_pairs == {(i, j) for i in mention for j in span}

    def test_two_rules_hand_enumerated(self):
        text = "# (Rule1): abcd\n# (Rule2): efgh\nRule2"
        seq = annotate_rules(text)
        pairs = build_pair_sets(seq, include_defining=False)
        q0 = text.rindex("Rule2")
        queries = range(q0, q0 + 5)
        r1 = range(text.index("Rule1"), text.index("Rule1") + len("Rule1): abcd"))
        r2 = range(text.index("Rule2"), text.index("Rule2") + len("Rule2): efgh"))
        expected_ref, expected_noref = set(), set()
        for i in queries:
            for j in r2:
                expected_ref.add((i, j))
            for j in r1:
                expected_noref.add((i, j))
        assert pairs.ref_pairs == expected_ref
        assert pairs.noref_pairs == expected_noref
        assert not pairs.ref_pairs & pairs.noref_pairs

    def test_forward_reference_dropped(self):
        seq = annotate_rules("first Rule2\n# (Rule1): a\n# (Rule2): b")
        pairs = build_pair_sets(seq, include_defining=False)
        assert pairs.is_empty

    def test_include_defining(self):
        seq = annotate_rules("# (Rule1): a\n# (Rule2): b")
        assert build_pair_sets(seq, include_defining=False).is_empty
        with_defs = build_pair_sets(seq)
        assert with_defs.ref_pairs and with_defs.noref_pairs

    def test_final_block_only(self):
        seq = annotate_rules("# (Rule1): a\nRule1\n-------\n# (Rule1): b\nRule1")
        pairs = build_pair_sets(seq, final_block_only=True)
        start = seq.blocks[-1].start
        assert all(i >= start and j >= start for i, j in pairs.ref_pairs | pairs.noref_pairs)

    def test_text_round_trip(self):
        pairs = build_pair_sets(annotate_rules("# (Rule1): a\n# (Rule2): b\nRule1 Rule2"))
        text = pairs.to_text()
        assert text.splitlines() == sorted(text.splitlines(), key=lambda l: (int(l.split()[0]), int(l.split()[1]), l.split()[2]))
        assert ReferencePairSets.from_text(text) == pairs

    def test_malformed_text(self):
        with pytest.raises(AnnotationError):
            ReferencePairSets.from_text("1 2 MAYBE\n")

    def test_pairs_for_query_matches_full_build(self):
        text = "# (Rule1): a b\n# (Rule2): c d\nRule2 then Rule1"
        seq = annotate_rules(text)
        pairs = build_pair_sets(seq)
        for i in range(len(seq)):
            ref, noref = pairs_for_query(seq, i)
            assert ref == {j for q, j in pairs.ref_pairs if q == i}
            assert noref == {j for q, j in pairs.noref_pairs if q == i}

    @settings(max_examples=200, deadline=None)
    @given(rule_prompts(), st.booleans(), st.booleans())
    def test_properties(self, text, include_defining, final_only):
        seq = annotate_rules(text)
        pairs = build_pair_sets(seq, include_defining=include_defining, final_block_only=final_only)
        assert not pairs.ref_pairs & pairs.noref_pairs
        assert all(i >= j for i, j in pairs.ref_pairs | pairs.noref_pairs)
        every_span = set().union(*[set(s) for s in seq.rule_spans.values()]) if seq.rule_spans else set()
        assert all(j in every_span for _, j in pairs.ref_pairs | pairs.noref_pairs)
        mentions = {i: m for m in seq.identifier_mentions for i in m.tokens}
        for i, j in pairs.ref_pairs:
            m = mentions[i]
            assert j in seq.rule_spans[(m.block, m.rule_id)]
        for i, j in pairs.noref_pairs:
            m = mentions[i]
            assert j not in seq.rule_spans[(m.block, m.rule_id)]
            assert any(j in s for (b, r), s in seq.rule_spans.items() if b == m.block and r != m.rule_id)

    @settings(max_examples=100, deadline=None)
    @given(rule_prompts(), st.text(alphabet="abc Rule123\n", max_size=30))
    def test_appending_text_keeps_existing_pairs(self, text, tail):
        before = build_pair_sets(annotate_rules(text))
        after = build_pair_sets(annotate_rules(text + "\n" + tail.replace("#", "")))
        n = len(text.encode())
        kept = lambda ps: {p for p in ps if p[0] < n}  # noqa: E731
        assert kept(after.ref_pairs) == before.ref_pairs
        assert kept(after.noref_pairs) == before.noref_pairs
