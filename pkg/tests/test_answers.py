import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aai.symbolic.answers import extract_answer, normalize_number, normalize_verdict

FAMILIES = ["proofwriter", "folio", "prontoqa", "logical_deduction", "gsm8k"]


def cases():
    data = json.loads((Path(__file__).parent / "fixtures" / "worked_outputs.json").read_text(encoding="utf-8"))
    return [pytest.param(c, id=c["source"]) for c in data["extraction"]]


@pytest.mark.parametrize("case", cases())
def test_worked_outputs(case):
    assert extract_answer(case["text"], case["family"]) == case["expected"]


@pytest.mark.parametrize(
    "text, family, expected",
    [
        ("=> Validate(Question=`x`) = Uncertain.", "folio", "Unknown"),
        ("=> Validate(Question=`x`) = Unknown.", "proofwriter", "Unknown"),
        ("=> Validate(Question=`x`) = Unknown.", "prontoqa", None),
        ("First = True, then = False", "proofwriter", "False"),
        ("true", "proofwriter", "True"),
        ("I think it might be true", "proofwriter", None),
        ("answer is (C)", "logical_deduction", "C"),
        ("answer: A then later answer: D", "logical_deduction", "D"),
        ("the Answer = B.", "logical_deduction", "B"),
        ("answer: Apples", "logical_deduction", None),
        ("no equals sign 42", "gsm8k", None),
        ("total = 1,200.", "gsm8k", "1200"),
        ("x = 3.50", "gsm8k", "3.5"),
        ("x = -4", "gsm8k", "-4"),
        ("x = nothing", "gsm8k", None),
        ("", "gsm8k", None),
    ],
)
def test_extraction_edges(text, family, expected):
    assert extract_answer(text, family) == expected


@settings(max_examples=300, deadline=None)
@given(st.text(), st.sampled_from(FAMILIES))
def test_total_on_arbitrary_text(text, family):
    result = extract_answer(text, family)
    assert result is None or isinstance(result, str)


def test_unknown_family():
    with pytest.raises(ValueError):
        extract_answer("x", "trivia")


@pytest.mark.parametrize(
    "value, family, expected",
    [
        ("true", "proofwriter", "True"),
        ("Uncertain", "folio", "Unknown"),
        ("Unknown", "prontoqa", None),
        ("maybe", "proofwriter", None),
        ("(b)", "logical_deduction", "B"),
        ("H", "logical_deduction", None),
        (18, "gsm8k", "18"),
        ("18.0", "gsm8k", "18"),
        (None, "gsm8k", None),
    ],
)
def test_normalize_verdict(value, family, expected):
    assert normalize_verdict(value, family) == expected


def test_normalize_number():
    assert normalize_number("1,000") == "1000"
    assert normalize_number("0.250") == "0.25"
    assert normalize_number("abc") is None
