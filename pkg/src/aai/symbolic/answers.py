"""Final-answer extraction and verdict normalization.

Verdicts are canonical strings: ``"True"``, ``"False"``, ``"Unknown"`` (which
also stands for "Uncertain"), an option letter, or a normalized number.
Abstention is ``None``.
"""

from __future__ import annotations

import re
from decimal import Decimal, InvalidOperation
from typing import Optional

from ..errors import ConfigError

ABSTAIN = None

TRUTH_FAMILIES = ("proofwriter", "folio", "prontoqa")
OPTION_LETTERS = "ABCDEFG"

_TRUTH_RE = re.compile(r"=\s*[`'\"]?(True|False|Unknown|Uncertain)\b", re.IGNORECASE)
_BARE_TRUTH_RE = re.compile(r"^\W*(True|False|Unknown|Uncertain)\W*$", re.IGNORECASE)
_OPTION_RE = re.compile(r"(?i:answer)\s*(?:(?i:is)\s*)?[:=]?\s*\(?([A-G])\)?(?![A-Za-z])")
_NUMBER_RE = re.compile(r"-?\d[\d,]*(?:\.\d+)?|-?\.\d+")


def _truth(word: str, family: str) -> Optional[str]:
    word = word.capitalize()
    if word in ("Unknown", "Uncertain"):
        return "Unknown" if family != "prontoqa" else ABSTAIN
    return word


def normalize_number(text: str) -> Optional[str]:
    cleaned = text.replace(",", "").rstrip(".")
    try:
        value = Decimal(cleaned)
    except InvalidOperation:
        return None
    if value == value.to_integral_value():
        return str(value.quantize(Decimal(1)))
    return format(value.normalize(), "f")


def normalize_verdict(value, family: str) -> Optional[str]:
    """Canonical form of a gold answer; None when it is outside the family's domain."""
    if value is None:
        return None
    text = str(value).strip()
    if family in TRUTH_FAMILIES:
        if text.lower() not in ("true", "false", "unknown", "uncertain"):
            return None
        return _truth(text, family)
    if family == "logical_deduction":
        letter = text.strip("() ").upper()
        return letter if len(letter) == 1 and letter in OPTION_LETTERS else None
    if family == "gsm8k":
        return normalize_number(text)
    raise ConfigError(f"unknown dataset family {family!r}")


def extract_answer(generated: str, family: str) -> Optional[str]:
    """The last verdict the text commits to, or None (abstain). Never raises on text."""
    if not generated:
        return ABSTAIN
    if family in TRUTH_FAMILIES:
        hits = _TRUTH_RE.findall(generated)
        if hits:
            return _truth(hits[-1], family)
        bare = _BARE_TRUTH_RE.match(generated.strip())
        return _truth(bare.group(1), family) if bare else ABSTAIN
    if family == "logical_deduction":
        hits = _OPTION_RE.findall(generated)
        return hits[-1] if hits else ABSTAIN
    if family == "gsm8k":
        if "=" not in generated:
            return ABSTAIN
        numbers = _NUMBER_RE.findall(generated.rsplit("=", 1)[1])
        return normalize_number(numbers[-1]) if numbers else ABSTAIN
    raise ConfigError(f"unknown dataset family {family!r}")
