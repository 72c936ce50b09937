"""Rule-tagged prompting: templates, synthetic worlds, trace checking, answer extraction."""

from .answers import extract_answer, normalize_verdict
from .templates import PromptTemplate, load_template, render_prompt, tag_rules
from .traces import (
    ReasoningTrace,
    ValidationReport,
    check_structure,
    gold_reasoning,
    parse_trace,
    render_trace,
    validate_trace,
)
from .worlds import Rule, SyntheticWorld, build_world, forward_chain, generate_world, generate_worlds

__all__ = [
    "PromptTemplate",
    "ReasoningTrace",
    "Rule",
    "SyntheticWorld",
    "ValidationReport",
    "build_world",
    "check_structure",
    "extract_answer",
    "forward_chain",
    "generate_world",
    "generate_worlds",
    "gold_reasoning",
    "load_template",
    "normalize_verdict",
    "parse_trace",
    "render_prompt",
    "render_trace",
    "tag_rules",
    "validate_trace",
]
