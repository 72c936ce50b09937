"""Few-shot prompt templates and rule tagging."""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from typing import Optional, Sequence, Union

from ..errors import RenderError

STYLES = ("symbolic_aided", "compact")
FAMILIES = ("proofwriter", "prontoqa", "logical_deduction", "folio", "gsm8k")

PLACEHOLDERS = {
    "rule_text": "{{RULE CONTENT}}",
    "question": "{{QUESTION}}",
    "options": "{{OPTIONS}}",
    "context": "{{CONTEXT}}",
}

_SEPARATOR_RE = re.compile(r"\n-------[ ]?\n")
_EXAMPLE_LABEL_RE = re.compile(r"### Example\d+:")
_SENTENCE_END_RE = re.compile(r"(?<=\.)\s+")


@dataclass(frozen=True)
class PromptTemplate:
    style: str
    dataset_family: str
    body: str

    @property
    def name(self) -> str:
        return f"{self.style}_{self.dataset_family}"

    @property
    def required(self):
        return [key for key, marker in PLACEHOLDERS.items() if marker in self.body]


def available_templates():
    return [
        (style, family)
        for style in STYLES
        for family in FAMILIES
        if resources.files(__package__).joinpath("templates", f"{style}_{family}.txt").is_file()
    ]


def load_template(style: str, family: str) -> PromptTemplate:
    if style not in STYLES:
        raise RenderError(f"unknown template style {style!r}")
    if family not in FAMILIES:
        raise RenderError(f"unknown dataset family {family!r}")
    asset = resources.files(__package__).joinpath("templates", f"{style}_{family}.txt")
    if not asset.is_file():
        raise RenderError(f"no {style} template for {family}")
    return PromptTemplate(style, family, asset.read_text(encoding="utf-8"))


def tag_rules(context: str) -> str:
    """Number the sentences of a context as ``# (Rule<k>): <sentence>`` lines."""
    sentences = [s.strip() for s in _SENTENCE_END_RE.split(context.strip()) if s.strip()]
    return "\n".join(f"# (Rule{k}): {s}" for k, s in enumerate(sentences, 1))


def format_options(options: Union[str, Sequence[str], None]) -> Optional[str]:
    """Options as ``\\nA) ...\\nB) ...``; strings pass through untouched."""
    if options is None or isinstance(options, str):
        return options
    return "".join(f"\n{chr(ord('A') + i)}) {opt}" for i, opt in enumerate(options))


def select_shots(body: str, shots: int) -> str:
    """Keep the instruction header, the first ``shots`` worked examples and the query block.

    Example labels are renumbered so the kept blocks count up from 1.
    """
    if shots < 0:
        return body
    seps = list(_SEPARATOR_RE.finditer(body))
    if len(seps) < 1:
        return body
    starts = [0] + [m.end() for m in seps]
    ends = [m.start() for m in seps] + [len(body)]
    segments = [body[s:e] for s, e in zip(starts, ends)]
    header, examples, query = segments[0], segments[1:-1], segments[-1]
    kept = [header] + examples[:shots] + [query]
    counter = iter(range(1, len(kept)))
    kept = [kept[0]] + [_EXAMPLE_LABEL_RE.sub(lambda _: f"### Example{next(counter)}:", seg, count=1) for seg in kept[1:]]
    return "\n-------\n".join(kept)


def render_prompt(
    template: PromptTemplate,
    rule_text: Optional[str] = None,
    question: Optional[str] = None,
    options=None,
    context: Optional[str] = None,
    shots: Optional[int] = None,
) -> str:
    """Substitute placeholders. Every placeholder present in the template needs a
    non-empty value; ``shots`` trims the worked examples (None keeps them all)."""
    values = {
        "rule_text": rule_text,
        "question": question,
        "options": format_options(options),
        "context": context,
    }
    body = template.body if shots is None else select_shots(template.body, shots)
    for key in template.required:
        value = values[key]
        if value is None or value == "":
            raise RenderError(f"{template.name} needs a value for {PLACEHOLDERS[key]}")
        body = body.replace(PLACEHOLDERS[key], value)
    return body
