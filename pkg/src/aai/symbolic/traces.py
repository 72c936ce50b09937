"""Reasoning traces: render, parse and check.

The line grammar::

    # KB = {Anne is red, Anne is big}
    => Rule3 = `Anne is red`
    => F(KB['Anne is red'], Rule7) => `Anne is big`
    => Validate(Question=`Anne is big`, KB('Anne is big')) = True.

Parsing is best effort. Lines that look like steps but do not parse are kept
as opaque lines, and ``#`` comment lines are kept as comments.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Tuple

from .answers import extract_answer
from .worlds import SyntheticWorld, VERDICT_OF_LABEL, atom_text, forward_chain, negate, parse_atom

_OPEN = r"(?:``|`|'|\"|“|‘)"
_CLOSE = r"(?:''|`|'|\"|”|’)"
_QUOTED_RE = re.compile(_OPEN + r"(.+?)" + _CLOSE)

_SNAPSHOT_RE = re.compile(r"^\s*(?:#|=>)?\s*KB\s*=\s*\{(.*)\}\s*$")
_FACT_RE = re.compile(r"^\s*=>\s*Rule(\d+)\s*=\s*(?:KB\s*\(\s*)?" + _OPEN + r"(.+?)" + _CLOSE + r"\s*\)?\s*\.?\s*$")
_INFER_RE = re.compile(r"^\s*=>\s*F\((?P<args>.*?)\)\s*=>\s*(?P<out>.+?)\s*$")
_RULE_REF_RE = re.compile(r"\bRule(\d+)\b")
_VERDICT_RE = re.compile(r"=\s*(True|False|Unknown|Uncertain)\b")


@dataclass(frozen=True)
class TraceStep:
    kind: str  # "fact" | "infer"
    rule_id: Optional[int]
    consumed: Tuple[str, ...]
    produced: Optional[str]
    line: int = 0


@dataclass(frozen=True)
class ReasoningTrace:
    steps: Tuple[TraceStep, ...] = ()
    kb_snapshots: Tuple[frozenset, ...] = ()
    # number of steps preceding each snapshot
    snapshot_positions: Tuple[int, ...] = ()
    verdict: Optional[str] = None
    opaque: Tuple[Tuple[int, str], ...] = ()
    comments: Tuple[Tuple[int, str], ...] = ()

    @property
    def inference_steps(self):
        return [s for s in self.steps if s.kind == "infer"]


# ---------------------------------------------------------------------------
# rendering


def _kb_line(kb: Iterable[str]) -> str:
    return "# KB = {" + ", ".join(kb) + "}"


def render_trace(world: SyntheticWorld, steps=None, verdict: Optional[str] = None) -> str:
    """Render world steps (default: the gold trace) in the line grammar."""
    steps = world.gold_trace if steps is None else steps
    verdict = world.verdict if verdict is None else verdict
    kb: List[str] = []
    lines = [_kb_line(kb)]
    facts = [s for s in steps if s.kind == "fact"]
    for step in facts:
        lines.append(f"=> Rule{step.rule_id} = `{atom_text(step.produced)}`")
        kb.append(atom_text(step.produced))
    if facts:
        lines.append(_kb_line(kb))
    for step in steps:
        if step.kind != "infer":
            continue
        cited = ", ".join(f"'{atom_text(a)}'" for a in step.consumed)
        lines.append(f"=> F(KB[{cited}], Rule{step.rule_id}) => `{atom_text(step.produced)}`")
        kb.append(atom_text(step.produced))
        lines.append(_kb_line(kb))
    question = atom_text(world.question)
    if verdict == "True":
        support = f"KB('{question}')"
    elif verdict == "False":
        support = f"KB('{atom_text(negate(world.question))}')"
    else:
        support = "KB"
    lines.append("# check the question against the derived premises")
    lines.append(f"=> Validate(Question=`{question}`, {support}) = {verdict}.")
    return "\n".join(lines)


def gold_reasoning(world: SyntheticWorld) -> ReasoningTrace:
    return parse_trace(render_trace(world))


# ---------------------------------------------------------------------------
# parsing


def _normalize_verdict(word: str) -> str:
    word = word.capitalize()
    return "Unknown" if word in ("Unknown", "Uncertain") else word


def parse_trace(generated: str, family: str = "proofwriter") -> ReasoningTrace:
    """Best-effort line parse of a generated answer block. Never raises on text."""
    steps: List[TraceStep] = []
    snapshots, positions = [], []
    opaque, comments = [], []
    verdict = None
    for n, raw in enumerate((generated or "").splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        snap = _SNAPSHOT_RE.match(line)
        if snap:
            items = [i.strip() for i in snap.group(1).split(",")]
            snapshots.append(frozenset(i for i in items if i))
            positions.append(len(steps))
            continue
        fact = _FACT_RE.match(line)
        if fact:
            steps.append(TraceStep("fact", int(fact.group(1)), (), fact.group(2).strip(), n))
            continue
        if "Validate(" in line:
            hits = _VERDICT_RE.findall(line)
            if hits:
                verdict = _normalize_verdict(hits[-1])
            else:
                opaque.append((n, raw))
            continue
        infer = _INFER_RE.match(line)
        if infer:
            refs = _RULE_REF_RE.findall(infer.group("args"))
            produced = _QUOTED_RE.search(infer.group("out"))
            if refs and produced:
                consumed = tuple(q.strip() for q in _QUOTED_RE.findall(infer.group("args")))
                steps.append(TraceStep("infer", int(refs[-1]), consumed, produced.group(1).strip(), n))
            else:
                opaque.append((n, raw))
            continue
        if line.startswith("#") and not line.startswith("# =>"):
            comments.append((n, raw))
            continue
        opaque.append((n, raw))
    if verdict is None:
        verdict = extract_answer(generated or "", family)
    return ReasoningTrace(
        tuple(steps), tuple(snapshots), tuple(positions), verdict, tuple(opaque), tuple(comments)
    )


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    code: str
    step: Optional[int]  # index into trace.steps, None for trace-level problems
    message: str

    def __str__(self):
        where = f"step {self.step}" if self.step is not None else "trace"
        return f"{where}: {self.code}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: Tuple[Violation, ...] = field(default=())

    @property
    def valid(self) -> bool:
        return not self.violations

    @property
    def first(self) -> Optional[Violation]:
        return self.violations[0] if self.violations else None

    def summary(self) -> str:
        return "valid" if self.valid else str(self.first)

    def to_text(self) -> str:
        if self.valid:
            return "valid\n"
        return "invalid\n" + "".join(f"{v}\n" for v in self.violations)


def _snapshot_checks(trace: ReasoningTrace, kb_at=None):
    problems = []
    previous = frozenset()
    for i, snap in enumerate(trace.kb_snapshots):
        if not previous <= snap:
            lost = ", ".join(sorted(previous - snap))
            problems.append(Violation("kb-not-monotonic", None, f"snapshot {i} drops {lost}"))
        if kb_at is not None:
            expected = kb_at[trace.snapshot_positions[i]]
            if snap != expected:
                problems.append(
                    Violation("snapshot-mismatch", None, f"snapshot {i} differs from the premises derived so far")
                )
        previous = snap
    return problems


def validate_trace(trace: ReasoningTrace, world: SyntheticWorld) -> ValidationReport:
    """Semantic check of a trace against a world in the canonical grammar."""
    problems: List[Violation] = []
    kb = set()
    kb_at = [frozenset()]
    for idx, step in enumerate(trace.steps):
        statement = world.statement(step.rule_id) if step.rule_id is not None else None
        produced = parse_atom(step.produced or "")
        if statement is None:
            problems.append(Violation("unknown-rule", idx, f"Rule{step.rule_id} does not exist"))
        elif produced is None:
            problems.append(Violation("unparsable-premise", idx, f"cannot read {step.produced!r}"))
        elif step.kind == "fact":
            kind, fact = statement
            if kind != "fact":
                problems.append(Violation("rule-kind", idx, f"Rule{step.rule_id} is a rule, not a fact"))
            elif fact != produced:
                problems.append(
                    Violation("conclusion-mismatch", idx, f"Rule{step.rule_id} states {atom_text(fact)!r}")
                )
        else:
            kind, rule = statement
            if kind != "rule":
                problems.append(Violation("rule-kind", idx, f"Rule{step.rule_id} is a fact, not a rule"))
            else:
                conditions, conclusion = rule.instantiate(produced[0])
                absent = [atom_text(c) for c in conditions if atom_text(c) not in kb]
                cited = [c for c in step.consumed if c not in kb]
                if absent:
                    problems.append(
                        Violation("condition-mismatch", idx, f"Rule{step.rule_id} needs {', '.join(absent)}")
                    )
                elif conclusion != produced:
                    problems.append(
                        Violation("conclusion-mismatch", idx, f"Rule{step.rule_id} concludes {atom_text(conclusion)!r}")
                    )
                elif cited:
                    problems.append(Violation("premise-not-in-kb", idx, f"cites {', '.join(cited)}"))
        if produced is not None:
            kb.add(atom_text(produced))
        kb_at.append(frozenset(kb))

    problems += _snapshot_checks(trace, kb_at)

    expected = VERDICT_OF_LABEL[forward_chain(world).label]
    question = atom_text(world.question)
    if trace.verdict is None:
        problems.append(Violation("missing-verdict", None, "no verdict"))
    elif trace.verdict != expected:
        problems.append(Violation("verdict-mismatch", None, f"verdict {trace.verdict}, oracle says {expected}"))
    elif trace.verdict == "True" and question not in kb:
        problems.append(Violation("verdict-unsupported", None, f"{question!r} was never derived"))
    elif trace.verdict == "False" and atom_text(negate(world.question)) not in kb:
        problems.append(Violation("verdict-unsupported", None, f"negation of {question!r} was never derived"))
    return ValidationReport(tuple(problems))


def check_structure(trace: ReasoningTrace, rule_ids: Optional[Iterable[int]] = None) -> ValidationReport:
    """Grammar-free checks for traces over real dataset text: cited rules exist,
    KB snapshots only grow, and a verdict is present."""
    problems: List[Violation] = []
    if rule_ids is not None:
        known = set(rule_ids)
        for idx, step in enumerate(trace.steps):
            if step.rule_id not in known:
                problems.append(Violation("unknown-rule", idx, f"Rule{step.rule_id} does not exist"))
    problems += _snapshot_checks(trace)
    if trace.verdict is None:
        problems.append(Violation("missing-verdict", None, "no verdict"))
    return ValidationReport(tuple(problems))
