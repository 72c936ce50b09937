"""Seeded synthetic rule worlds and a forward-chaining oracle.

A world is a set of ground facts ``(entity, attribute, polarity)`` and
universally quantified rules such as "If something is red and it is not big
then it is kind.". Facts come first in the context, rules after, and every
statement's 1-based position is its rule id once the context is tagged.
"""

from __future__ import annotations

import random
import re
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

from ..errors import GenerationError, InconsistentWorldError

Atom = Tuple[str, str, bool]  # (entity, attribute, polarity)
Literal = Tuple[str, bool]  # (attribute, polarity)

LABELS = ("true", "false", "unknown")
VERDICT_OF_LABEL = {"true": "True", "false": "False", "unknown": "Unknown"}
QUESTION_LEAD = "Is the following statement true, false, or unknown?"

ENTITIES = ("Anne", "Bob", "Charlie", "Dave", "Erin", "Fiona", "Gary", "Harry")
ATTRIBUTES = (
    "big", "blue", "bright", "calm", "cold", "furry", "green", "heavy",
    "kind", "loud", "nice", "quiet", "red", "rough", "round", "sad",
    "shiny", "smart", "tall", "wet", "white", "wild", "young", "brave",
)

MAX_RETRIES = 64

_ATOM_RE = re.compile(r"^\s*([A-Z][a-z]+) is (not )?([a-z]+)\s*\.?\s*$")


def atom_text(atom: Atom) -> str:
    entity, attribute, polarity = atom
    return f"{entity} is {'' if polarity else 'not '}{attribute}"


def parse_atom(text: str) -> Optional[Atom]:
    m = _ATOM_RE.match(text)
    if not m:
        return None
    return (m.group(1), m.group(3), m.group(2) is None)


def negate(atom: Atom) -> Atom:
    return (atom[0], atom[1], not atom[2])


@dataclass(frozen=True)
class Rule:
    conditions: Tuple[Literal, ...]
    conclusion: Literal

    def instantiate(self, entity: str):
        return [(entity, a, p) for a, p in self.conditions], (entity, *self.conclusion)

    def sentence(self) -> str:
        def lit(subject, literal):
            attribute, polarity = literal
            return f"{subject} is {'' if polarity else 'not '}{attribute}"

        parts = [lit("something", self.conditions[0])]
        parts += [lit("it", c) for c in self.conditions[1:]]
        return f"If {' and '.join(parts)} then {lit('it', self.conclusion)}."


@dataclass(frozen=True)
class Step:
    """One reasoning step: selecting a fact, or applying a rule."""

    kind: str  # "fact" | "infer"
    rule_id: int
    consumed: Tuple[Atom, ...]
    produced: Atom


@dataclass(frozen=True)
class SyntheticWorld:
    entities: Tuple[str, ...]
    attributes: Tuple[str, ...]
    facts: Tuple[Atom, ...]
    rules: Tuple[Rule, ...]
    question: Atom
    label: str
    gold_trace: Tuple[Step, ...] = ()
    depth: int = 0
    width: int = 1
    seed: int = 0

    @property
    def num_statements(self) -> int:
        return len(self.facts) + len(self.rules)

    def fact_id(self, index: int) -> int:
        return index + 1

    def rule_id(self, index: int) -> int:
        return len(self.facts) + index + 1

    def statement(self, rule_id: int):
        """``("fact", atom)`` or ``("rule", Rule)`` for a 1-based id, None if out of range."""
        if 1 <= rule_id <= len(self.facts):
            return ("fact", self.facts[rule_id - 1])
        if len(self.facts) < rule_id <= self.num_statements:
            return ("rule", self.rules[rule_id - len(self.facts) - 1])
        return None

    def sentences(self) -> List[str]:
        return [atom_text(f) + "." for f in self.facts] + [r.sentence() for r in self.rules]

    @property
    def context(self) -> str:
        return " ".join(self.sentences())

    @property
    def statement_text(self) -> str:
        return atom_text(self.question) + "."

    @property
    def question_text(self) -> str:
        return f"{QUESTION_LEAD} {self.statement_text}"

    @property
    def verdict(self) -> str:
        return VERDICT_OF_LABEL[self.label]

    def to_record(self, record_id: str) -> dict:
        return {
            "id": record_id,
            "context": self.context,
            "question": self.question_text,
            "answer": self.verdict,
            "meta": {"depth": self.depth, "width": self.width, "seed": self.seed},
        }


@dataclass(frozen=True)
class ChainResult:
    derived: frozenset
    label: str
    log: Tuple[Step, ...] = field(default=())


def forward_chain(world: SyntheticWorld) -> ChainResult:
    """Least fixpoint of rule application, using per-(rule, entity) condition counters.

    Raises InconsistentWorldError when an atom is derived in both polarities.
    """
    derived = set()
    log: List[Step] = []
    by_condition: Dict[Literal, List[int]] = defaultdict(list)
    for ri, rule in enumerate(world.rules):
        for literal in set(rule.conditions):
            by_condition[literal].append(ri)
    missing = {}

    def add(atom):
        if negate(atom) in derived:
            raise InconsistentWorldError(f"both {atom_text(atom)!r} and its negation hold")
        derived.add(atom)

    agenda = []
    for atom in world.facts:
        if atom not in derived:
            add(atom)
            agenda.append(atom)
    while agenda:
        atom = agenda.pop(0)
        entity = atom[0]
        for ri in by_condition.get(atom[1:], ()):
            key = (ri, entity)
            if key not in missing:
                rule = world.rules[ri]
                missing[key] = len(set(rule.conditions))
            missing[key] -= 1
            if missing[key] == 0:
                conditions, conclusion = world.rules[ri].instantiate(entity)
                if conclusion not in derived:
                    add(conclusion)
                    agenda.append(conclusion)
                    log.append(Step("infer", world.rule_id(ri), tuple(conditions), conclusion))
    return ChainResult(frozenset(derived), label_of(world.question, derived), tuple(log))


def label_of(question: Atom, derived) -> str:
    if question in derived:
        return "true"
    if negate(question) in derived:
        return "false"
    return "unknown"


def _build(depth, width, rng, label):
    pool = list(ATTRIBUTES)
    rng.shuffle(pool)
    chain = pool[: depth + 1]
    pool = pool[depth + 1 :]
    entities = list(ENTITIES)
    rng.shuffle(entities)
    subject, others = entities[0], entities[1 : 1 + max(1, min(width, len(entities) - 1))]

    polarity = [rng.random() < 0.7 for _ in chain]
    extras: List[Optional[Literal]] = [None]
    for _ in range(depth):
        if pool and rng.random() < 0.4:
            extras.append((pool.pop(), rng.random() < 0.7))
        else:
            extras.append(None)

    # unknown worlds break the chain at link k (0 = the subject lacks the base fact)
    broken = rng.randint(0, depth) if label == "unknown" else None
    if broken is not None and broken > 0 and not pool:
        return None
    dead_attribute = pool.pop() if broken else None

    chain_rules = []
    for k in range(1, depth + 1):
        conditions = [(chain[k - 1], polarity[k - 1])]
        if k == broken:
            conditions = [(dead_attribute, True)]
        if extras[k] is not None:
            conditions.append(extras[k])
        chain_rules.append(Rule(tuple(conditions), (chain[k], polarity[k])))

    holder = others[0] if broken == 0 else subject
    chain_facts = [(holder, chain[0], polarity[0])]
    chain_facts += [(holder, *extras[k]) for k in range(1, depth + 1) if extras[k] is not None]

    reserved = set(chain) | {e[0] for e in extras if e} | ({dead_attribute} if dead_attribute else set())
    free = [a for a in ATTRIBUTES if a not in reserved]
    if not free:
        return None
    known = list(chain) + [e[0] for e in extras if e] + free

    distractor_rules = []
    for _ in range(width):
        n_cond = rng.choice((1, 1, 2))
        conds = []
        for attribute in rng.sample(known, n_cond):
            conds.append((attribute, rng.random() < 0.7))
        distractor_rules.append(Rule(tuple(conds), (rng.choice(free), rng.random() < 0.7)))
    distractor_facts = []
    for _ in range(width):
        entity = rng.choice(others + [subject])
        distractor_facts.append((entity, rng.choice(free), rng.random() < 0.7))

    facts = list(dict.fromkeys(chain_facts + distractor_facts))
    rules = list(dict.fromkeys(chain_rules + distractor_rules))
    if len(rules) != len(chain_rules) + len(distractor_rules):
        return None
    rng.shuffle(facts)
    rng.shuffle(rules)

    question = (subject, chain[depth], polarity[depth])
    if label == "false":
        question = negate(question)
    if label == "unknown" and rng.random() < 0.5:
        question = negate(question)

    world = SyntheticWorld(
        entities=tuple(sorted({f[0] for f in facts} | {subject})),
        attributes=tuple(sorted({a for _, a, _ in facts} | {a for r in rules for a, _ in r.conditions + (r.conclusion,)})),
        facts=tuple(facts),
        rules=tuple(rules),
        question=question,
        label=label,
        depth=depth,
        width=width,
    )

    # gold trace: select the subject's facts the chain consumes, then apply the reachable links
    links = depth if broken is None else (broken - 1 if broken > 0 else 0)
    if broken == 0:
        return world, ()
    fact_ids = {f: world.fact_id(i) for i, f in enumerate(facts)}
    rule_ids = {r: world.rule_id(i) for i, r in enumerate(rules)}
    used_facts = [(subject, chain[0], polarity[0])]
    used_facts += [(subject, *extras[k]) for k in range(1, links + 1) if extras[k] is not None]
    steps = [Step("fact", fact_ids[f], (), f) for f in used_facts]
    for k in range(1, links + 1):
        rule = chain_rules[k - 1]
        conditions, conclusion = rule.instantiate(subject)
        steps.append(Step("infer", rule_ids[rule], tuple(conditions), conclusion))
    return world, tuple(steps)


def generate_world(depth: int, width: int, seed: int, label: Optional[str] = None) -> SyntheticWorld:
    """Generate a consistent world whose question needs ``depth`` rule applications.

    ``width`` sets the number of distractor rules and distractor facts. With
    ``label`` unset the label is drawn from the seed. Deterministic in
    ``(depth, width, seed, label)``.
    """
    if depth < 0 or width < 1:
        raise GenerationError(f"need depth >= 0 and width >= 1, got depth={depth} width={width}")
    if label is not None and label not in LABELS:
        raise GenerationError(f"label must be one of {LABELS}, got {label!r}")
    if depth + 2 > len(ATTRIBUTES):
        raise GenerationError(f"depth {depth} needs more than {len(ATTRIBUTES)} attributes")
    rng = random.Random(f"world:{depth}:{width}:{seed}")
    wanted = label or rng.choice(LABELS)
    for _ in range(MAX_RETRIES):
        built = _build(depth, width, rng, wanted)
        if built is None:
            continue
        world, steps = built
        try:
            result = forward_chain(world)
        except InconsistentWorldError:
            continue
        if result.label != wanted:
            continue
        return replace(world, gold_trace=steps, seed=seed)
    raise GenerationError(
        f"no consistent {wanted} world for depth={depth} width={width} seed={seed} after {MAX_RETRIES} tries"
    )


def generate_worlds(depth: int, width: int, seed: int, count: int) -> List[SyntheticWorld]:
    return [generate_world(depth, width, seed * 100003 + i) for i in range(count)]


def build_world(facts: Sequence[Atom], rules: Sequence[Rule], question: Atom) -> SyntheticWorld:
    """A hand-specified world; its label comes from forward chaining."""
    world = SyntheticWorld(
        entities=tuple(sorted({f[0] for f in facts} | {question[0]})),
        attributes=tuple(sorted({f[1] for f in facts})),
        facts=tuple(facts),
        rules=tuple(rules),
        question=question,
        label="unknown",
    )
    return replace(world, label=forward_chain(world).label)
