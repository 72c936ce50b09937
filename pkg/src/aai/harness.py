"""Dataset I/O, experiment runs, scoring, heatmaps and reports.

Datasets are JSONL, one object per line with ``id``, ``context``,
``question``, ``answer`` and optional ``options`` (list) and ``meta`` (object).
Completions for replay runs are JSONL objects ``{"id": ..., "completion": ...}``
or a single JSON object mapping ids to strings.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError, CoverageError, DegenerateInputError, EmptyInputError, LoadError, SchemaError
from .heads import HeadTable, SelectionMode, SelectionThresholds, analyze_model, select_heads
from .masks import HeadMaskPlan, ReweightParams
from .model import ModelConfig, ToyDecoder, decode_bytes, greedy_decode, init_model, prefill
from .rules import annotate_rules, build_pair_sets, token_ids
from .symbolic.answers import extract_answer, normalize_verdict
from .symbolic.templates import load_template, render_prompt, tag_rules

REQUIRED_FIELDS = ("id", "context", "question", "answer")
ABSTAIN_LABEL = "abstain"


@dataclass(frozen=True)
class DatasetRecord:
    id: str
    context: str
    question: str
    answer: str
    options: Optional[tuple] = None
    meta: Optional[dict] = field(default=None, compare=False)

    def to_json(self) -> dict:
        out = {"id": self.id, "context": self.context, "question": self.question, "answer": self.answer}
        if self.options is not None:
            out["options"] = list(self.options)
        if self.meta is not None:
            out["meta"] = self.meta
        return out


def _record_from(obj, family: str, line: int) -> DatasetRecord:
    if not isinstance(obj, dict):
        raise SchemaError("record must be a JSON object", line)
    missing = [k for k in REQUIRED_FIELDS if k not in obj]
    if missing:
        raise SchemaError(f"missing field(s) {', '.join(missing)}", line)
    for key in ("id", "context", "question"):
        if not isinstance(obj[key], str):
            raise SchemaError(f"field {key!r} must be a string", line)
    options = obj.get("options")
    if options is not None:
        if not isinstance(options, list) or not all(isinstance(o, str) for o in options):
            raise SchemaError("options must be a list of strings", line)
        options = tuple(options)
    answer = normalize_verdict(obj["answer"], family)
    if answer is None:
        raise SchemaError(f"answer {obj['answer']!r} is outside the {family} domain", line)
    if family == "logical_deduction" and options is not None and ord(answer) - ord("A") >= len(options):
        raise SchemaError(f"answer {answer} has no matching option", line)
    return DatasetRecord(obj["id"], obj["context"], obj["question"], answer, options, obj.get("meta"))


def load_dataset(path, family: str) -> List[DatasetRecord]:
    records, seen = [], {}
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise LoadError(f"malformed JSON ({exc.msg})", n) from None
            record = _record_from(obj, family, n)
            if record.id in seen:
                raise SchemaError(f"duplicate id {record.id!r} (first on line {seen[record.id]})", n)
            seen[record.id] = n
            records.append(record)
    return records


def write_dataset(records: Sequence, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            obj = rec.to_json() if isinstance(rec, DatasetRecord) else rec
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")


def load_completions(path) -> Dict[str, str]:
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("{") and "\n" not in stripped.rstrip():
        mapping = json.loads(stripped)
        if "id" not in mapping:
            return {str(k): str(v) for k, v in mapping.items()}
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
            out[str(obj["id"])] = str(obj["completion"])
        except (json.JSONDecodeError, KeyError, TypeError):
            raise LoadError("completion lines need 'id' and 'completion'", n) from None
    return out


def write_completions(results: Sequence["RunResult"], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps({"id": r.record_id, "completion": r.generated}, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# runs


@dataclass(frozen=True)
class RunResult:
    record_id: str
    prompt_hash: str
    generated: str
    verdict: Optional[str]
    gold: str
    correct: bool
    duration: float = field(default=0.0, compare=False)


@dataclass(frozen=True)
class RunConfig:
    family: str = "proofwriter"
    mode: str = "aai"
    style: str = "symbolic_aided"
    shots: Optional[int] = 0
    seed: int = 0
    calibration_index: int = 0
    max_new: int = 48
    prefill_only: bool = True
    include_defining: bool = True
    final_block_only: bool = False
    coefficient: float = 1.0
    bias: float = 0.0
    median_scope: str = "causal_entries"
    binarize_threshold: float = 0.04
    diag_threshold: float = 0.3
    vert_threshold: float = 0.6
    other_threshold: float = 0.3
    orientation: str = "prose"
    num_layers: int = 2
    num_heads: int = 4
    head_dim: int = 16

    def thresholds(self) -> SelectionThresholds:
        return SelectionThresholds(
            self.binarize_threshold, self.diag_threshold, self.vert_threshold, self.other_threshold, self.orientation
        )

    def reweight(self) -> ReweightParams:
        return ReweightParams(self.coefficient, self.bias, self.median_scope)

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            num_layers=self.num_layers,
            num_heads=self.num_heads,
            model_dim=self.num_heads * self.head_dim,
            head_dim=self.head_dim,
            seed=self.seed,
        )


@dataclass
class ExperimentResult:
    results: List[RunResult]
    config: RunConfig
    head_table: Optional[HeadTable] = None
    selected: frozenset = frozenset()

    @property
    def accuracy(self) -> float:
        return score(self.results).accuracy


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]


def render_record(record: DatasetRecord, config: RunConfig) -> str:
    template = load_template(config.style, config.family)
    rule_text = tag_rules(record.context)
    return render_prompt(
        template,
        rule_text=rule_text,
        question=record.question,
        options=list(record.options) if record.options is not None else None,
        context=record.context,
        shots=config.shots,
    )


def _result(record, prompt, generated, family, started) -> RunResult:
    verdict = extract_answer(generated, family)
    return RunResult(
        record.id, prompt_hash(prompt), generated, verdict, record.answer,
        verdict is not None and verdict == record.answer, time.perf_counter() - started,
    )


def run_replay(dataset: Sequence[DatasetRecord], completions: Mapping[str, str], config: RunConfig) -> ExperimentResult:
    """Score externally produced completions. No model is involved."""
    missing = [r.id for r in dataset if r.id not in completions]
    if missing:
        raise CoverageError(f"no completion for {len(missing)} record(s), first {missing[0]!r}")
    results = []
    for record in dataset:
        started = time.perf_counter()
        prompt = render_record(record, config)
        results.append(_result(record, prompt, completions[record.id], config.family, started))
    return ExperimentResult(results, config)


def calibrate(model: ToyDecoder, prompt: str, config: RunConfig):
    """Classify heads on one baseline prefill and pick the heads for the mode."""
    trace = prefill(model, token_ids(prompt)).trace
    table = analyze_model(trace, config.thresholds())
    return table, select_heads(table, SelectionMode.parse(config.mode))


def run_toy(dataset: Sequence[DatasetRecord], config: RunConfig, model: Optional[ToyDecoder] = None) -> ExperimentResult:
    """Greedy generation on the toy decoder with the configured intervention."""
    if not dataset:
        raise EmptyInputError("dataset is empty")
    model = model or init_model(config.model_config())
    if not 0 <= config.calibration_index < len(dataset):
        raise ConfigError(f"calibration index {config.calibration_index} outside a {len(dataset)}-record dataset")
    prompts = [render_record(r, config) for r in dataset]
    table, selected = calibrate(model, prompts[config.calibration_index], config)
    results = []
    for record, prompt in zip(dataset, prompts):
        started = time.perf_counter()
        ids = token_ids(prompt)
        pairs = build_pair_sets(
            annotate_rules(prompt),
            include_defining=config.include_defining,
            final_block_only=config.final_block_only,
        )
        plan = HeadMaskPlan(selected, pairs, config.reweight(), config.prefill_only)
        generated = decode_bytes(greedy_decode(model, ids, plan, max_new=config.max_new))
        results.append(_result(record, prompt, generated, config.family, started))
    return ExperimentResult(results, config, table, selected)


def run_experiment(dataset, mode: str = "toy", config: RunConfig = RunConfig(), completions=None, model=None):
    """``mode`` is ``"replay"`` (needs ``completions``: mapping or path) or ``"toy"``."""
    if mode == "replay":
        if completions is None:
            raise CoverageError("replay mode needs completions")
        if not isinstance(completions, Mapping):
            completions = load_completions(completions)
        return run_replay(dataset, completions, config)
    if mode == "toy":
        return run_toy(dataset, config, model)
    raise ConfigError(f"unknown run mode {mode!r}")


# ---------------------------------------------------------------------------
# scoring


@dataclass(frozen=True)
class Score:
    accuracy: float
    correct: int
    total: int
    confusion: Dict[tuple, int]  # (gold, predicted) -> count


def score(results: Sequence[RunResult]) -> Score:
    if not results:
        raise EmptyInputError("no results to score")
    correct = sum(1 for r in results if r.correct)
    confusion = Counter((r.gold, r.verdict if r.verdict is not None else ABSTAIN_LABEL) for r in results)
    return Score(correct / len(results), correct, len(results), dict(sorted(confusion.items())))


# ---------------------------------------------------------------------------
# heatmaps


def heatmap_pixels(matrix) -> np.ndarray:
    """8-bit grey levels, linear from min (0) to max (255), half-up rounding."""
    M = np.asarray(matrix, dtype=np.float64)
    if M.ndim != 2 or M.size == 0:
        raise DegenerateInputError(f"heatmap needs a non-empty 2-D matrix, got shape {M.shape}")
    if not np.isfinite(M).all():
        raise DegenerateInputError("heatmap values must be finite")
    lo, hi = float(M.min()), float(M.max())
    if hi == lo:
        return np.zeros(M.shape, dtype=np.uint8)
    return np.floor(255.0 * (M - lo) / (hi - lo) + 0.5).astype(np.uint8)


def heatmap_export(matrix, path, format: str = "pgm") -> None:
    if format == "pgm":
        pixels = heatmap_pixels(matrix)
        rows, cols = pixels.shape
        Path(path).write_bytes(f"P5\n{cols} {rows}\n255\n".encode("ascii") + pixels.tobytes())
    elif format == "csv":
        M = np.asarray(matrix, dtype=np.float64)
        # CSV keeps raw values, so masked entries may stay infinite
        if M.ndim != 2 or M.size == 0 or np.isnan(M).any():
            raise DegenerateInputError(f"heatmap needs a non-empty 2-D matrix without NaN, got shape {M.shape}")
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        for row in M:
            writer.writerow([repr(float(v)) for v in row])
        Path(path).write_text(buf.getvalue(), encoding="ascii")
    else:
        raise ConfigError(f"unknown heatmap format {format!r}")


def read_pgm(path) -> np.ndarray:
    """Read back a P5 file written by heatmap_export (three header lines, 8-bit)."""
    magic, size, maxval, pixels = Path(path).read_bytes().split(b"\n", 3)
    if magic != b"P5" or maxval != b"255":
        raise ValueError("expected an 8-bit binary PGM")
    cols, rows = (int(v) for v in size.split())
    return np.frombuffer(pixels, dtype=np.uint8, count=rows * cols).reshape(rows, cols)


def read_csv_matrix(path) -> np.ndarray:
    with open(path, encoding="ascii") as fh:
        return np.array([[float(v) for v in row] for row in csv.reader(fh)], dtype=np.float64)


# ---------------------------------------------------------------------------
# reports


def selected_fraction(table: Optional[HeadTable], selected) -> Optional[float]:
    if table is None or not len(table):
        return None
    return len(selected) / len(table)


def report(head_table: Optional[HeadTable], results: Sequence[RunResult], config, selected=frozenset()) -> str:
    """Plain-text report. Same inputs give byte-identical output (timings are left out)."""
    cfg = asdict(config) if hasattr(config, "__dataclass_fields__") else dict(config)
    lines = ["# run report", "", "## config"]
    lines += [f"{k} = {json.dumps(cfg[k])}" for k in sorted(cfg)]
    lines += ["", "## heads"]
    fraction = selected_fraction(head_table, selected)
    if fraction is None:
        lines.append("selected-head fraction: n/a (no head table)")
    else:
        lines.append(f"selected-head fraction: {fraction:.6f} ({len(selected)}/{len(head_table)})")
        picked = sorted(selected)
        lines.append("selected: " + (" ".join(f"L{l}H{h}" for l, h in picked) if picked else "none"))
        classes = Counter(r.head_class.value for r in head_table)
        lines.append("classes: " + ", ".join(f"{k}={classes[k]}" for k in sorted(classes)))
    lines += ["", "## accuracy"]
    if results:
        s = score(results)
        lines.append(f"accuracy: {s.accuracy:.6f} ({s.correct}/{s.total})")
        lines.append("confusion (gold -> predicted):")
        lines += [f"  {g} -> {p}: {n}" for (g, p), n in s.confusion.items()]
    else:
        lines.append("accuracy: n/a (no results)")
    lines += ["", "## records", "id\tgold\tverdict\tcorrect\tprompt_hash"]
    for r in sorted(results, key=lambda r: r.record_id):
        verdict = r.verdict if r.verdict is not None else ABSTAIN_LABEL
        lines.append(f"{r.record_id}\t{r.gold}\t{verdict}\t{int(r.correct)}\t{r.prompt_hash}")
    return "\n".join(lines) + "\n"


def write_heads(table: HeadTable, selected, path) -> None:
    data = json.loads(table.to_json())
    data["selected"] = [list(h) for h in sorted(selected)]
    Path(path).write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")


def read_heads(path):
    text = Path(path).read_text(encoding="utf-8")
    table = HeadTable.from_json(text)
    selected = frozenset(tuple(h) for h in json.loads(text).get("selected", []))
    return table, selected
