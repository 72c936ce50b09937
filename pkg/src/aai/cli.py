"""Command-line entry point: ``aai <subcommand> ...``.

Failures print ``error[<category>]: <message>`` on stderr and exit with the
category's code (see ``aai.errors``). I/O failures exit with 2.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import harness
from .errors import AAIError, TraceFormatError
from .heads import SelectionMode, SelectionThresholds, analyze_model
from .masks import HeadMaskPlan, ReweightParams, compose_final
from .model import ModelConfig, ToyDecoder, init_model, prefill
from .rules import annotate_rules, build_pair_sets, token_ids
from .symbolic.templates import tag_rules
from .symbolic.worlds import generate_worlds
from .trace import AttentionTrace, export_trace, import_trace, parse_matrix_ref

SCOPES = {"causal": "causal_entries", "all": "all_entries"}
DEFAULT_THRESHOLDS = SelectionThresholds()
DEFAULT_REWEIGHT = ReweightParams()


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _threshold_args(p):
    p.add_argument("--binarize-threshold", type=float, default=DEFAULT_THRESHOLDS.binarize_threshold)
    p.add_argument("--diag-threshold", type=float, default=DEFAULT_THRESHOLDS.diag_threshold)
    p.add_argument("--vert-threshold", type=float, default=DEFAULT_THRESHOLDS.vert_threshold)
    p.add_argument("--other-threshold", type=float, default=DEFAULT_THRESHOLDS.other_threshold)
    p.add_argument("--orientation", choices=("prose", "literal"), default=DEFAULT_THRESHOLDS.orientation)


def _mask_args(p):
    p.add_argument("--coef", type=float, default=DEFAULT_REWEIGHT.coefficient)
    p.add_argument("--bias", type=float, default=DEFAULT_REWEIGHT.bias)
    p.add_argument("--median-scope", choices=sorted(SCOPES), default="causal")
    p.add_argument("--include-defining", action=argparse.BooleanOptionalAction, default=True,
                   help="also bind the identifier on a rule's own tag line")
    p.add_argument("--final-block-only", action="store_true",
                   help="only the last few-shot block takes part in the pair sets")


def _model_args(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--num-layers", type=int, default=2)
    p.add_argument("--num-heads", type=int, default=4)
    p.add_argument("--head-dim", type=int, default=16)


def _thresholds(args) -> SelectionThresholds:
    return SelectionThresholds(
        args.binarize_threshold, args.diag_threshold, args.vert_threshold, args.other_threshold, args.orientation
    )


def _run_config(args, mode: str) -> harness.RunConfig:
    return harness.RunConfig(
        family=args.family,
        mode=mode,
        style=args.style,
        shots=args.shots,
        seed=args.seed,
        calibration_index=args.calibration_index,
        max_new=args.max_new,
        prefill_only=args.prefill_only,
        include_defining=args.include_defining,
        final_block_only=args.final_block_only,
        coefficient=args.coef,
        bias=args.bias,
        median_scope=SCOPES[args.median_scope],
        binarize_threshold=args.binarize_threshold,
        diag_threshold=args.diag_threshold,
        vert_threshold=args.vert_threshold,
        other_threshold=args.other_threshold,
        orientation=args.orientation,
        num_layers=args.num_layers,
        num_heads=args.num_heads,
        head_dim=args.head_dim,
    )


def _load_model(args, config):
    """A saved model from ``--model``, with the run config's model fields updated to match."""
    if not getattr(args, "model", None):
        return None, config
    model = ToyDecoder.load(args.model)
    cfg = model.config
    config = dataclasses.replace(
        config, seed=cfg.seed, num_layers=cfg.num_layers, num_heads=cfg.num_heads, head_dim=cfg.head_dim
    )
    return model, config


def cmd_analyze_heads(args) -> int:
    trace = import_trace(args.trace)
    if trace.kind != "attention":
        raise TraceFormatError(f"{args.trace} holds {trace.kind} matrices, not attention weights")
    table = analyze_model(trace, _thresholds(args))
    _emit(table.to_json() + "\n" if args.json else table.to_tsv(), args.out)
    return 0


def cmd_build_masks(args) -> int:
    prompt = Path(args.prompt).read_text(encoding="utf-8")
    pairs = build_pair_sets(
        annotate_rules(prompt), include_defining=args.include_defining, final_block_only=args.final_block_only
    )
    _emit(pairs.to_text(), args.out)
    if not (args.export_masks or args.export_trace):
        return 0
    cfg = ModelConfig(args.num_layers, args.num_heads, args.num_heads * args.head_dim, args.head_dim, seed=args.seed)
    ids = token_ids(prompt)
    base = prefill(init_model(cfg), ids).trace
    if args.export_trace:
        export_trace(base, args.export_trace)
    if args.export_masks:
        # additive masks of every head of the toy model on this prompt
        params = ReweightParams(args.coef, args.bias, SCOPES[args.median_scope])
        plan = HeadMaskPlan(frozenset(base.heads()), pairs, params)
        masks = {key: compose_final(base.scores[key], plan, *key, len(ids)) for key in base.heads()}
        export_trace(
            AttentionTrace(base.num_layers, base.num_heads, base.seq_len, base.tokens, masks, base.scores, "mask"),
            args.export_masks,
        )
    return 0


def cmd_run(args) -> int:
    dataset = harness.load_dataset(args.dataset, args.family)
    model, config = _load_model(args, _run_config(args, SelectionMode.parse(args.mode).value))
    result = harness.run_toy(dataset, config, model)
    text = harness.report(result.head_table, result.results, config, result.selected)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        harness.write_completions(result.results, out / "completions.jsonl")
        harness.write_heads(result.head_table, result.selected, out / "heads.json")
        (out / "heads.tsv").write_text(result.head_table.to_tsv(), encoding="utf-8")
        (out / "report.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_eval(args) -> int:
    dataset = harness.load_dataset(args.dataset, args.family)
    model, config = _load_model(args, _run_config(args, SelectionMode.parse(args.mode).value))
    if args.completions:
        result = harness.run_experiment(dataset, "replay", config, completions=args.completions)
    else:
        result = harness.run_toy(dataset, config, model)
    table, selected = result.head_table, result.selected
    if args.heads_file:
        table, selected = harness.read_heads(args.heads_file)
    _emit(harness.report(table, result.results, config, selected), args.out)
    return 0


def cmd_gen_synth(args) -> int:
    worlds = generate_worlds(args.depth, args.width, args.seed, args.count)
    lines = [
        json.dumps(w.to_record(f"synth-d{args.depth}-s{args.seed}-{i}"), sort_keys=True) + "\n"
        for i, w in enumerate(worlds)
    ]
    _emit("".join(lines), args.out)
    return 0


def cmd_train(args) -> int:
    from .train import TrainConfig, train

    dataset = harness.load_dataset(args.dataset, args.family)
    completions = harness.load_completions(args.completions) if args.completions else {}
    texts = []
    for record in dataset:
        parts = [tag_rules(record.context), record.question, completions.get(record.id, record.answer)]
        texts.append("\n".join(parts))
    cfg = ModelConfig(args.num_layers, args.num_heads, args.num_heads * args.head_dim, args.head_dim, seed=args.seed)
    tc = TrainConfig(args.steps, args.batch_size, args.context, args.lr, args.seed)

    def log(step, loss):
        if step % args.log_every == 0 or step == args.steps - 1:
            print(f"step {step:5d}  loss {loss:.4f}", file=sys.stderr)

    model = train(texts, cfg, tc, log)
    model.save(args.out)
    sys.stdout.write(f"{args.out}\t{model.checksum()}\n")
    return 0


def cmd_viz(args) -> int:
    path, layer, head = parse_matrix_ref(args.matrix)
    trace = import_trace(path)
    table = trace.weights if args.which == "weights" else trace.scores
    if table is None:
        raise AAIError(f"{path} holds no {args.which}")
    if (layer, head) not in table:
        raise AAIError(f"{path} has no layer {layer} head {head}")
    matrix = table[(layer, head)]
    if args.format == "pgm" and not np.isfinite(matrix).all():
        matrix = np.where(np.isfinite(matrix), matrix, np.nan)
        matrix = np.nan_to_num(matrix, nan=float(np.nanmin(matrix)))
    out = args.out or f"L{layer}H{head}.{args.format}"
    harness.heatmap_export(matrix, out, args.format)
    sys.stdout.write(out + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aai", description="Attention head analysis and rule-reference masking.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze-heads", help="classify the heads of an attention trace")
    p.add_argument("--trace", required=True)
    _threshold_args(p)
    p.add_argument("--json", action="store_true", help="JSON instead of TSV")
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze_heads)

    p = sub.add_parser("build-masks", help="reference pair sets for a rule-tagged prompt")
    p.add_argument("--prompt", required=True)
    _mask_args(p)
    _model_args(p)
    p.add_argument("--export-masks", metavar="TRACE", help="write composed masks of every toy-model head")
    p.add_argument("--export-trace", metavar="TRACE", help="write the toy model's baseline attention on the prompt")
    p.add_argument("--out")
    p.set_defaults(func=cmd_build_masks)

    for name, func, helptext in (
        ("run", cmd_run, "generate on the toy model and score"),
        ("eval", cmd_eval, "score completions (replay) or toy-model generations"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--dataset", required=True)
        p.add_argument("--family", default="proofwriter",
                       choices=("proofwriter", "prontoqa", "logical_deduction", "folio", "gsm8k"))
        p.add_argument("--mode", default="aai" if name == "run" else "baseline",
                       choices=[m.value.replace("_", "-") for m in SelectionMode])
        p.add_argument("--style", default="symbolic_aided", choices=("symbolic_aided", "compact"))
        p.add_argument("--shots", type=int, default=0, help="worked examples kept in the prompt (-1 keeps all)")
        p.add_argument("--max-new", type=int, default=48)
        p.add_argument("--calibration-index", type=int, default=0,
                       help="dataset record whose baseline prefill attention selects the heads")
        p.add_argument("--prefill-only", action=argparse.BooleanOptionalAction, default=True,
                       help="intervene during prefill only (default) or also on generated mentions")
        _model_args(p)
        p.add_argument("--model", help="saved model (.npz from `train`) instead of seeded weights")
        _mask_args(p)
        _threshold_args(p)
        p.add_argument("--out", help="output directory" if name == "run" else "report path")
        if name == "eval":
            p.add_argument("--completions")
            p.add_argument("--heads", dest="heads_file", metavar="HEADS_JSON",
                           help="head table written by `run` for the selected-head fraction")
        p.set_defaults(func=func)

    p = sub.add_parser("gen-synth", help="emit synthetic rule-world records as JSONL")
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--width", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("train", help="next-byte training of the toy model (needs PyTorch)")
    p.add_argument("--dataset", required=True)
    p.add_argument("--family", default="proofwriter",
                   choices=("proofwriter", "prontoqa", "logical_deduction", "folio", "gsm8k"))
    p.add_argument("--completions", help="per-record target text (e.g. gold traces); default is the answer")
    _model_args(p)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--context", type=int, default=256)
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--log-every", type=int, default=20)
    p.add_argument("--out", required=True, help="model path (.npz)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("viz", help="export one trace matrix as a heatmap")
    p.add_argument("--matrix", required=True, help="TRACE:LAYER:HEAD")
    p.add_argument("--format", choices=("pgm", "csv"), default="pgm")
    p.add_argument("--which", choices=("weights", "scores"), default="weights")
    p.add_argument("--out")
    p.set_defaults(func=cmd_viz)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "shots", 0) is not None and getattr(args, "shots", 0) < 0:
        args.shots = None
    try:
        return args.func(args)
    except AAIError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
