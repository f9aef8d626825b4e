"""Command-line entry points: generate, train, eval, predict, gradcheck.

Exit codes: 0 success, 2 input error, 3 checkpoint/config mismatch,
1 check failure or training divergence. All file writes are atomic
(temp file + rename).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import statistics
import sys
import time
from dataclasses import replace

from statetrack.corpus import (
    BUILTIN_SCHEMAS,
    NULL_VALUE,
    CorpusError,
    Schema,
    SchemaError,
    Vocabulary,
    build_vocab,
    generate_corpus,
    load_corpus,
    save_corpus,
)
from statetrack.graph import STATS_FIELDS, graph_stats
from statetrack.model import (
    ModelConfig,
    build_params,
    compute_loss,
    predict_dialogue,
)
from statetrack.numerics import (
    ParamStore,
    atomic_write_text,
    check_gradients,
    load_checkpoint,
    save_checkpoint,
)
from statetrack.state import StateOperation
from statetrack.train import (
    DEFAULT_LRS,
    TrainingDiverged,
    TrainSettings,
    build_samples,
    evaluate,
    train,
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT = 2
EXIT_CHECKPOINT = 3


class CheckpointMismatch(RuntimeError):
    pass


class CheckFailed(RuntimeError):
    pass


def _bool_flag(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def _load_schema(args) -> Schema:
    if getattr(args, "builtin_schema", None):
        return BUILTIN_SCHEMAS[args.builtin_schema]()
    if not args.schema:
        raise SchemaError("no schema given: pass --schema or --builtin-schema")
    return Schema.load(args.schema)


def _model_config_from_args(args) -> ModelConfig:
    return ModelConfig(
        d_h=args.d_h, n_heads=args.n_heads, n_layers=args.n_layers,
        d_ff=args.d_ff, use_graph=not args.no_graph,
        n_graph_blocks=args.graph_blocks, n_gcn_layers=args.gcn_layers,
        graph_query=args.graph_query, packed_positions=args.packed_positions,
        max_seq_len=args.max_seq_len,
        max_decode_len=args.max_decode_len, dropout=args.dropout,
    )


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--d-h", type=int, default=64, dest="d_h")
    p.add_argument("--n-heads", type=int, default=4)
    p.add_argument("--n-layers", type=int, default=3)
    p.add_argument("--d-ff", type=int, default=0, dest="d_ff",
                   help="feed-forward width (default 4*d_h)")
    p.add_argument("--no-graph", action="store_true",
                   help="disable the state-graph component entirely")
    p.add_argument("--graph-blocks", type=int, choices=(1, 2), default=1)
    p.add_argument("--gcn-layers", type=int, choices=(1, 2), default=1)
    p.add_argument("--graph-query", choices=("cls", "slot"), default="cls")
    p.add_argument("--packed-positions", action="store_true",
                   help="plain sequential position ids (state spans drift "
                        "with turn length instead of staying anchored)")
    p.add_argument("--max-seq-len", type=int, default=512)
    p.add_argument("--max-decode-len", type=int, default=6)
    p.add_argument("--dropout", type=float, default=0.1)


def _add_schema_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--schema", help="schema JSON path")
    p.add_argument("--builtin-schema", choices=sorted(BUILTIN_SCHEMAS),
                   help="use a built-in schema instead of --schema")


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    schema = _load_schema(args)
    dialogues = generate_corpus(schema, args.n, args.max_turns, args.seed)
    save_corpus(dialogues, args.out)
    if args.write_schema:
        schema.save(args.write_schema)
    n_turns = sum(len(d.turns) for d in dialogues)
    print(f"wrote {len(dialogues)} dialogues ({n_turns} turns) to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _format_log_rows(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["epoch", "op_loss", "gen_loss", "valid_joint"])
    for row in rows:
        writer.writerow([row["epoch"], f"{row['op_loss']:.10g}",
                         f"{row['gen_loss']:.10g}", row["valid_joint"]])
    return buf.getvalue()


def cmd_train(args) -> int:
    schema = _load_schema(args)
    train_dialogues = load_corpus(args.train, schema)
    valid_dialogues = load_corpus(args.valid, schema) if args.valid else None
    config = _model_config_from_args(args)
    vocab = build_vocab(train_dialogues, schema)
    params = build_params(config, schema, vocab, args.seed)
    settings = TrainSettings(
        epochs=args.epochs, seed=args.seed, batch_size=args.batch_size,
        lr={"enc": args.lr_enc, "dec": args.lr_dec, "gcn": args.lr_gcn},
        warmup=args.warmup, eval_every=args.eval_every,
        early_stop_joint=args.early_stop_joint,
    )
    rows = train(train_dialogues, valid_dialogues, schema, vocab, config,
                 params, settings,
                 log_fn=(None if args.quiet else _print_epoch))
    save_checkpoint(args.checkpoint, params,
                    {"model": config.to_dict(), "vocab": vocab.id_to_token,
                     "seed": args.seed},
                    schema.fingerprint())
    if args.log:
        atomic_write_text(args.log, _format_log_rows(rows))
    print(f"trained {rows[-1]['epoch']} epochs; checkpoint at {args.checkpoint}")
    return EXIT_OK


def _print_epoch(row: dict) -> None:
    msg = (f"epoch {row['epoch']:4d}  op_loss {row['op_loss']:.4f}  "
           f"gen_loss {row['gen_loss']:.4f}")
    if row["valid_joint"]:
        msg += f"  valid_joint {row['valid_joint']}"
    print(msg)


# ---------------------------------------------------------------------------
# eval / predict
# ---------------------------------------------------------------------------

def _load_model(args) -> tuple[ParamStore, ModelConfig, Vocabulary, Schema]:
    """Rebuild params from a checkpoint; exit-3 class errors on mismatch."""
    schema = _load_schema(args)
    try:
        arrays, payload, fingerprint = load_checkpoint(args.checkpoint)
    except (ValueError, KeyError) as exc:
        raise CheckpointMismatch(f"unreadable checkpoint: {exc}") from exc
    if fingerprint != schema.fingerprint():
        raise CheckpointMismatch(
            f"checkpoint was trained against a different schema "
            f"(fingerprint {fingerprint} != {schema.fingerprint()})")
    try:
        config = ModelConfig.from_dict(payload["model"])
        vocab = Vocabulary(payload["vocab"])
        params = build_params(config, schema, vocab, seed=0)
        params.load_arrays(arrays)
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointMismatch(f"checkpoint/config mismatch: {exc}") from exc
    return params, config, vocab, schema


def _runtime_config(config: ModelConfig, args) -> ModelConfig:
    """Apply the eval-time overrides that do not change the parameter set."""
    cfg = replace(config)
    if args.no_graph:
        cfg = replace(cfg, use_graph=False)
    if args.graph_query:
        cfg = replace(cfg, graph_query=args.graph_query)
    return cfg


def _measure_latency(dialogues, params, cfg, schema, vocab,
                     use_predicted_prev: bool, repeats: int) -> dict:
    per_turn_ms: list[float] = []
    for _ in range(repeats):
        for dlg in dialogues:
            start = time.perf_counter()
            predict_dialogue(dlg, params, cfg, schema, vocab,
                             use_predicted_prev=use_predicted_prev)
            elapsed = time.perf_counter() - start
            per_turn_ms.append(1000.0 * elapsed / len(dlg.turns))
    return {
        "latency_ms_per_turn_median": statistics.median(per_turn_ms),
        "repeats": repeats,
        "n_dialogues": len(dialogues),
    }


def cmd_eval(args) -> int:
    params, config, vocab, schema = _load_model(args)
    cfg = _runtime_config(config, args)
    dialogues = load_corpus(args.test, schema)
    metrics = evaluate(dialogues, params, cfg, schema, vocab,
                       use_predicted_prev=args.use_predicted_prev)
    stats = graph_stats(dialogues, schema)
    metrics["graph_stats"] = stats
    text = json.dumps(metrics, sort_keys=True, indent=2)
    print(text)
    if args.out:
        atomic_write_text(args.out, text + "\n")
    if args.stats_csv:
        split = args.split_name
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["split", *STATS_FIELDS])
        writer.writerow([split, *[f"{stats[f]:.6g}" for f in STATS_FIELDS]])
        atomic_write_text(args.stats_csv, buf.getvalue())
    if args.latency_out or args.latency_repeats:
        latency = _measure_latency(dialogues, params, cfg, schema, vocab,
                                   args.use_predicted_prev,
                                   max(1, args.latency_repeats))
        print(f"latency: {latency['latency_ms_per_turn_median']:.2f} ms/turn "
              f"(median of {latency['repeats']} repeats)")
        if args.latency_out:
            atomic_write_text(args.latency_out,
                              json.dumps(latency, sort_keys=True, indent=2) + "\n")
    return EXIT_OK


def cmd_predict(args) -> int:
    params, config, vocab, schema = _load_model(args)
    cfg = _runtime_config(config, args)
    dialogues = load_corpus(args.test, schema)
    lines = []
    for dlg in dialogues:
        results = predict_dialogue(dlg, params, cfg, schema, vocab,
                                   use_predicted_prev=args.use_predicted_prev)
        for t, (ops, state) in enumerate(results):
            lines.append(json.dumps({
                "dialogue_id": dlg.dialogue_id,
                "turn": t,
                "operations": {f"{d}.{s}": StateOperation(int(op)).name
                               for (d, s), (op, _) in sorted(ops.items())},
                "state": [[d, s, v] for (d, s), v in state.values.items()
                          if v != NULL_VALUE],
            }, sort_keys=True))
    atomic_write_text(args.out, "".join(line + "\n" for line in lines))
    print(f"wrote {len(lines)} turn predictions to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------

def gradcheck_setup(seed: int = 7):
    """Deterministic toy batch: two turn samples from two dialogues.

    Chosen so every parameter family receives gradient: each sample's
    previous state is non-empty (graph, fusion, placeholder terms) with at
    least one two-domain state (co-occurrence embedding), and each turn
    contains an UPDATE (decoder and copy gate).
    """
    schema = BUILTIN_SCHEMAS["default"]()
    dialogues = generate_corpus(schema, 12, 4, seed)
    vocab = build_vocab(dialogues, schema)
    config = ModelConfig(d_h=64, n_heads=4, n_layers=3, d_ff=128,
                         max_seq_len=256, dropout=0.0)
    picked = []
    for dlg in dialogues:
        samples = build_samples([dlg], schema, vocab, config.max_seq_len)
        for sample in samples:
            filled = sample.prev_state.filled_pairs()
            domains = {d for d, _ in filled}
            need_two = not picked
            if sample.update_targets and (len(domains) >= 2 or not need_two) and filled:
                picked.append(sample)
                break
        if len(picked) == 2:
            break
    if len(picked) < 2:
        raise RuntimeError("could not assemble gradcheck batch; widen the corpus")
    return schema, vocab, config, picked


def cmd_gradcheck(args) -> int:
    schema, vocab, config, batch = gradcheck_setup(args.seed)
    params = build_params(config, schema, vocab, args.seed)

    def loss_fn():
        return compute_loss(batch, params, config, schema, vocab, rng=None)[0]

    report = check_gradients(loss_fn, params, eps=args.eps, tol=args.tol,
                             n_samples=args.fd_samples)
    print(report.format())
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# parser / dispatch
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="statetrack",
        description="Graph-enhanced dialogue state tracker (from-scratch kernel)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dialogue corpus")
    _add_schema_flags(p)
    p.add_argument("--out", required=True, help="output corpus JSONL")
    p.add_argument("--n", type=int, default=100, help="number of dialogues")
    p.add_argument("--max-turns", type=int, default=6)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--write-schema", help="also save the schema JSON here")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a tracker")
    _add_schema_flags(p)
    _add_model_flags(p)
    p.add_argument("--train", required=True, help="training corpus JSONL")
    p.add_argument("--valid", help="validation corpus JSONL")
    p.add_argument("--checkpoint", required=True, help="checkpoint output path")
    p.add_argument("--log", help="training log CSV output path")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr-enc", type=float, default=DEFAULT_LRS["enc"])
    p.add_argument("--lr-dec", type=float, default=DEFAULT_LRS["dec"])
    p.add_argument("--lr-gcn", type=float, default=DEFAULT_LRS["gcn"])
    p.add_argument("--warmup", type=float, default=0.1,
                   help="linear warmup proportion for encoder/decoder groups")
    p.add_argument("--eval-every", type=int, default=10)
    p.add_argument("--early-stop-joint", type=float,
                   help="stop once validation joint accuracy reaches this")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    for name, help_text in (("eval", "evaluate a checkpoint on a split"),
                            ("predict", "dump per-turn predicted states")):
        p = sub.add_parser(name, help=help_text)
        _add_schema_flags(p)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--test", required=True, help="evaluation corpus JSONL")
        p.add_argument("--no-graph", action="store_true",
                       help="run the checkpoint with the graph path disabled")
        p.add_argument("--graph-query", choices=("cls", "slot"),
                       help="override the graph summary query")
        p.add_argument("--use-predicted-prev", type=_bool_flag, default=True,
                       metavar="{true,false}")
        if name == "eval":
            p.add_argument("--out", help="metrics JSON output path")
            p.add_argument("--stats-csv", help="graph statistics CSV output path")
            p.add_argument("--split-name", default="test",
                           help="split label used in the stats CSV")
            p.add_argument("--latency-repeats", type=int, default=0,
                           help="measure per-turn latency with N repeats")
            p.add_argument("--latency-out", help="latency JSON output path")
            p.set_defaults(func=cmd_eval)
        else:
            p.add_argument("--out", required=True, help="predictions JSONL path")
            p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck",
                       help="verify gradients against finite differences")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--fd-samples", type=int, default=200,
                   help="sampled coordinates per large tensor")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CheckpointMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    except (SchemaError, CorpusError, FileNotFoundError, IsADirectoryError,
            NotADirectoryError, PermissionError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
