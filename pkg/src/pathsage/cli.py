"""Command-line entry point.

Subcommands: ingest, synth, sample, train, eval, attn-dump, attn-stats.
Settings resolve as flag > config file > default; logs are line-oriented
JSON on stderr, command outputs go to stdout or the requested file.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .errors import DataError, NumericalError, PathSageError
from .graph import load_dataset, write_features_bin
from .metrics import attention_stats, dump_attention, eval_runs, eval_split
from .model import ModelConfig, PathSageModel
from .sampler import SamplePlan, derive_sample_seed, rng_for, sample_paths
from .synth import synth_planted_khop
from .trainer import TrainConfig, fit, load_model_checkpoint

log = logging.getLogger("pathsage")

CONFIG_DEFAULTS = {
    "dataset": None,
    "out": None,
    "checkpoint": None,
    "seed": 0,
    "workers": 1,
    "epochs": 10,
    "depth": 8,
    "counts": [5, 5, 5, 5, 5, 10, 10, 10],
    "hidden": 128,
    "heads": 8,
    "layers": 2,
    "batch_size": 32,
    "lr": 1e-3,
    "warmup_ratio": 0.1,
    "dropout_encoder": 0.1,
    "dropout_output": 0.3,
    "runs": 5,
    "node": None,
    "split": "test",
    "log_interval": 1,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _setup_logging():
    level = {"debug": logging.DEBUG, "info": logging.INFO}.get(
        os.environ.get("PATHSAGE_LOG", "info").lower(), logging.INFO)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(level)


def _log_json(**fields):
    log.info(json.dumps(fields, sort_keys=True))


def _parse_counts(text):
    return [int(c) for c in str(text).split(",") if c != ""]


def resolve_config(args):
    """Merge defaults <- config file <- explicitly-set flags."""
    cfg = dict(CONFIG_DEFAULTS)
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            raw = json.loads(Path(config_path).read_text())
        except FileNotFoundError:
            raise DataError(f"config file not found: {config_path}") from None
        except json.JSONDecodeError as exc:
            raise DataError(f"config file {config_path}: {exc}") from None
        unknown = set(raw) - set(cfg)
        if unknown:
            raise DataError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(raw)
    for key in cfg:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if isinstance(cfg["counts"], str):
        cfg["counts"] = _parse_counts(cfg["counts"])
    return cfg


def _train_config(cfg, depth=None, counts=None):
    depth = depth if depth is not None else cfg["depth"]
    counts = counts if counts is not None else cfg["counts"]
    return TrainConfig(
        epochs=cfg["epochs"], seed=cfg["seed"], depth_s=depth,
        counts_per_length=tuple(counts), hidden=cfg["hidden"], heads=cfg["heads"],
        layers=cfg["layers"], batch_size=cfg["batch_size"], lr=cfg["lr"],
        warmup_ratio=cfg["warmup_ratio"], dropout_encoder=cfg["dropout_encoder"],
        dropout_output=cfg["dropout_output"])


def _require(cfg, key, flag):
    if cfg.get(key) is None:
        raise DataError(f"missing required setting {flag}")
    return cfg[key]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_ingest(args):
    cfg = resolve_config(args)
    src = Path(args.input)
    out = Path(_require(cfg, "out", "--out"))
    out.mkdir(parents=True, exist_ok=True)
    for name in ("meta.json", "edges.csv", "labels.csv", "splits.json"):
        if not (src / name).is_file():
            raise DataError(f"missing input file {src / name}")
        (out / name).write_bytes((src / name).read_bytes())
    feats_csv = src / "features.csv"
    if not feats_csv.is_file():
        raise DataError(f"missing input file {feats_csv}")
    features = np.loadtxt(feats_csv, delimiter=",", dtype=np.float32, ndmin=2)
    write_features_bin(out / "features.bin", features)
    load_dataset(out)  # validation pass
    _log_json(event="ingest", out=str(out), nodes=int(features.shape[0]))
    return 0


def cmd_synth(args):
    cfg = resolve_config(args)
    out = _require(cfg, "out", "--out")
    synth_planted_khop(out, num_nodes=args.nodes, avg_degree=args.avg_degree,
                       k=args.k, num_classes=args.classes, seed=cfg["seed"],
                       topology=args.topology)
    _log_json(event="synth", out=str(out), nodes=args.nodes, k=args.k,
              classes=args.classes, seed=cfg["seed"], topology=args.topology)
    return 0


def cmd_sample(args):
    cfg = resolve_config(args)
    graph, _, _ = load_dataset(_require(cfg, "dataset", "--dataset"))
    node = _require(cfg, "node", "--node")
    plan = SamplePlan(cfg["depth"], tuple(cfg["counts"]))
    batch = sample_paths(graph, node, plan,
                         rng_for(derive_sample_seed(cfg["seed"], 0, node)))
    for l, walks in enumerate(batch.paths_by_length, start=1):
        for row in walks:
            print(json.dumps({"length": l, "path": [int(v) for v in row]}))
    return 0


def cmd_train(args):
    cfg = resolve_config(args)
    graph, labels, splits = load_dataset(_require(cfg, "dataset", "--dataset"))
    tc = _train_config(cfg)
    mc = ModelConfig(feature_dim=graph.feature_dim, num_classes=labels.num_classes,
                     task=labels.task, hidden=tc.hidden, heads=tc.heads,
                     layers=tc.layers, depth_s=tc.depth_s,
                     dropout_encoder=tc.dropout_encoder,
                     dropout_output=tc.dropout_output)
    model = PathSageModel.init(mc, rng_for(derive_sample_seed(tc.seed, 0, 0xC0DE)))
    ckpt = cfg["checkpoint"]
    if ckpt is None:
        out = Path(cfg["out"] or ".")
        out.mkdir(parents=True, exist_ok=True)
        ckpt = out / "checkpoint.psck"

    def eval_fn(m, epoch):
        return eval_split(m, graph, labels, splits.val, tc.counts_per_length,
                          tc.seed)

    interval = max(int(cfg["log_interval"]), 1)

    def log_fn(record):
        if record["epoch"] % interval == 0:
            _log_json(event="epoch", **record)

    result = fit(model, graph, labels, splits, tc,
                 checkpoint_path=ckpt,
                 eval_fn=eval_fn if len(splits.val) else None,
                 log_fn=log_fn, workers=cfg["workers"])
    summary = {"event": "train_done", "epochs_run": result.epochs_run,
               "best_val_micro_f1": result.best_val, "checkpoint": str(ckpt)}
    _log_json(**summary)
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_eval(args):
    cfg = resolve_config(args)
    model, _, tc, _ = load_model_checkpoint(_require(cfg, "checkpoint", "--checkpoint"))
    graph, labels, splits = load_dataset(_require(cfg, "dataset", "--dataset"))
    split = cfg["split"]
    nodes = getattr(splits, split, None)
    if nodes is None:
        raise DataError(f"unknown split {split!r}")
    report = eval_runs(model, graph, labels, nodes, tc.counts_per_length,
                       cfg["seed"], runs=cfg["runs"], split_name=split)
    text = json.dumps(report, sort_keys=True)
    if cfg["out"]:
        Path(cfg["out"]).write_text(text + "\n")
    print(text)
    return 0


def cmd_attn_dump(args):
    cfg = resolve_config(args)
    model, _, tc, _ = load_model_checkpoint(_require(cfg, "checkpoint", "--checkpoint"))
    graph, labels, _ = load_dataset(_require(cfg, "dataset", "--dataset"))
    node = _require(cfg, "node", "--node")
    out = _require(cfg, "out", "--out")
    count = dump_attention(model, graph, labels, node, tc.counts_per_length,
                           cfg["seed"], out)
    _log_json(event="attn_dump", node=node, records=count, out=str(out))
    return 0


def cmd_attn_stats(args):
    cfg = resolve_config(args)
    stats = attention_stats(args.dump)
    text = json.dumps(stats, sort_keys=True)
    if cfg["out"]:
        Path(cfg["out"]).write_text(text + "\n")
    print(text)
    return 0


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--config")
    p.add_argument("--dataset")
    p.add_argument("--out")
    p.add_argument("--checkpoint")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--counts", type=_parse_counts)
    p.add_argument("--hidden", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--warmup-ratio", dest="warmup_ratio", type=float)
    p.add_argument("--runs", type=int)
    p.add_argument("--node", type=int)
    p.add_argument("--split")
    p.add_argument("--log-interval", dest="log_interval", type=int)


def build_parser():
    parser = _Parser(prog="pathsage")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="convert raw CSVs to the dataset layout")
    p.add_argument("--input", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("synth", help="generate a planted-k-hop dataset")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--avg-degree", dest="avg_degree", type=float, default=3.0)
    p.add_argument("--topology", choices=("er", "ring"), default="er")
    _add_common(p)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("sample", help="print sampled paths as JSON lines")
    _add_common(p)
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("train", help="train a model")
    _add_common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    _add_common(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("attn-dump", help="dump attention weights for a node")
    _add_common(p)
    p.set_defaults(fn=cmd_attn_dump)

    p = sub.add_parser("attn-stats", help="aggregate an attention dump")
    p.add_argument("--dump", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_attn_stats)

    return parser


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 0
    try:
        return args.fn(args)
    except NumericalError as exc:
        print(f"pathsage: numerical failure: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"pathsage: data error: {exc}", file=sys.stderr)
        return 2
    except PathSageError as exc:
        print(f"pathsage: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
