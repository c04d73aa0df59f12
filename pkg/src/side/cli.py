"""Command-line entry point: ``side <subcommand> ...``.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import gradcheck
from .cidf import select_intermediate, write_selection
from .config import TrainConfig
from .data import ShiftSpec, generate_pair, read_dataset, write_dataset
from .errors import ConfigError, DatasetFormatError, NumericalError
from .network import load_checkpoint, save_checkpoint
from .source import pretrain, write_source_metrics
from .trainer import (adapt, evaluate, export_embeddings, label_monitor, summarize,
                      write_metrics, write_summary)

log = logging.getLogger("side")

EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 2, 3, 4

# flag name -> TrainConfig field
_CONFIG_FLAGS = {
    "tau": float, "alpha": float, "gamma": float, "epsilon": float, "n_m": int,
    "epochs": int, "batch_size": int, "lr_backbone": float, "lr_classifier": float,
    "lr_projector": float, "beta": float, "r": int, "omega": float, "seed": int,
    "mix_lambda": float, "source_epochs": int, "source_lr_backbone": float,
    "source_lr_classifier": float,
}
_AUG_FLAGS = {"jitter_sigma": float, "scale_range": float, "rotation_max_deg": float}


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="JSON file with TrainConfig fields")
    for name, typ in {**_CONFIG_FLAGS, **_AUG_FLAGS}.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)
    p.add_argument("--hidden", type=lambda s: [int(v) for v in s.split(",")], default=None,
                   help="encoder hidden widths, comma separated")
    p.add_argument("--feature-dim", type=int, default=None)
    p.add_argument("--projector-hidden", type=int, default=None)
    p.add_argument("--projector-out", type=int, default=None)
    p.add_argument("--frozen-prototypes", action="store_true", default=None)
    p.add_argument("--no-cyclic", dest="cyclic_filtering", action="store_false", default=None)
    p.add_argument("--freeze-classifier", action="store_true", default=None)


def build_config(args, data=None) -> TrainConfig:
    cfg = TrainConfig.load(args.config) if args.config else TrainConfig()
    for name in _CONFIG_FLAGS:
        if getattr(args, name) is not None:
            setattr(cfg, name, getattr(args, name))
    for name in _AUG_FLAGS:
        if getattr(args, name) is not None:
            setattr(cfg.aug, name, getattr(args, name))
    for flag in ("frozen_prototypes", "cyclic_filtering", "freeze_classifier"):
        if getattr(args, flag) is not None:
            setattr(cfg, flag, getattr(args, flag))
    arch_flags = {"encoder_hidden": args.hidden, "feature_dim": args.feature_dim,
                  "projector_hidden": args.projector_hidden, "projector_out": args.projector_out}
    for name, value in arch_flags.items():
        if value is not None:
            setattr(cfg.arch, name, value)
    if data is not None:
        cfg.arch.input_dim = data.features.shape[1]
        cfg.arch.class_count = data.num_classes
    return cfg.validate()


def cmd_gen_data(args):
    if args.family == "two_moons":
        shift = float(args.shift)
    else:
        shift = [float(v) for v in args.shift.split(",")]
    spec = ShiftSpec(args.family, args.k, args.n_per_class, args.noise, shift, args.seed)
    source, target = generate_pair(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(source, out / "source.csv", spec.manifest("source"))
    write_dataset(target, out / "target.csv", spec.manifest("target"))
    print(f"wrote {out / 'source.csv'} and {out / 'target.csv'}")


def cmd_pretrain(args):
    source = read_dataset(args.source)
    cfg = build_config(args, source)
    bundle, history = pretrain(source, cfg.source_config())
    save_checkpoint(bundle, args.out)
    if args.metrics:
        write_source_metrics(history, args.metrics)
    if history:
        print(f"source accuracy {history[-1]['source_acc']:.4f}")


def cmd_adapt(args):
    target = read_dataset(args.target)
    cfg = build_config(args, target)
    source_model = load_checkpoint(args.checkpoint)
    if source_model.arch.input_dim != cfg.arch.input_dim or source_model.arch.class_count != cfg.arch.class_count:
        raise ConfigError("checkpoint architecture does not match the target data")
    cfg.arch = source_model.arch
    source_only = evaluate(source_model, target)
    selections = []
    bundle, history = adapt(source_model, target.unlabeled(), cfg, label_monitor(target), selections)
    save_checkpoint(bundle, args.out)
    if args.metrics:
        write_metrics(history, args.metrics)
    summary = summarize(history, source_only)
    if args.summary:
        write_summary(summary, args.summary)
    if args.selection_dump:
        write_selection(selections, args.selection_dump)
    print(f"source-only {source_only:.4f} -> adapted {summary['final_target_acc']:.4f}")


def cmd_eval(args):
    data = read_dataset(args.data)
    print(f"{evaluate(load_checkpoint(args.checkpoint), data):.6f}")


def cmd_grad_check(args):
    worst = gradcheck.run_all(args.instances, args.step)
    failed = False
    for name, err in worst.items():
        ok = err <= args.tol
        failed |= not ok
        print(f"{'PASS' if ok else 'FAIL'} {name:12s} max rel err {err:.3e}")
    return EXIT_NUMERIC if failed else 0


def cmd_export_embeddings(args):
    data = read_dataset(args.data)
    bundle = load_checkpoint(args.checkpoint)
    view = data.unlabeled()
    inter = None
    if args.n_m:
        inter = select_intermediate(bundle, view, bundle.classifier_weight, args.n_m)
    export_embeddings(bundle, view, args.out, inter)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="side", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic source/target pair")
    p.add_argument("--family", choices=["two_moons", "gauss_blobs"], default="two_moons")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--n-per-class", type=int, default=200)
    p.add_argument("--noise", type=float, default=0.15)
    p.add_argument("--shift", default="45", help="degrees (two_moons) or comma-separated vector")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("pretrain", help="train the source model")
    p.add_argument("--source", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--metrics")
    _add_config_flags(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("adapt", help="adapt a source checkpoint to a target set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--metrics")
    p.add_argument("--summary")
    p.add_argument("--selection-dump")
    _add_config_flags(p)
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("eval", help="accuracy of a checkpoint on a labelled set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grad-check", help="finite-difference check of every loss")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("export-embeddings", help="write encoder features as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-m", type=int, default=5, help="flag this many intermediate samples per class (0: none)")
    p.set_defaults(func=cmd_export_embeddings)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args) or 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, DatasetFormatError, json.JSONDecodeError, KeyError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
