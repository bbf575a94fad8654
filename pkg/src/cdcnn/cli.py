"""Command line: synth, inspect, train, eval, importance.

Exit codes: 0 ok, 2 usage, 3 data validation, 4 numeric failure.
Set ``CDCNN_NUM_THREADS`` to cap BLAS threads.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

from . import dataset as D
from .errors import CheckpointError, CompatibilityError, DataValidationError, NumericError
from .evaluation import confusion_matrix, permutation_importance
from .model import (CDCNN, BaselineConfig, Checkpoint, LinearBaseline, ModelConfig,
                    load_checkpoint, save_checkpoint)
from .numeric import Rng
from .reporting import (confusion_csv, confusion_dict, dataset_fingerprint, importance_csv,
                        importance_dict, sha256_file, write_json)
from .training import TrainConfig, evaluate_split, train

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdcnn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic insole dataset")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--subjects", required=True, type=positive_int)
    p.add_argument("--per-class", required=True, type=positive_int,
                   help="windows per subject per class")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("inspect", help="print the subject x class table")
    p.add_argument("--data", required=True, type=Path)

    p = sub.add_parser("train", help="train the CDCNN or the linear baseline")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--split-spec", type=Path, default=None,
                   help="JSON {train, val, test} subject lists (default: packaged paper_split.json)")
    p.add_argument("--model", required=True, type=Path, help="checkpoint output path")
    p.add_argument("--report", type=Path, default=None,
                   help="train report path (default: train_report.json next to the model)")
    p.add_argument("--lr", type=positive_float, default=0.01)
    p.add_argument("--epochs", type=positive_int, default=300)
    p.add_argument("--patience", type=positive_int, default=20)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--hidden", type=positive_int, default=64)
    p.add_argument("--dropout", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--baseline", action="store_true", help="train the flattened linear baseline")
    p.add_argument("--quiet", action="store_true", help="suppress per-epoch progress lines")

    for name, help_text in (("eval", "accuracy, per-class metrics and confusion matrix"),
                            ("importance", "channel-wise permutation importance")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--data", required=True, type=Path)
        p.add_argument("--model", required=True, type=Path)
        p.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
        p.add_argument("--split-spec", type=Path, default=None,
                       help="override the split stored in the checkpoint")
        if name == "eval":
            p.add_argument("--report", type=Path, default=Path("report.json"))
            p.add_argument("--confusion", type=Path, default=Path("confusion.csv"))
        else:
            p.add_argument("--repeats", type=positive_int, default=5)
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--per-timestep", action="store_true")
            p.add_argument("--out", type=Path, default=Path("importance.csv"))
    return parser


def _print_config(args) -> None:
    resolved = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()}
    print("config: " + json.dumps(resolved, sort_keys=True))


def cmd_synth(args) -> None:
    ds = D.generate_synthetic(args.subjects, args.per_class, args.seed)
    D.write_dataset(ds, args.out)
    print(f"wrote {len(ds)} windows from {args.subjects} subjects to {args.out}")


def cmd_inspect(args) -> None:
    ds = D.load_dataset(args.data, mmap=True)
    table = D.subject_class_table(ds)
    print(table.format())
    print("class totals: " + ", ".join(
        f"{n} {int(c)}" for n, c in zip(table.label_names, table.column_totals)))
    print(f"total windows: {table.total}")


def cmd_train(args) -> None:
    spec = D.SplitSpec.from_json(args.split_spec) if args.split_spec else D.default_split()
    cfg = TrainConfig(lr=args.lr, max_epochs=args.epochs, patience=args.patience,
                      batch_size=args.batch, dropout=args.dropout, seed=args.seed,
                      standardize=not args.no_standardize)
    ds = D.load_dataset(args.data)
    train_split, val_split, test_split, norm = D.prepare_splits(ds, spec, cfg.standardize)
    print(f"split sizes: train {len(train_split)}, val {len(val_split)}, test {len(test_split)}")
    if args.baseline:
        model = LinearBaseline.init(BaselineConfig(ds.num_channels, ds.time_steps,
                                                   len(ds.label_names)))
    else:
        model = CDCNN.init(ModelConfig(ds.num_channels, ds.time_steps, args.hidden,
                                       dropout=cfg.dropout, num_classes=len(ds.label_names)),
                           Rng(cfg.seed).derive(0))
    log = (lambda _msg: None) if args.quiet else print
    best, report = train(model, train_split, val_split, cfg, log=log)
    print(f"best epoch {report.best_epoch}, stopped at {report.stopped_epoch}, "
          f"val_acc {report.best_val_acc:.4f}, wall time {report.wall_time:.1f}s")

    ckpt = Checkpoint(best, list(ds.channel_names), list(ds.label_names),
                      norm.mean if norm else None, norm.std if norm else None,
                      extra={"split": spec.to_dict(), "train_config": asdict(cfg)})
    args.model.parent.mkdir(parents=True, exist_ok=True)
    args.model.write_bytes(save_checkpoint(ckpt))

    out = report.to_dict()
    out["model_kind"] = best.kind
    out["model_config"] = best.config.to_dict()
    out["train_config"] = asdict(cfg)
    out["split"] = spec.to_dict()
    out["num_parameters"] = best.num_parameters()
    if len(test_split):
        out["test_acc"] = evaluate_split(best, test_split)
        print(f"test accuracy {out['test_acc']:.4f}")
    out["data"] = dataset_fingerprint(args.data)
    report_path = args.report or args.model.parent / "train_report.json"
    write_json(report_path, out)
    print(f"wrote {args.model} and {report_path}")


def _load_split_for_eval(args):
    ckpt = load_checkpoint(args.model.read_bytes())
    ds = D.load_dataset(args.data)
    if tuple(ckpt.channel_names) != ds.channel_names:
        raise CompatibilityError("checkpoint channel_names differ from the dataset's")
    if tuple(ckpt.label_names) != ds.label_names:
        raise CompatibilityError("checkpoint label_names differ from the dataset's")
    if args.split_spec:
        spec = D.SplitSpec.from_json(args.split_spec)
    elif "split" in (ckpt.extra or {}):
        spec = D.SplitSpec.from_dict(ckpt.extra["split"])
    else:
        spec = None
    if args.split == "all":
        split = ds
    else:
        if spec is None:
            raise DataValidationError("no split in the checkpoint; pass --split-spec")
        split = dict(zip(("train", "val", "test"), D.split_by_subject(ds, spec)))[args.split]
    if len(split) == 0:
        raise DataValidationError(f"split {args.split!r} is empty")
    if ckpt.normalizer_mean is not None:
        split = D.apply_normalizer(split, D.Normalizer(ckpt.normalizer_mean, ckpt.normalizer_std))
    provenance = {"data": dataset_fingerprint(args.data), "model": sha256_file(args.model),
                  "split": args.split,
                  "train_seed": ckpt.extra.get("train_config", {}).get("seed")}
    return ckpt, split, provenance


def cmd_eval(args) -> None:
    ckpt, split, provenance = _load_split_for_eval(args)
    cm = confusion_matrix(ckpt.model, split)
    report = confusion_dict(cm)
    report["provenance"] = provenance
    write_json(args.report, report)
    args.confusion.write_text(confusion_csv(cm))
    print(f"{args.split} accuracy {cm.accuracy:.6g} over {cm.total} windows")
    print(f"wrote {args.report} and {args.confusion}")


def cmd_importance(args) -> None:
    ckpt, split, provenance = _load_split_for_eval(args)
    rep = permutation_importance(ckpt.model, split, args.repeats, args.seed, args.per_timestep)
    args.out.write_text(importance_csv(rep))
    out = importance_dict(rep)
    out["provenance"] = provenance
    json_path = args.out.with_suffix(".json")
    write_json(json_path, out)
    print(f"baseline accuracy {rep.baseline_accuracy:.6g}; top channel "
          f"{rep.channel_names[rep.ranking()[0]]}")
    print("group sums: " + ", ".join(f"{g} {v:.6g}" for g, v in rep.group_sums().items()))
    print(f"wrote {args.out} and {json_path}")


COMMANDS = {"synth": cmd_synth, "inspect": cmd_inspect, "train": cmd_train,
            "eval": cmd_eval, "importance": cmd_importance}


def _thread_limit():
    threads = os.environ.get("CDCNN_NUM_THREADS")
    if not threads:
        return None
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=int(threads))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _print_config(args)
    limiter = _thread_limit()
    try:
        COMMANDS[args.command](args)
    except (DataValidationError, CheckpointError, FileNotFoundError) as exc:
        print(f"error [data]: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error [numeric]: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error [usage]: {exc}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        if limiter is not None:
            limiter.restore_original_limits()
    return 0


if __name__ == "__main__":
    sys.exit(main())
