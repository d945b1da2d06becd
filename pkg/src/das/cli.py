"""Command-line interface.

Subcommands: generate, train, eval, compare, inspect, grad-check.
Exit codes: 0 success, 1 usage error (bad flags or config keys),
2 runtime or numeric fault. DAS_NUM_THREADS caps the BLAS thread pools
(0 or unset = library default).
"""

from __future__ import annotations

import argparse
import json
import os
import sys


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    """argparse that reports usage problems instead of exiting with code 2."""

    def error(self, message):
        raise UsageError(message)


def _cap_threads() -> None:
    value = os.environ.get("DAS_NUM_THREADS", "")
    if value and value != "0":
        for var in (
            "OMP_NUM_THREADS",
            "OPENBLAS_NUM_THREADS",
            "MKL_NUM_THREADS",
            "NUMEXPR_NUM_THREADS",
        ):
            os.environ.setdefault(var, value)


def build_parser() -> Parser:
    parser = Parser(prog="das", description="attention-guided frame subsampling toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[], help="generate a synthetic dataset file")
    p.add_argument("--spec", default=None, help="JSON file of dataset-spec fields (default: built-in spec)")
    p.add_argument("--out", required=True, help="output dataset path")

    p = sub.add_parser("train", help="train one strategy across the configured seeds")
    p.add_argument("--config", required=True, help="JSON run config")
    _add_overrides(p, with_strategy=True)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--deterministic", action="store_true", help="zero selection noise at inference")

    p = sub.add_parser("compare", help="train and compare all strategies")
    p.add_argument("--config", required=True, help="JSON run config")
    _add_overrides(p, with_strategy=False)

    p = sub.add_parser("inspect", help="dump per-item sampling matrices as JSON lines")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--deterministic", action="store_true")

    p = sub.add_parser("grad-check", help="run the finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--num-seeds", type=int, default=100)
    return parser


def _add_overrides(p, with_strategy: bool) -> None:
    if with_strategy:
        p.add_argument("--strategy", default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--max-epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--sample-ratio", type=float, default=None)
    p.add_argument("--tau0", type=float, default=None)
    p.add_argument("--heads", type=int, default=None)
    p.add_argument("--seeds", default=None, help="comma-separated seed list")
    p.add_argument("--dataset", default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--deterministic-eval", action="store_true", default=None)


def _load_run_config(args):
    from dataclasses import replace

    from .train import load_config

    config = load_config(args.config)
    overrides = {}
    mapping = {
        "strategy": "strategy",
        "lr": "lr",
        "batch_size": "batch_size",
        "max_epochs": "max_epochs",
        "patience": "patience",
        "sample_ratio": "sample_ratio",
        "tau0": "tau0",
        "heads": "heads",
        "dataset": "dataset",
        "out_dir": "out_dir",
        "deterministic_eval": "deterministic_eval",
    }
    for arg_name, field in mapping.items():
        value = getattr(args, arg_name, None)
        if value is not None:
            overrides[field] = value
    if getattr(args, "seeds", None) is not None:
        overrides["seeds"] = [int(s) for s in args.seeds.split(",") if s]
    return replace(config, **overrides) if overrides else config


def _cmd_generate(args) -> int:
    from .data import SynthSpec, generate, write_dataset

    fields = {}
    if args.spec is not None:
        with open(args.spec, "r", encoding="utf-8") as fh:
            fields = json.load(fh)
        allowed = set(SynthSpec.__dataclass_fields__)
        unknown = sorted(set(fields) - allowed)
        if unknown:
            raise UsageError(f"unknown dataset-spec key '{unknown[0]}'")
    spec = SynthSpec(**fields)
    dataset = generate(spec)
    write_dataset(dataset, args.out)
    print(f"wrote {len(dataset.items)} items to {args.out}")
    return 0


def _cmd_train(args) -> int:
    from .train import train

    config = _load_run_config(args)
    results = train(config)
    for r in results:
        print(
            f"strategy={config.strategy} seed={r.seed} best_epoch={r.best_epoch} "
            f"test_balanced_accuracy={r.test.balanced_accuracy:.6f} "
            f"test_macro_auc={r.test.macro_auc:.6f} checkpoint={r.checkpoint_path}"
        )
    return 0


def _cmd_eval(args) -> int:
    from .metrics import format_metric
    from .train import evaluate_checkpoint

    res = evaluate_checkpoint(
        args.checkpoint, args.data, split=args.split, deterministic=args.deterministic
    )
    print(
        f"split={args.split} loss={format_metric(res.loss)} "
        f"balanced_accuracy={format_metric(res.balanced_accuracy)} "
        f"macro_auc={format_metric(res.macro_auc)} "
        f"signal_hit_rate={format_metric(res.signal_hit_rate)}"
    )
    return 0


def _cmd_compare(args) -> int:
    from .train import compare

    config = _load_run_config(args)
    rows, _ = compare(config)
    for row in rows:
        mean = row["mean"] if isinstance(row["mean"], str) else f"{row['mean']:.6f}"
        marker = " *" if row["is_best"] else ""
        print(f"{row['strategy']:>8} {row['metric']:<18} {mean}{marker}")
    print(f"comparison table written to {os.path.join(config.out_dir, 'comparison.csv')}")
    return 0


def _cmd_inspect(args) -> int:
    from .train import inspect_checkpoint

    count = inspect_checkpoint(
        args.checkpoint, args.data, args.out, deterministic=args.deterministic
    )
    print(f"wrote {count} sampling records to {args.out}")
    return 0


def _cmd_grad_check(args) -> int:
    from .gradcheck import END_TO_END_TOL, PRIMITIVE_TOL, run_gradient_suite, suite_passes

    results = run_gradient_suite(seed=args.seed, n_seeds=args.num_seeds)
    for name in sorted(results):
        tol = END_TO_END_TOL if name.startswith("end-to-end") else PRIMITIVE_TOL
        status = "ok" if results[name] < tol else "FAIL"
        print(f"{name:<20} max_rel_err={results[name]:.3e}  [{status}]")
    return 0 if suite_passes(results) else 2


COMMANDS = {
    "generate": _cmd_generate,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "compare": _cmd_compare,
    "inspect": _cmd_inspect,
    "grad-check": _cmd_grad_check,
}


def main(argv=None) -> int:
    _cap_threads()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1

    from .autodiff import NumericFault

    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        if "unknown config key" in str(exc) or "unknown dataset-spec key" in str(exc):
            print(f"usage error: {exc}", file=sys.stderr)
            return 1
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericFault as exc:
        print(f"numeric fault: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
