"""Command-line entry points.

Exit codes: 0 success, 2 config or usage error, 3 numeric error (including
failed gradient checks), 4 I/O or file-format error.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import List, Optional

from .config import load_config
from .errors import (
    ConfigError,
    DegenerateInputError,
    FormatError,
    NumericError,
    UsageError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def _add_common(sub: argparse.ArgumentParser, config_required: bool = True) -> None:
    sub.add_argument("--config", required=config_required, help="path to a key=value config file")
    sub.add_argument("--seed", type=int, default=None, help="override run.seed")
    sub.add_argument("--out", default=None, help="override run.out (output directory)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latentgraph",
        description="latent geometry graphs: training, distillation, robustness, inspection",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    sub = commands.add_parser("train", help="train a network with the configured objective")
    _add_common(sub)

    sub = commands.add_parser("distill", help="train a student against a teacher's graphs")
    _add_common(sub)

    sub = commands.add_parser("evaluate", help="clean/FGSM/corruption evaluation of saved weights")
    _add_common(sub)

    sub = commands.add_parser("graph-inspect", help="per-layer graphs, eigenmaps, and variation")
    _add_common(sub)

    sub = commands.add_parser("gradcheck", help="finite-difference verification of all objectives")
    _add_common(sub, config_required=False)
    sub.add_argument(
        "--scope",
        choices=("quick", "full"),
        default="full",
        help="quick = 3 instances per family, full = 10",
    )
    return parser


def _overrides(args) -> dict:
    out = {}
    if args.seed is not None:
        out["run.seed"] = str(args.seed)
    if args.out is not None:
        out["run.out"] = os.path.abspath(args.out)
    return out


def _write_overrides(out_dir: Optional[str], overrides: dict) -> None:
    if not overrides or out_dir is None:
        return
    lines = [f"{key} = {value}" for key, value in sorted(overrides.items())]
    with open(os.path.join(out_dir, "overrides.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _run_train(args) -> int:
    from .train import train as run

    overrides = _overrides(args)
    cfg = load_config(args.config, overrides)
    record = run(cfg)
    _write_overrides(cfg.out_dir, overrides)
    print(
        f"train: {cfg.epochs} epochs, final train acc {record.final_train_acc:.4f}, "
        f"test acc {record.final_test_acc:.4f}"
    )
    if cfg.out_dir is not None:
        print(f"train: outputs in {cfg.out_dir}")
    return EXIT_OK


def _run_distill(args) -> int:
    from .train import distill as run

    overrides = _overrides(args)
    cfg = load_config(args.config, overrides)
    record = run(cfg)
    _write_overrides(cfg.out_dir, overrides)
    pairs = ", ".join(f"{t}:{s}" for t, s in record.info["pairs"])
    print(
        f"distill: pairs [{pairs}], teacher {record.info['teacher_parameters']} params, "
        f"student {record.info['parameters']} params"
    )
    print(f"distill: final test acc {record.final_test_acc:.4f}")
    if record.baseline is not None:
        print(f"distill: no-KD baseline test acc {record.baseline.final_test_acc:.4f}")
    if cfg.out_dir is not None:
        print(f"distill: outputs in {cfg.out_dir}")
    return EXIT_OK


def _run_evaluate(args) -> int:
    from .train import evaluate as run

    overrides = _overrides(args)
    cfg = load_config(args.config, overrides)
    report = run(cfg)
    _write_overrides(cfg.out_dir, overrides)
    print(f"evaluate: clean accuracy {report.clean_accuracy:.4f}")
    if report.fgsm_error is not None:
        print(f"evaluate: FGSM error {report.fgsm_error:.4f} at epsilon {report.fgsm_epsilon:.4g}")
    if report.rel_mce is not None:
        print(f"evaluate: relative MCE {report.rel_mce:.2f} vs baseline")
    if cfg.out_dir is not None:
        print(f"evaluate: outputs in {cfg.out_dir}")
    return EXIT_OK


def _run_inspect(args) -> int:
    from .reports import graph_inspect

    overrides = _overrides(args)
    cfg = load_config(args.config, overrides)
    report = graph_inspect(cfg)
    _write_overrides(cfg.out_dir, overrides)
    for rec in report.records:
        print(
            f"graph-inspect: {rec.name}: label variation {rec.label_variation:.6g}, "
            f"normalized {rec.normalized_variation:.6g}, {rec.edge_count} edges"
        )
    if cfg.out_dir is not None:
        print(f"graph-inspect: outputs in {cfg.out_dir}")
    return EXIT_OK


def _run_gradcheck(args) -> int:
    from .gradcheck import run_gradient_suite

    seed = 0
    if args.config is not None:
        cfg = load_config(args.config, _overrides(args))
        seed = cfg.seed
    if args.seed is not None:
        seed = args.seed
    n = 3 if args.scope == "quick" else 10
    results = run_gradient_suite(n_instances=n, seed=seed)
    failed = False
    for res in results:
        status = "ok" if res.passed else "FAIL"
        print(
            f"gradcheck: {res.name}: max rel err {res.max_err:.3e} "
            f"over {res.instances} instances [{status}]"
        )
        failed = failed or not res.passed
    if failed:
        print("gradcheck: FAILED", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"gradcheck: all {len(results)} families passed")
    return EXIT_OK


_COMMANDS = {
    "train": _run_train,
    "distill": _run_distill,
    "evaluate": _run_evaluate,
    "graph-inspect": _run_inspect,
    "gradcheck": _run_gradcheck,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, UsageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, DegenerateInputError) as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except FormatError as e:
        print(f"format error: {e}", file=sys.stderr)
        return EXIT_IO
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
