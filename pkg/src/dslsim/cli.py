"""Command line entry point.

Exit codes: 0 success, 2 config error, 3 numeric failure during a run,
4 gradient-check failure.
"""

from __future__ import annotations

import argparse
import sys

import yaml

from .config import from_dict, load_config
from .core import ConfigError, NumericError, RngStream
from .harness import run, sweep
from .models import ModelSpec, gradient_check

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_CHECK = 4

GRADCHECK_TOL = 1e-5


def _parse_seeds(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        try:
            lo, hi = int(lo), int(hi)
        except ValueError:
            raise ConfigError(f"--seeds: cannot parse range {text!r}") from None
        if hi < lo:
            raise ConfigError(f"--seeds: empty range {text!r}")
        return list(range(lo, hi + 1))
    try:
        return [int(s) for s in text.split(",")]
    except ValueError:
        raise ConfigError(f"--seeds: cannot parse {text!r}") from None


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        from dataclasses import replace

        cfg = replace(cfg, output_dir=args.out)
    history = run(cfg)
    last = history[-1]
    print(
        f"{cfg.algorithm} seed={cfg.seed} rounds={len(history)} "
        f"final_test_acc={last.test_acc:.9g} final_test_loss={last.test_loss:.9g} "
        f"uplink_scalars={last.uplink_scalars} ota_uses={last.ota_uses} "
        f"rejected={last.rejected}"
    )
    if cfg.output_dir:
        print(f"metrics written to {cfg.output_dir}/metrics.csv")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    with open(args.config) as fh:
        base_raw = yaml.safe_load(fh) or {}
    with open(args.overrides) as fh:
        overrides = yaml.safe_load(fh)
    if not isinstance(overrides, list):
        raise ConfigError(f"{args.overrides}: expected a YAML list of override mappings")
    seeds = _parse_seeds(args.seeds)
    rows = sweep(base_raw, overrides, seeds, out_dir=args.out)
    for row in rows:
        cells = [str(row.get(k, "")) for k in ("variant", "seed", "status", "final_test_acc")]
        print("  ".join(cells))
    if args.out:
        print(f"summary written to {args.out}/sweep_summary.csv")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    if args.model == "linear":
        spec = ModelSpec("linear", d_in=12, num_classes=4)
    else:
        spec = ModelSpec("mlp", d_in=12, num_classes=4, hidden=9)
    worst = 0.0
    for probe_seed in (11, 23, 37):
        err = gradient_check(spec, RngStream(probe_seed, "gradcheck"))
        worst = max(worst, err)
    print(f"gradcheck model={args.model} max_rel_err={worst:.3g} tol={GRADCHECK_TOL:g}")
    if worst >= GRADCHECK_TOL:
        print("gradcheck FAILED", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    cfg.validate()
    print(
        f"config ok: algorithm={cfg.algorithm} rounds={cfg.rounds} "
        f"num_workers={cfg.num_workers} seed={cfg.seed}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dslsim",
        description="Deterministic distributed swarm learning simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment")
    p_run.add_argument("--config", required=True, help="YAML config path")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--out", default=None, help="override the output directory")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a grid of config variants")
    p_sweep.add_argument("--config", required=True, help="base YAML config path")
    p_sweep.add_argument(
        "--overrides", required=True, help="YAML list of {dotted.key: value} mappings"
    )
    p_sweep.add_argument(
        "--seeds", required=True, help="seed range A..B or comma-separated list"
    )
    p_sweep.add_argument("--out", default=None, help="directory for per-run outputs")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_grad = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p_grad.add_argument("--model", choices=("linear", "mlp"), required=True)
    p_grad.set_defaults(func=_cmd_gradcheck)

    p_val = sub.add_parser("validate", help="parse and validate a config file")
    p_val.add_argument("--config", required=True, help="YAML config path")
    p_val.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
