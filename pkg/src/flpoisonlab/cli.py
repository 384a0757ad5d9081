"""Command-line entry point: ``flpoisonlab run | sweep | fetch-data``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ExperimentConfig, parse_config, validate, with_overrides
from .errors import ConfigError, FlplError
from .experiment import SWEEP_AXES, run_experiment, sweep
from .fetch import DATASETS, fetch, verify

logger = logging.getLogger("flpoisonlab")


def _load(args) -> ExperimentConfig:
    cfg = parse_config(args.config, args.preset) if args.config else validate(ExperimentConfig())
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out_dir"] = str(args.out)
    return with_overrides(cfg, **changes) if changes else cfg


def _parse_values(axis: str, text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"sweep values for {axis} must be integers: {text!r}") from exc


def cmd_run(args) -> int:
    cfg = _load(args)
    run_experiment(cfg)
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    values = _parse_values(args.axis, args.values)
    results = sweep(cfg, args.axis, values, jobs=args.jobs)
    print(f"{args.axis:>14}  mean_last10  std_round10_on")
    for v, s in results:
        print(f"{v!s:>14}  {s.tail_mean:11.4f}  {s.tail_std:14.4f}")
    return 0


def cmd_fetch(args) -> int:
    path = fetch(args.dataset, Path(args.root) if args.root else None)
    status = verify(args.dataset, Path(args.root) if args.root else None)
    for name, ok in status.items():
        print(f"{name:32} {'ok' if ok else 'unverified' if ok is None else 'MISMATCH'}")
    print(f"data in {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flpoisonlab", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="YAML experiment config (defaults if omitted)")
        sp.add_argument("--preset", choices=["paper"], help="start from the full-scale preset")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", type=Path, help="output directory (overrides out_dir)")

    run = sub.add_parser("run", help="run one experiment")
    common(run)
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="one run per value of an axis")
    common(sw)
    sw.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    sw.add_argument("--values", required=True, help="comma-separated integers, e.g. 1,2,3")
    sw.add_argument("--jobs", type=int, default=1, help="parallel runs (processes)")
    sw.set_defaults(func=cmd_sweep)

    fd = sub.add_parser("fetch-data", help="download and verify a dataset")
    fd.add_argument("dataset", choices=DATASETS)
    fd.add_argument("--root", help="data root (default: $FLPL_DATA_DIR or ~/.cache/flpoisonlab)")
    fd.set_defaults(func=cmd_fetch)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FlplError as exc:
        kind = type(exc).__name__
        print(f"error [{kind}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error [DataFormatError]: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
