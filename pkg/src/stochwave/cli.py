"""Command line entry point: run presets or config files, with flag overrides.

Precedence is flag > config file > preset default.  Exit status: 0 on
success, 1 when a computation fails (e.g. too many Newton failures), 2 on
config or validation errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .drift import SCHEMES
from .experiments import (
    PRESETS,
    ExperimentConfig,
    RateStudy,
    StabilityStudy,
    AnalyticStudy,
    config_from_dict,
    preset_config,
    run_experiment,
    validate_config,
)

__all__ = ["main", "build_parser", "apply_overrides"]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="stochwave",
        description=(
            "Finite element experiments for a nonlinear stochastic wave "
            "equation: convergence-rate tables and Monte Carlo stability series."
        ),
    )
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=sorted(PRESETS), help="named experiment")
    src.add_argument("--config", type=Path, help="JSON experiment config file")
    p.add_argument("--samples", type=int, help="override Monte Carlo sample count")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--tau", type=float, help="override scalar time steps")
    p.add_argument("--h-level", type=int, help="override single-level mesh resolutions")
    p.add_argument("--scheme", choices=SCHEMES, help="drift discretization")
    p.add_argument("--threads", type=int, help="worker count (results independent)")
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    p.add_argument(
        "--paper-scale",
        action="store_true",
        help="full ladders and 5000 samples instead of desk-scale defaults",
    )
    return p


def apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    if args.samples is not None:
        cfg.n_samples = args.samples
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.scheme is not None:
        cfg.scheme = args.scheme
    if args.threads is not None:
        cfg.threads = args.threads
    for study in cfg.studies:
        if args.tau is not None:
            if isinstance(study, RateStudy) and study.mode == "spatial":
                study.taus = [args.tau]
            elif isinstance(study, (StabilityStudy, AnalyticStudy)):
                study.tau = args.tau
        if args.h_level is not None:
            if isinstance(study, RateStudy) and study.mode == "temporal":
                study.levels = [args.h_level]
            elif isinstance(study, StabilityStudy):
                study.level = args.h_level
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.preset:
            cfg = preset_config(args.preset, paper_scale=args.paper_scale)
        else:
            try:
                raw = json.loads(args.config.read_text())
            except (OSError, json.JSONDecodeError) as exc:
                print(f"error: cannot read config {args.config}: {exc}", file=sys.stderr)
                return 2
            cfg = config_from_dict(raw)
    except (KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    cfg = apply_overrides(cfg, args)
    problems = validate_config(cfg)
    if problems:
        print("invalid configuration:", file=sys.stderr)
        for msg in problems:
            print(f"  {msg}", file=sys.stderr)
        return 2

    try:
        result = run_experiment(cfg, args.out)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    for study in result.studies:
        for f in study.files:
            print(f"wrote {result.out_dir / f}")
    print(f"wrote {result.manifest_path}")
    if result.n_failures:
        print(f"note: {result.n_failures} sample(s) hit Newton failures")
    return 0


if __name__ == "__main__":
    sys.exit(main())
