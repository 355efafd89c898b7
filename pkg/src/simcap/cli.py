"""Command line entry point: ``simcap <scenario> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import experiments
from .config import load_config, parse_override
from .metrics import BOUND_FORMS
from .optimizer import OBJECTIVES


def _grid(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _pairs(text: str) -> tuple[tuple[int, int], ...]:
    out = []
    for item in text.split(","):
        m, _, n = item.strip().lower().partition("x")
        out.append((int(m), int(n)))
    return tuple(out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simcap",
        description="Capacity bounds and phase optimisation for SIM-aided holographic MIMO links.",
    )
    parser.add_argument("scenario", choices=experiments.SCENARIOS)
    parser.add_argument("--config", help="JSON file with system parameters")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="override a config field"
    )
    parser.add_argument("--out", default="out", help="output directory (default: out)")
    parser.add_argument("--seed", type=int, help="master seed (default: config seed)")
    parser.add_argument("--trials", type=int, help="Monte Carlo trials (default 2000, validate 10000)")
    parser.add_argument("--objective", choices=OBJECTIVES, default="clb")
    parser.add_argument("--max-iters", type=int, default=100)
    parser.add_argument("--tol", type=float, default=1e-5, help="relative objective change that stops the ascent")
    parser.add_argument("--step", type=float, default=1.0, help="initial normalised step size")
    parser.add_argument("--starts", type=int, default=5, help="random initialisations per optimisation")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--bound-form", choices=BOUND_FORMS, default="separated")
    parser.add_argument("--snr-grid", type=_grid, help="comma-separated 10log10(rho) values in dB")
    parser.add_argument("--ebn0-grid", type=_grid, help="comma-separated Eb/N0 values in dB (low_snr)")
    parser.add_argument("--low-snr-grid", type=_grid, help="comma-separated rho values in dB for low_snr MC points")
    parser.add_argument("--ref-snr", type=float, help="10log10(rho) at which sweeps optimise phases")
    parser.add_argument("--pairs", type=_pairs, help="(M, N) pairs such as 40x100,20x100")
    parser.add_argument("--curves", help="comma-separated subset of " + ",".join(experiments.CURVES))
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def spec_from_args(args: argparse.Namespace) -> experiments.ExperimentSpec:
    overrides = dict(parse_override(o) for o in args.overrides)
    config = load_config(args.config, overrides)
    extra = {}
    if args.snr_grid:
        extra["snr_grid_db"] = args.snr_grid
    if args.ebn0_grid:
        extra["ebn0_grid_db"] = args.ebn0_grid
    if args.low_snr_grid:
        extra["low_snr_grid_db"] = args.low_snr_grid
    if args.pairs:
        extra["mn_pairs"] = args.pairs
    if args.curves:
        extra["curves"] = tuple(c.strip() for c in args.curves.split(","))
    return experiments.ExperimentSpec(
        scenario=args.scenario,
        config=config,
        output_dir=Path(args.out),
        trials=args.trials,
        seed=args.seed,
        reference_snr_db=args.ref_snr,
        objective=args.objective,
        bound_form=args.bound_form,
        max_iters=args.max_iters,
        tol=args.tol,
        step=args.step,
        starts=args.starts,
        workers=args.workers,
        config_path=args.config,
        overrides=tuple(sorted(overrides.items())),
        **extra,
    )


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        spec = spec_from_args(args)
    except (ValueError, OSError) as exc:
        parser.error(str(exc))
    try:
        result = experiments.run(spec)
    except Exception as exc:  # report scenario context, keep the traceback in verbose mode
        if args.verbose:
            raise
        print(f"simcap {spec.scenario}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if spec.scenario == "validate":
        for name, entry in sorted(result["report"].items()):
            flag = "PASS" if entry["pass"] else "FAIL"
            print(f"{flag} {name}: metric={entry['metric']:.6g} threshold={entry['threshold']:.6g}")
        return 0 if result["ok"] else 1
    for kind, path in result.items():
        print(f"{kind}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
