"""Command-line entry point: one subcommand per figure plus ``contour`` and ``validate``.

Every subcommand writes CSV files into ``--out`` and prints their paths.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import figures
from .config import ConfigError, load_config
from .validate import validate

FIGURES = {
    "fig5": (figures.fig5, "angle MSE and CRB vs transmit power"),
    "fig6": (figures.fig6, "blocked-link histogram per user count"),
    "fig7": (figures.fig7, "beam misalignment vs training length"),
    "fig8": (figures.fig8, "position RMSE vs transmit power"),
    "fig9": (figures.fig9, "blockage decision error vs transmit power"),
    "fig10": (figures.fig10, "raw vs refined angle MSE"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="irsbeam", description="Monte-Carlo experiments for IRS-assisted beam training and positioning."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {k: h for k, (_, h) in FIGURES.items()}
    helps["contour"] = "noiseless objective surfaces and peak gaps"
    helps["validate"] = "fast property checks"
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", type=Path, help="TOML config file (defaults if omitted)")
        p.add_argument("--seed", type=int, help="base seed (trial i uses seed + i)")
        p.add_argument("--trials", type=int, help="trials per point")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--workers", type=int, help="worker processes")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config).with_run(
            seed=args.seed,
            trials=args.trials,
            workers=args.workers,
            out=None if args.out is None else str(args.out),
        )
    except (ConfigError, OSError) as exc:
        print(f"irsbeam: {exc}", file=sys.stderr)
        return 2
    out = Path(config.run.out)
    written = []
    try:
        if args.command in FIGURES:
            rows = FIGURES[args.command][0](config)
            written.append(figures.write_csv(out / f"{args.command}.csv", args.command, rows, config))
        elif args.command == "contour":
            grid, peaks = figures.contour(config)
            written.append(figures.write_csv(out / "contour_grid.csv", "contour_grid", grid, config))
            written.append(figures.write_csv(out / "contour_peaks.csv", "contour_peaks", peaks, config))
        else:
            rows = validate(config)
            written.append(figures.write_csv(out / "validate.csv", "validate", rows, config))
            for r in rows:
                status = "PASS" if r["passed"] else "FAIL"
                print(f"{status} {r['check']}: {r['failures']}/{r['instances']} failures, worst {r['worst']:.3g}")
            if not all(r["passed"] for r in rows):
                for p in written:
                    print(p)
                return 1
    except OSError as exc:
        print(f"irsbeam: {exc}", file=sys.stderr)
        return 2
    for p in written:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
