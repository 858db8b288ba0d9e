"""Run a convergence sweep from a config and print the error table and observed orders.

Usage: python scripts/convergence.py CONFIG [--grids 32,64,128] [--out DIR]
CONFIG is a path or a bundled config name (see ``kfbi configs``).
"""
import argparse
from pathlib import Path

from kfbi.experiment import convergence_order, load_config, run_experiment, with_overrides


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--grids", default=None, help="comma-separated grid sizes")
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()
    sizes = tuple(int(v) for v in args.grids.split(",")) if args.grids else None
    cfg = with_overrides(load_config(args.config), sizes=sizes)
    report = run_experiment(cfg, args.out, dump_fields=args.out is not None)
    print(report.table(), end="")
    if len(report.rows) > 1:
        for norm, orders in convergence_order(report).items():
            print(f"{norm:>14}: " + "  ".join("   -" if o is None else f"{o:4.2f}" for o in orders))
    if not report.ok:
        raise SystemExit(f"stopped early: {report.failure}")


if __name__ == "__main__":
    main()
