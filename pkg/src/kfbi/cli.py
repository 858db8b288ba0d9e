"""Command-line entry point: ``kfbi solve <config> [--out DIR] [--tol X] [--grids N1,N2,...]``.

Exit status is 0 on success, 2 when GMRES does not converge and 1 for
invalid configs or geometry.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiment import ConfigError, bundled_configs, convergence_order, load_config, run_experiment, with_overrides

EXIT_OK, EXIT_CONFIG, EXIT_NO_CONVERGENCE = 0, 1, 2


def _grid_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kfbi", description="Kernel-free boundary integral solver on Cartesian grids.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("solve", help="run a convergence sweep from a config file or bundled config name")
    run.add_argument("config", help=f"path to an INI config, or one of: {', '.join(bundled_configs())}")
    run.add_argument("--out", type=Path, default=None, help="output directory (default: the config's [output] directory, else results/<name>)")
    run.add_argument("--tol", type=float, default=None, help="GMRES relative tolerance")
    run.add_argument("--grids", type=_grid_list, default=None, help="grid sizes, e.g. 64,128")
    run.add_argument("--no-fields", action="store_true", help="skip the per-grid field dumps")
    sub.add_parser("configs", help="list bundled configs")
    return parser


def _print_report(report) -> None:
    sys.stdout.write(report.table())
    if len(report.rows) >= 2:
        for norm, orders in convergence_order(report).items():
            shown = " ".join("-" if o is None else f"{o:.2f}" for o in orders)
            print(f"order {norm}: {shown}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "configs":
        print("\n".join(bundled_configs()))
        return EXIT_OK
    try:
        cfg = with_overrides(load_config(args.config), tol=args.tol, sizes=args.grids)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or cfg.output or Path("results") / cfg.name
    report = run_experiment(cfg, out, dump_fields=not args.no_fields)
    _print_report(report)
    print(f"wrote {out}")
    if report.ok:
        return EXIT_OK
    print(f"failed: {report.failure}", file=sys.stderr)
    return EXIT_NO_CONVERGENCE if report.failure_kind == "convergence" else EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
