"""Eight circles and a star with a coefficient jump of 3: single-density interface solve for N = 64, 128, 256.

Usage: python scripts/table2.py [--out DIR]
"""
import argparse
from pathlib import Path

from kfbi.experiment import convergence_order, load_config, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()
    report = run_experiment(load_config("table2"), args.out, dump_fields=args.out is not None)
    print(f"{'N':>5} {'N_b':>6} {'iters':>6} {'Linf in':>11} {'Linf out':>11} {'seconds':>8}")
    for r in report.rows:
        print(f"{r.n:5d} {r.n_b:6d} {r.iterations:6d} {r.linf_interior:11.3e} {r.linf_exterior:11.3e} {r.seconds:8.2f}")
    if len(report.rows) > 1:
        o = convergence_order(report)
        print("order Linf in: ", "  ".join(f"{v:.2f}" for v in o["linf_interior"]))
        print("order Linf out:", "  ".join(f"{v:.2f}" for v in o["linf_exterior"]))
    if not report.ok:
        raise SystemExit(f"stopped early: {report.failure}")


if __name__ == "__main__":
    main()
