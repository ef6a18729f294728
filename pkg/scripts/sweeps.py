"""Latency versus K, demand, extraction-factor floor and local compute.

    python scripts/sweeps.py --policies greedy nosc random          # analytic, about a minute
    python scripts/sweeps.py --policies sac --config configs/scaled.ini --axes K

SAC points retrain per value, so a full SAC sweep at the default budget is
long.  Output: one tidy CSV per (axis, policy) under ``--out``.
"""
import argparse
import logging
from pathlib import Path

from dtsync.config import load_config
from dtsync.experiment import run_sweep

AXES = {
    "K": [2, 4, 6, 8],
    "D_range": [0.6, 0.7, 0.8],
    "phi_min": [0.4, 0.6, 0.8, 1.0],
    "f_u_max": [0.6, 0.8, 1.0],
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", type=Path)
    ap.add_argument("--axes", nargs="+", default=list(AXES), choices=list(AXES))
    ap.add_argument("--policies", nargs="+", default=["greedy", "nosc", "random"],
                    choices=["sac", "nosc", "greedy", "random"])
    ap.add_argument("--out", type=Path, default=Path("runs/sweeps"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = load_config(args.config)
    for axis in args.axes:
        for policy in args.policies:
            path = args.out / f"sweep_{axis}_{policy}.csv"
            rows = run_sweep(cfg.replace(policy=policy), axis, AXES[axis], path)
            cells = "  ".join(f"{r['value']:g}: {r['mean_latency']:.3f}" for r in rows)
            print(f"{axis:>8} {policy:>6}  {cells}")


if __name__ == "__main__":
    main()
