"""Command line entry point: ``dtsync train | eval | sweep``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

from .config import POLICIES, SWEEP_AXES, ConfigError, load_config
from .experiment import run_eval, run_sweep, run_training

OUT_ENV = "DTSYNC_OUT"


def _out_root(arg: str | None, default: str) -> Path:
    if arg:
        return Path(arg)
    return Path(os.environ.get(OUT_ENV, default))


def _values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad value list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dtsync", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a SAC agent")
    train.add_argument("--config", type=Path)
    train.add_argument("--seed", type=int)
    train.add_argument("--out", help=f"output directory (default ${OUT_ENV} or the config's out_dir)")
    train.add_argument("--policy", choices=("sac", "nosc"))

    ev = sub.add_parser("eval", help="evaluate a checkpoint or an analytic policy")
    ev.add_argument("--config", type=Path)
    group = ev.add_mutually_exclusive_group(required=True)
    group.add_argument("--checkpoint", type=Path)
    group.add_argument("--policy", choices=POLICIES)
    ev.add_argument("--episodes", type=int)

    sw = sub.add_parser("sweep", help="sweep one system parameter")
    sw.add_argument("--config", type=Path)
    sw.add_argument("--axis", choices=SWEEP_AXES, required=True)
    sw.add_argument("--values", type=_values, required=True,
                    help="comma list; K count, D_range midpoint Mbit, phi_min, f_u_max GHz")
    sw.add_argument("--policy", choices=POLICIES)
    sw.add_argument("--seed", type=int)
    sw.add_argument("--out")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if getattr(args, "seed", None) is not None:
            cfg = cfg.replace(seed=args.seed)
        if args.command != "eval" and args.policy:
            cfg = cfg.replace(policy=args.policy)

        if args.command == "train":
            return run_training(cfg, _out_root(args.out, cfg.out_dir))
        if args.command == "eval":
            if args.episodes:
                cfg = cfg.replace(eval_episodes=args.episodes)
            summary = run_eval(cfg, checkpoint=args.checkpoint, policy=args.policy)
            print(json.dumps(asdict(summary), indent=2))
            return 0
        out = _out_root(args.out, cfg.out_dir)
        path = out / f"sweep_{args.axis}_{cfg.policy}.csv"
        rows = run_sweep(cfg, args.axis, args.values, path)
        print(path)
        return 0 if all(r["status"] == "ok" for r in rows) else 3
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        # unreadable or mismatched checkpoints
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
