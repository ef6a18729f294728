"""Learning curves: train SAC and the phi = 1 variant for several seeds, then evaluate.

    python scripts/convergence.py --config configs/scaled.ini --seeds 0 1 2 --out runs/convergence

Writes ``<out>/<policy>_seed<k>/metrics.csv`` (one row per episode) plus
``<out>/summary.csv`` with the evaluation of each trained agent next to the
random and greedy baselines.
"""
import argparse
import logging
from dataclasses import asdict
from pathlib import Path

from dtsync import sac
from dtsync.config import load_config
from dtsync.experiment import CsvSink, EvalSummary, evaluate_policy, policy_factory, run_training


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", type=Path)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--policies", nargs="+", default=["sac", "nosc"], choices=["sac", "nosc"])
    ap.add_argument("--out", type=Path, default=Path("runs/convergence"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    base = load_config(args.config)
    system = base.system
    summaries: list[tuple[int, EvalSummary]] = []
    for name in ("random", "greedy"):
        summaries.append((-1, evaluate_policy(system, policy_factory(name, system), name,
                                              base.eval_episodes, base.eval_seed_base)))

    for policy in args.policies:
        for seed in args.seeds:
            run_dir = args.out / f"{policy}_seed{seed}"
            logging.info("training %s seed %d -> %s", policy, seed, run_dir)
            code = run_training(base.replace(policy=policy, seed=seed), run_dir)
            if code != 0:
                logging.warning("run %s exited with %d", run_dir, code)
                continue
            agent = sac.load_agent(run_dir / "checkpoint", base.train)
            summary = evaluate_policy(system, policy_factory(policy, system, agent), policy,
                                      base.eval_episodes, base.eval_seed_base)
            summaries.append((seed, summary))

    columns = ["seed"] + list(asdict(summaries[0][1]))
    with CsvSink(args.out / "summary.csv", columns) as sink:
        for seed, s in summaries:
            sink.write({"seed": seed, **asdict(s)})
    for seed, s in summaries:
        print(f"{s.policy:>7} seed {seed:>2}: latency {s.mean_latency:.4f} +- {s.std_latency:.4f} s, "
              f"return {s.mean_return:.2f}")


if __name__ == "__main__":
    main()
