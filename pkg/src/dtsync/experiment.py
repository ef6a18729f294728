"""Training, evaluation and sweep orchestration with reproducible CSV output."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from . import sac
from .baselines import GreedyPolicy, NoScPolicy, PolicyHandle, RandomPolicy, SacPolicy, pin_phi
from .config import ConfigError, ExperimentConfig, SystemConfig
from .dynamics import POLICY_TAG, make_rng
from .env import Bounds, DtSyncEnv

log = logging.getLogger(__name__)

METRICS_COLUMNS = [f.name for f in fields(sac.EpisodeRow)]
SWEEP_COLUMNS = ["axis", "value", "policy", "mean_latency", "std_latency", "mean_return", "status"]


class CsvSink:
    """Append-only CSV writer: header once, each row emitted by a single write and flushed."""

    def __init__(self, path: str | Path, columns: list[str]):
        self.path = Path(path)
        self.columns = columns
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", encoding="utf-8", newline="")
        self._emit(columns)

    def _emit(self, values: Iterable) -> None:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerow(values)
        self._fh.write(buf.getvalue())
        self._fh.flush()

    def write(self, row: dict) -> None:
        self._emit([row[c] for c in self.columns])

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "CsvSink":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


# --------------------------------------------------------------------------- training

def train_agent(cfg: ExperimentConfig, on_episode=None, on_epoch=None) -> tuple[sac.Agent, list[sac.EpisodeRow]]:
    """Train SAC on ``cfg.system``; policy ``nosc`` trains with the extraction factor pinned to 1."""
    env = DtSyncEnv(cfg.system)
    k = cfg.system.num_uds
    action_filter = (lambda a: pin_phi(a, k)) if cfg.policy == "nosc" else None
    return sac.train(env, cfg.train, seed=cfg.seed, action_filter=action_filter,
                     on_episode=on_episode, on_epoch=on_epoch)


def run_training(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> int:
    """Train, stream ``metrics.csv`` and keep ``checkpoint/`` current at every epoch end.

    Returns 0 on success, 1 for a policy that cannot be trained, 2 when training diverged
    (the last completed epoch's checkpoint is left in place).
    """
    if cfg.policy not in ("sac", "nosc"):
        log.error("policy %r is analytic; only sac and nosc are trained", cfg.policy)
        return 1
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "checkpoint"
    with CsvSink(out / "metrics.csv", METRICS_COLUMNS) as sink:
        try:
            agent, _ = train_agent(
                cfg,
                on_episode=lambda row, _agent: sink.write(asdict(row)),
                on_epoch=lambda _epoch, a: sac.save_agent(a, ckpt),
            )
        except sac.TrainingDiverged as exc:
            log.error("training diverged: %s (checkpoint of last finished epoch kept in %s)", exc, ckpt)
            return 2
    sac.save_agent(agent, ckpt)
    return 0


# --------------------------------------------------------------------------- evaluation

@dataclass
class EvalSummary:
    policy: str
    episodes: int
    mean_latency: float
    std_latency: float
    mean_t_dt: float
    mean_return: float
    std_return: float
    deadline_violation_rate: float
    energy_violation_rate: float
    edge_violation_rate: float
    max_edge_usage: float
    max_decomposition_error: float
    bounds_respected: bool


def _in_bounds(decoded, cfg: SystemConfig) -> bool:
    b = Bounds.from_config(cfg)
    a = decoded.action
    return all(
        bool(np.all((v >= lo) & (v <= hi)))
        for v, (lo, hi) in ((a.phi, b.phi), (a.f_loc, b.f_loc), (a.p_tx, b.p_tx))
    )


def evaluate_policy(system: SystemConfig, make: Callable[[int], PolicyHandle], name: str,
                    episodes: int = 50, seed_base: int = 1000) -> EvalSummary:
    """Roll out ``episodes`` episodes on seeds ``seed_base + i`` and aggregate.

    ``make(seed)`` builds the policy for one episode so stochastic baselines
    are reseeded per episode.
    """
    env = DtSyncEnv(system)
    latencies, returns, t_dts = [], [], []
    n_ud_slots = n_slots = 0
    deadline_hits = energy_hits = edge_hits = 0
    max_edge = max_resid = 0.0
    bounds_ok = True
    for i in range(episodes):
        seed = seed_base + i
        policy = make(seed)
        state = env.reset(seed)
        ep_lat, ep_ret = [], 0.0
        while not env.done:
            tr = env.step(policy.act(state))
            m, p, d = env.last_metrics, env.last_penalties, env.last_decoded
            ep_lat.append(m.total_latency)
            t_dts.extend(m.t_dt.tolist())
            ep_ret += tr.reward
            resid = abs(tr.reward + m.total_latency + p.deadline + p.energy + p.edge)
            max_resid = max(max_resid, resid / max(1.0, abs(tr.reward)))
            n_ud_slots += system.num_uds
            n_slots += 1
            deadline_hits += int(np.sum(m.t_dt > system.deadline))
            energy_hits += int(np.sum(m.e_total > system.e_u_max))
            edge_hits += int(d.requested_edge_sum > system.f_e_max)
            max_edge = max(max_edge, float(np.sum(d.action.f_edge)) / system.f_e_max)
            bounds_ok = bounds_ok and _in_bounds(d, system)
            state = tr.next_state
        latencies.append(float(np.mean(ep_lat)))
        returns.append(ep_ret)
    ddof = 1 if episodes > 1 else 0
    return EvalSummary(
        policy=name, episodes=episodes,
        mean_latency=float(np.mean(latencies)), std_latency=float(np.std(latencies, ddof=ddof)),
        mean_t_dt=float(np.mean(t_dts)),
        mean_return=float(np.mean(returns)), std_return=float(np.std(returns, ddof=ddof)),
        deadline_violation_rate=deadline_hits / n_ud_slots,
        energy_violation_rate=energy_hits / n_ud_slots,
        edge_violation_rate=edge_hits / n_slots,
        max_edge_usage=max_edge, max_decomposition_error=max_resid, bounds_respected=bounds_ok,
    )


def policy_factory(name: str, system: SystemConfig, agent: sac.Agent | None = None) -> Callable[[int], PolicyHandle]:
    """Episode-seeded constructors for every selectable policy.

    Without an agent, ``nosc`` pins the extraction factor on top of the greedy
    resource choice; with one it pins it on top of the agent's actions.
    """
    k = system.num_uds
    if name == "random":
        return lambda seed: RandomPolicy(k, make_rng(seed, POLICY_TAG))
    if name == "greedy":
        greedy = GreedyPolicy(system)
        return lambda seed: greedy
    if name == "sac":
        if agent is None:
            raise ConfigError("policy 'sac' needs a checkpoint or a trained agent")
        return lambda seed: SacPolicy(agent)
    if name == "nosc":
        inner: PolicyHandle = SacPolicy(agent) if agent is not None else GreedyPolicy(system)
        return lambda seed: NoScPolicy(inner, k)
    raise ConfigError(f"unknown policy {name!r}")


def run_eval(cfg: ExperimentConfig, checkpoint: str | Path | None = None,
             policy: str | None = None) -> EvalSummary:
    name = policy or cfg.policy
    agent = None
    if checkpoint is not None:
        env = DtSyncEnv(cfg.system)
        agent = sac.load_agent(checkpoint, cfg.train, env.state_dim, env.action_dim)
        if name not in ("sac", "nosc"):
            name = "sac"
    make = policy_factory(name, cfg.system, agent)
    return evaluate_policy(cfg.system, make, name, cfg.eval_episodes, cfg.eval_seed_base)


# --------------------------------------------------------------------------- sweeps

def apply_axis(system: SystemConfig, axis: str, value: float) -> SystemConfig:
    """Override one system parameter.

    Units: ``K`` count, ``D_range`` demand midpoint in
    Mbit (width kept), ``phi_min`` dimensionless, ``f_u_max`` GHz.
    """
    if axis == "K":
        if float(value) != int(value):
            raise ConfigError(f"K must be an integer, got {value}")
        return system.replace(num_uds=int(value))
    if axis == "D_range":
        half = 0.5 * (system.d_max - system.d_min)
        mid = value * 1e6
        return system.replace(d_min=mid - half, d_max=mid + half)
    if axis == "phi_min":
        return system.replace(phi_min=float(value))
    if axis == "f_u_max":
        return system.replace(f_u_max=value * 1e9)
    raise ConfigError(f"unknown sweep axis {axis!r}")


def run_sweep(cfg: ExperimentConfig, axis: str, values: Iterable[float],
              out_path: str | Path | None = None) -> list[dict]:
    """One run per value: train-then-evaluate for ``sac``, direct evaluation otherwise.

    A failing point is recorded with its error in ``status`` and the sweep goes on.
    """
    rows = []
    sink = CsvSink(out_path, SWEEP_COLUMNS) if out_path is not None else None
    try:
        for value in values:
            row = {"axis": axis, "value": value, "policy": cfg.policy,
                   "mean_latency": math.nan, "std_latency": math.nan, "mean_return": math.nan}
            try:
                system = apply_axis(cfg.system, axis, value)
                point = cfg.replace(system=system)
                agent = train_agent(point)[0] if cfg.policy == "sac" else None
                summary = evaluate_policy(system, policy_factory(cfg.policy, system, agent), cfg.policy,
                                          cfg.eval_episodes, cfg.eval_seed_base)
                row.update(mean_latency=summary.mean_latency, std_latency=summary.std_latency,
                           mean_return=summary.mean_return, status="ok")
            except (ConfigError, ValueError, FloatingPointError) as exc:
                log.warning("sweep point %s=%s failed: %s", axis, value, exc)
                row["status"] = f"failed: {exc}"
            rows.append(row)
            if sink is not None:
                sink.write(row)
    finally:
        if sink is not None:
            sink.close()
    return rows
