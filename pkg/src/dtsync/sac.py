"""Soft actor-critic with twin critics, hard target copies and learned temperature."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import autodiff as ad
from .config import TrainConfig
from .dynamics import AGENT_TAG, make_rng
from .env import RAW_MAX, DtSyncEnv

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
SQUASH_EPS = 1e-6
HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    def __len__(self) -> int:
        return len(self.rewards)


class ReplayBuffer:
    """FIFO ring buffer with uniform sampling; storage grows on demand up to ``capacity``."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        self.capacity = capacity
        self.state_dim, self.action_dim = state_dim, action_dim
        self._alloc(min(capacity, 1024))
        self.size = 0
        self.head = 0

    def _alloc(self, n: int) -> None:
        old = getattr(self, "_data", None)
        width = 2 * self.state_dim + self.action_dim + 2
        data = np.zeros((n, width))
        if old is not None:
            data[:len(old)] = old
        self._data = data

    def __len__(self) -> int:
        return self.size

    def add(self, state, action, reward: float, next_state, done: bool) -> None:
        if self.head >= len(self._data):
            self._alloc(min(self.capacity, 2 * len(self._data)))
        self._data[self.head] = np.concatenate([state, action, [reward], next_state, [float(done)]])
        self.head = (self.head + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def indices(self, rng: np.random.Generator, batch_size: int) -> np.ndarray:
        if self.size < batch_size:
            raise ValueError(f"buffer holds {self.size} < batch size {batch_size}")
        return rng.integers(0, self.size, size=batch_size)

    def sample(self, rng: np.random.Generator, batch_size: int) -> Batch:
        rows = self._data[self.indices(rng, batch_size)]
        s, a = self.state_dim, self.action_dim
        return Batch(rows[:, :s], rows[:, s:s + a], rows[:, s + a],
                     rows[:, s + a + 1:2 * s + a + 1], rows[:, -1])


# --------------------------------------------------------------------------- policy

def squashed_log_prob(noise, log_std, squashed) -> np.ndarray:
    """log-density of ``tanh(mu + std * noise)`` summed over the last axis."""
    gauss = -0.5 * np.square(noise) - log_std - HALF_LOG_2PI
    return np.sum(gauss - np.log(1.0 - np.square(squashed) + SQUASH_EPS), axis=-1)


def _head(params: ad.ParamSet, states, keep: bool = False):
    res = ad.forward(params, states, keep=keep)
    out, cache = res if keep else (res, None)
    mu, raw_log_std = np.split(out, 2, axis=-1)
    log_std = np.clip(raw_log_std, LOG_STD_MIN, LOG_STD_MAX)
    return mu, log_std, raw_log_std, cache


def policy_sample(state, params: ad.ParamSet, rng: np.random.Generator | None = None,
                  deterministic: bool = False, noise=None):
    """Draw ``(raw_action, log_prob)`` for one state or a batch of states.

    Deterministic mode returns ``tanh(mu)`` and the log-density at the mode.
    Returned actions are clipped just inside ``(-1, 1)`` so ``tanh`` saturation
    never produces an infeasible raw action.
    """
    mu, log_std, _, _ = _head(params, state)
    if deterministic:
        noise = np.zeros_like(mu)
    elif noise is None:
        noise = rng.standard_normal(mu.shape)
    squashed = np.tanh(mu + np.exp(log_std) * noise)
    log_prob = squashed_log_prob(noise, log_std, squashed)
    return np.clip(squashed, -RAW_MAX, RAW_MAX), log_prob


# --------------------------------------------------------------------------- agent

@dataclass
class Agent:
    state_dim: int
    action_dim: int
    hyper: TrainConfig
    policy: ad.ParamSet
    q1: ad.ParamSet
    q2: ad.ParamSet
    q1_target: ad.ParamSet
    q2_target: ad.ParamSet
    log_alpha: np.ndarray = field(default_factory=lambda: np.zeros(1))
    updates: int = 0

    def __post_init__(self) -> None:
        lr = self.hyper.lr
        self.policy_opt = ad.Adam(self.policy.arrays(), lr)
        self.q1_opt = ad.Adam(self.q1.arrays(), lr)
        self.q2_opt = ad.Adam(self.q2.arrays(), lr)
        self.alpha_opt = ad.Adam([self.log_alpha], lr)

    @classmethod
    def create(cls, state_dim: int, action_dim: int, hyper: TrainConfig,
               rng: np.random.Generator) -> "Agent":
        h = hyper.hidden
        policy = ad.MlpSpec((state_dim, h, h, 2 * action_dim)).init(rng, out_scale=1e-2)
        q_spec = ad.MlpSpec((state_dim + action_dim, h, h, 1))
        q1, q2 = q_spec.init(rng), q_spec.init(rng)
        return cls(state_dim, action_dim, hyper, policy, q1, q2, q1.copy(), q2.copy())

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha[0]))

    @property
    def target_entropy(self) -> float:
        if self.hyper.target_entropy is not None:
            return float(self.hyper.target_entropy)
        return -float(self.action_dim)

    def act(self, state, rng: np.random.Generator | None = None, deterministic: bool = False) -> np.ndarray:
        return policy_sample(state, self.policy, rng, deterministic)[0]


def _q(params: ad.ParamSet, states, actions, keep: bool = False):
    sa = np.concatenate([states, actions], axis=-1)
    return ad.forward(params, sa, keep=keep)


def soft_target(batch: Batch, agent: Agent, rng: np.random.Generator, noise=None) -> np.ndarray:
    """Bootstrapped soft value target using the smaller of the two target critics."""
    next_actions, next_logp = policy_sample(batch.next_states, agent.policy, rng, noise=noise)
    q_next = np.minimum(_q(agent.q1_target, batch.next_states, next_actions),
                        _q(agent.q2_target, batch.next_states, next_actions))[:, 0]
    soft_value = q_next - agent.alpha * next_logp
    return batch.rewards + agent.hyper.gamma * (1.0 - batch.dones) * soft_value


def critic_loss_and_grad(params: ad.ParamSet, batch: Batch, target: np.ndarray):
    out, cache = _q(params, batch.states, batch.actions, keep=True)
    diff = out[:, 0] - target
    grads, _ = ad.backward(params, cache, (diff / len(batch))[:, None], need_input=False)
    return 0.5 * float(np.mean(diff * diff)), grads


def critic_update(batch: Batch, agent: Agent, rng: np.random.Generator,
                  target: np.ndarray | None = None) -> tuple[float, float]:
    if target is None:
        target = soft_target(batch, agent, rng)
    losses = []
    for params, opt in ((agent.q1, agent.q1_opt), (agent.q2, agent.q2_opt)):
        loss, grads = critic_loss_and_grad(params, batch, target)
        ad.adam_step(params, grads, opt)
        losses.append(loss)
    return losses[0], losses[1]


def actor_loss_and_grad(agent: Agent, states: np.ndarray, noise: np.ndarray, policy: ad.ParamSet | None = None):
    """Reparameterised policy loss ``mean(alpha * logp - min(Q1, Q2))`` and its gradient.

    Returns ``(loss, grads, log_prob)``.  ``noise`` is the standard-normal draw
    used for the reparameterisation.
    """
    policy = policy if policy is not None else agent.policy
    n = len(states)
    alpha = agent.alpha
    mu, log_std, raw_log_std, cache = _head(policy, states, keep=True)
    std = np.exp(log_std)
    squashed = np.tanh(mu + std * noise)
    logp = squashed_log_prob(noise, log_std, squashed)

    q1, c1 = _q(agent.q1, states, squashed, keep=True)
    q2, c2 = _q(agent.q2, states, squashed, keep=True)
    use_first = (q1 <= q2).astype(float)
    q_min = np.minimum(q1, q2)[:, 0]
    loss = float(np.mean(alpha * logp - q_min))

    _, d1 = ad.backward(agent.q1, c1, use_first, need_params=False)
    _, d2 = ad.backward(agent.q2, c2, 1.0 - use_first, need_params=False)
    dq_da = (d1 + d2)[:, agent.state_dim:]
    one_minus_sq = 1.0 - squashed * squashed
    dlogp_du = 2.0 * squashed * one_minus_sq / (one_minus_sq + SQUASH_EPS)
    d_u = (alpha * dlogp_du - dq_da * one_minus_sq) / n
    inside = (raw_log_std > LOG_STD_MIN) & (raw_log_std < LOG_STD_MAX)
    d_log_std = (d_u * std * noise - alpha / n) * inside
    grads, _ = ad.backward(policy, cache, np.concatenate([d_u, d_log_std], axis=-1), need_input=False)
    return loss, grads, logp


def actor_update(batch: Batch, agent: Agent, rng: np.random.Generator) -> tuple[float, np.ndarray]:
    noise = rng.standard_normal((len(batch), agent.action_dim))
    loss, grads, logp = actor_loss_and_grad(agent, batch.states, noise)
    ad.adam_step(agent.policy, grads, agent.policy_opt)
    return loss, logp


def alpha_grad(agent: Agent, log_prob: np.ndarray) -> float:
    """d/d(log alpha) of ``mean(-alpha * logp - alpha * H0)``."""
    return agent.alpha * float(np.mean(-log_prob - agent.target_entropy))


def alpha_update(batch: Batch, agent: Agent, rng: np.random.Generator,
                 log_prob: np.ndarray | None = None) -> float:
    if log_prob is None:
        _, log_prob = policy_sample(batch.states, agent.policy, rng)
    agent.alpha_opt.step([agent.log_alpha], [np.array([alpha_grad(agent, log_prob)])])
    return agent.alpha


def target_sync(agent: Agent) -> bool:
    """Hard-copy critics into targets when the update counter hits the sync period."""
    if agent.updates % agent.hyper.target_sync_every == 0:
        agent.q1_target.assign(agent.q1)
        agent.q2_target.assign(agent.q2)
        return True
    return False


@dataclass
class UpdateStats:
    critic_loss1: float
    critic_loss2: float
    actor_loss: float
    alpha: float


def update(agent: Agent, buffer: ReplayBuffer, rng: np.random.Generator) -> UpdateStats:
    batch = buffer.sample(rng, agent.hyper.batch_size)
    l1, l2 = critic_update(batch, agent, rng)
    actor_loss, logp = actor_update(batch, agent, rng)
    alpha = alpha_update(batch, agent, rng, log_prob=logp)
    agent.updates += 1
    target_sync(agent)
    stats = UpdateStats(l1, l2, actor_loss, alpha)
    if not all(math.isfinite(v) for v in (l1, l2, actor_loss, alpha)):
        raise TrainingDiverged(f"non-finite update at step {agent.updates}: {stats}")
    return stats


# --------------------------------------------------------------------------- training loop

@dataclass
class EpisodeRow:
    epoch: int
    step: int
    episode: int
    episode_return: float
    mean_latency: float
    mean_t_dt: float
    penalty_t: float
    penalty_e: float
    penalty_f: float
    alpha: float
    critic_loss1: float
    critic_loss2: float


def episode_seed(seed: int, episode: int) -> int:
    return int(np.random.SeedSequence([seed, 7, episode]).generate_state(1)[0])


def train(env: DtSyncEnv, hyper: TrainConfig, seed: int = 0,
          action_filter: Callable[[np.ndarray], np.ndarray] | None = None,
          on_episode: Callable[[EpisodeRow, Agent], None] | None = None,
          on_epoch: Callable[[int, Agent], None] | None = None) -> tuple[Agent, list[EpisodeRow]]:
    """Interleave one environment slot with one gradient update, ``n_epoch * n_step`` times.

    ``action_filter`` rewrites the sampled action before execution (and storage),
    e.g. to pin the extraction factor.  ``on_episode`` is called with every
    finished episode's row.
    """
    ad.keep_heap_warm()
    rng = make_rng(seed, AGENT_TAG)
    agent = Agent.create(env.state_dim, env.action_dim, hyper, rng)
    buffer = ReplayBuffer(hyper.buffer_size, env.state_dim, env.action_dim)
    scale = hyper.reward_scale if hyper.reward_scale is not None else 1.0 / env.cfg.num_uds
    log: list[EpisodeRow] = []

    episode = 0
    state = env.reset(episode_seed(seed, episode))
    acc = _EpisodeAccumulator()
    step = 0
    for epoch in range(hyper.n_epoch):
        for _ in range(hyper.n_step):
            action = agent.act(state, rng)
            if action_filter is not None:
                action = action_filter(action)
            tr = env.step(action)
            buffer.add(tr.state, tr.raw_action, scale * tr.reward, tr.next_state, tr.done)
            acc.add_slot(tr.reward, env)
            step += 1
            if hyper.updates and len(buffer) >= hyper.batch_size:
                acc.add_update(update(agent, buffer, rng))
            state = tr.next_state
            if tr.done:
                row = acc.row(epoch, step, episode, agent.alpha)
                log.append(row)
                if on_episode is not None:
                    on_episode(row, agent)
                episode += 1
                state = env.reset(episode_seed(seed, episode))
                acc = _EpisodeAccumulator()
        if on_epoch is not None:
            on_epoch(epoch, agent)
    return agent, log


class _EpisodeAccumulator:
    def __init__(self) -> None:
        self.ret = 0.0
        self.latency: list[float] = []
        self.t_dt: list[float] = []
        self.pen = np.zeros(3)
        self.losses: list[tuple[float, float]] = []

    def add_slot(self, reward: float, env: DtSyncEnv) -> None:
        self.ret += reward
        self.latency.append(env.last_metrics.total_latency)
        self.t_dt.append(float(np.mean(env.last_metrics.t_dt)))
        p = env.last_penalties
        self.pen += (p.deadline, p.energy, p.edge)

    def add_update(self, stats: UpdateStats) -> None:
        self.losses.append((stats.critic_loss1, stats.critic_loss2))

    def row(self, epoch: int, step: int, episode: int, alpha: float) -> EpisodeRow:
        l1, l2 = np.mean(self.losses, axis=0) if self.losses else (math.nan, math.nan)
        return EpisodeRow(epoch, step, episode, self.ret, float(np.mean(self.latency)),
                          float(np.mean(self.t_dt)), *map(float, self.pen), alpha, float(l1), float(l2))


# --------------------------------------------------------------------------- checkpoints

NETWORKS = ("policy", "q1", "q2", "q1_target", "q2_target")


def save_agent(agent: Agent, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in NETWORKS:
        ad.save_params(getattr(agent, name), directory / f"{name}.mlp")
    record = {
        "version": ad.FORMAT_VERSION,
        "state_dim": agent.state_dim,
        "action_dim": agent.action_dim,
        "hidden": agent.hyper.hidden,
        "log_alpha": float(agent.log_alpha[0]),
        "updates": agent.updates,
    }
    (directory / "agent.json").write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")
    return directory


def load_agent(directory: str | Path, hyper: TrainConfig | None = None,
               state_dim: int | None = None, action_dim: int | None = None) -> Agent:
    """Restore an agent; raises ``ValueError`` if shapes disagree with the expected dims."""
    directory = Path(directory)
    record = json.loads((directory / "agent.json").read_text(encoding="utf-8"))
    if state_dim is not None and record["state_dim"] != state_dim:
        raise ValueError(f"checkpoint state_dim {record['state_dim']} != environment {state_dim}")
    if action_dim is not None and record["action_dim"] != action_dim:
        raise ValueError(f"checkpoint action_dim {record['action_dim']} != environment {action_dim}")
    hyper = hyper or TrainConfig()
    hyper = TrainConfig(**{**hyper.__dict__, "hidden": record["hidden"]})
    s, a, h = record["state_dim"], record["action_dim"], record["hidden"]
    nets = {
        "policy": ad.load_params(directory / "policy.mlp", ad.MlpSpec((s, h, h, 2 * a))),
        **{n: ad.load_params(directory / f"{n}.mlp", ad.MlpSpec((s + a, h, h, 1))) for n in NETWORKS[1:]},
    }
    agent = Agent(s, a, hyper, **nets, log_alpha=np.array([record["log_alpha"]]), updates=record["updates"])
    return agent
