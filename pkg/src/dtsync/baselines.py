"""Comparison policies sharing one ``act(state) -> raw action`` interface."""
from __future__ import annotations

from typing import Protocol

import numpy as np

from . import simcore
from .config import SystemConfig
from .env import RAW_MAX, encode_action
from .sac import Agent

GRID_POINTS = 61


class PolicyHandle(Protocol):
    def act(self, state: np.ndarray) -> np.ndarray: ...


def random_policy(state: np.ndarray, rng: np.random.Generator, action_dim: int) -> np.ndarray:
    # rng.uniform samples [-1, 1); the clip only guards the closed lower end
    return np.clip(rng.uniform(-1.0, 1.0, size=action_dim), -RAW_MAX, RAW_MAX)


class RandomPolicy:
    def __init__(self, num_uds: int, rng: np.random.Generator):
        self.action_dim = 4 * num_uds
        self.rng = rng

    def act(self, state: np.ndarray) -> np.ndarray:
        return random_policy(state, self.rng, self.action_dim)


def pin_phi(raw: np.ndarray, num_uds: int) -> np.ndarray:
    """Force every extraction factor to its upper endpoint, i.e. transmit raw data."""
    raw = np.array(raw, dtype=float)
    raw[:num_uds] = RAW_MAX
    return raw


class NoScPolicy:
    """Wraps another policy and disables semantic compression (phi = 1)."""

    def __init__(self, inner: PolicyHandle, num_uds: int):
        self.inner = inner
        self.num_uds = num_uds

    def act(self, state: np.ndarray) -> np.ndarray:
        return pin_phi(self.inner.act(state), self.num_uds)


def phi_grid(cfg: SystemConfig) -> np.ndarray:
    return np.linspace(cfg.phi_min, 1.0, GRID_POINTS)


def greedy_allocation(cfg: SystemConfig, distance: np.ndarray, demand: np.ndarray) -> simcore.UdAction:
    """Full local compute and power, fair edge share, and the grid-best extraction factor.

    The factor minimises extraction + upload + recovery time under the mean
    fading gain ``|g|^2 = 1``.
    """
    k = cfg.num_uds
    f_loc = np.full(k, cfg.f_u_max)
    p_tx = np.full(k, cfg.p_max)
    f_edge = np.full(k, cfg.f_e_max / k)
    grid = phi_grid(cfg)[None, :]
    t_dt = simcore.sync_latency(cfg, demand[:, None], distance[:, None], 1.0, grid,
                                f_loc[:, None], p_tx[:, None], f_edge[:, None])
    phi = grid[0, np.argmin(t_dt, axis=1)]
    return simcore.UdAction(phi, f_loc, p_tx, f_edge)


def greedy_heuristic(state: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    k = cfg.num_uds
    distance = np.asarray(state[:k]) * cfg.d_ref
    demand = np.asarray(state[k:2 * k]) * cfg.d_max
    return encode_action(greedy_allocation(cfg, distance, demand), cfg)


class GreedyPolicy:
    def __init__(self, cfg: SystemConfig):
        self.cfg = cfg

    def act(self, state: np.ndarray) -> np.ndarray:
        return greedy_heuristic(state, self.cfg)


class SacPolicy:
    def __init__(self, agent: Agent, deterministic: bool = True, rng: np.random.Generator | None = None):
        self.agent = agent
        self.deterministic = deterministic
        self.rng = rng

    def act(self, state: np.ndarray) -> np.ndarray:
        return self.agent.act(state, self.rng, self.deterministic)
