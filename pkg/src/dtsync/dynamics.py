"""Stochastic slot-to-slot evolution: Gauss-Markov mobility, Rayleigh fading, demand draws.

Randomness contract: every generator is numpy's ``PCG64`` bit generator seeded
through ``SeedSequence``.  An environment seeded with ``seed`` derives one
independent child stream per UD via ``SeedSequence([seed, ENV_TAG]).spawn(K)``;
other consumers (agent, random baseline) use different tags.  Draw order inside
a UD stream is fixed (see :func:`spawn_ud` and :func:`advance`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .config import SystemConfig

ENV_TAG = 0
AGENT_TAG = 1
POLICY_TAG = 2


def make_rng(seed: int, tag: int = 0, *extra: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, tag, *extra])))


def ud_streams(seed: int, num_uds: int) -> list[np.random.Generator]:
    children = np.random.SeedSequence([seed, ENV_TAG]).spawn(num_uds)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


@dataclass(frozen=True)
class MobilityParams:
    rho: float = 0.8
    mean_speed: float = 0.5
    max_speed: float = 1.0
    sigma_speed: float = 0.1
    sigma_heading: float = 0.2
    mean_heading: float | None = None  # None: the current heading is the mean

    @classmethod
    def from_config(cls, cfg: SystemConfig) -> "MobilityParams":
        return cls(cfg.gm_rho, cfg.gm_mean_speed, cfg.gm_max_speed,
                   cfg.gm_sigma_speed, cfg.gm_sigma_heading)


@dataclass(frozen=True)
class UdState:
    position: tuple[float, float, float]
    speed: float
    heading: float
    demand: float
    fading: float


def distance_to_bs(position, bs) -> float:
    return float(np.linalg.norm(np.asarray(position, dtype=float) - np.asarray(bs, dtype=float)))


def sample_fading(rng: np.random.Generator) -> float:
    """|g|^2 for g ~ CN(0, 1): the sum of two squared N(0, 1/2) parts, unit-mean exponential."""
    a, b = rng.normal(0.0, math.sqrt(0.5), size=2)
    return float(a * a + b * b)


def sample_demand(rng: np.random.Generator, d_min: float, d_max: float) -> float:
    if d_min > d_max:
        raise ValueError(f"inverted demand bounds [{d_min}, {d_max}]")
    return float(rng.uniform(d_min, d_max))


def evolve_gauss_markov(speed: float, heading: float, rng: np.random.Generator,
                        params: MobilityParams) -> tuple[float, float]:
    rho = params.rho
    noise_gain = math.sqrt(1.0 - rho * rho)
    xi_v, xi_h = rng.standard_normal(2)
    mean_heading = heading if params.mean_heading is None else params.mean_heading
    new_speed = rho * speed + (1 - rho) * params.mean_speed + noise_gain * params.sigma_speed * xi_v
    new_heading = rho * heading + (1 - rho) * mean_heading + noise_gain * params.sigma_heading * xi_h
    return min(max(new_speed, 0.0), params.max_speed), new_heading


def move(state: UdState, tau: float) -> UdState:
    """Advance the position by one slot at the current speed and heading."""
    x, y, z = state.position
    dx = state.speed * math.cos(state.heading) * tau
    dy = state.speed * math.sin(state.heading) * tau
    return replace(state, position=(x + dx, y + dy, z))


def step_mobility(state: UdState, tau: float, rng: np.random.Generator | None = None,
                  params: MobilityParams | None = None) -> UdState:
    """Move for one slot, then let speed and heading take a Gauss-Markov step.

    Without ``rng`` only the deterministic position update is applied.
    """
    moved = move(state, tau)
    if rng is None:
        return moved
    speed, heading = evolve_gauss_markov(state.speed, state.heading, rng, params or MobilityParams())
    return replace(moved, speed=speed, heading=heading)


def spawn_ud(cfg: SystemConfig, rng: np.random.Generator) -> UdState:
    """Uniform placement in the spawn disk; draws radius, angle, heading, demand, fading in order."""
    radius = cfg.spawn_radius * math.sqrt(rng.uniform())
    angle = rng.uniform(0.0, 2 * math.pi)
    heading = rng.uniform(0.0, 2 * math.pi)
    cx, cy, cz = cfg.spawn_center
    position = (cx + radius * math.cos(angle), cy + radius * math.sin(angle), cz)
    return UdState(
        position=position,
        speed=min(cfg.gm_mean_speed, cfg.gm_max_speed),
        heading=heading,
        demand=sample_demand(rng, cfg.d_min, cfg.d_max),
        fading=sample_fading(rng),
    )


def advance(state: UdState, cfg: SystemConfig, rng: np.random.Generator,
            params: MobilityParams | None = None) -> UdState:
    """Full slot transition for one UD: mobility, then fresh demand, then fresh fading."""
    moved = step_mobility(state, cfg.tau, rng, params or MobilityParams.from_config(cfg))
    return replace(moved, demand=sample_demand(rng, cfg.d_min, cfg.d_max), fading=sample_fading(rng))
