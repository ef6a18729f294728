"""Sequential decision wrapper around the slot model.

A raw action is a ``4K`` vector in ``(-1, 1)`` laid out in blocks
``[phi_1..phi_K, f_1..f_K, p_1..p_K, fe_1..fe_K]``.  The state is ``2K`` long:
normalised distances followed by normalised demands.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dynamics
from .config import SystemConfig
from .simcore import SlotMetrics, UdAction, UdSlotInput, evaluate_slot


class ContractError(RuntimeError):
    """Raised when the caller breaks an interface contract (bad action, step after done)."""


@dataclass(frozen=True)
class Bounds:
    phi: tuple[float, float]
    f_loc: tuple[float, float]
    p_tx: tuple[float, float]
    f_edge: tuple[float, float]

    @classmethod
    def from_config(cls, cfg: SystemConfig) -> "Bounds":
        share = cfg.f_e_max / cfg.num_uds
        return cls(
            phi=(cfg.phi_min, 1.0),
            f_loc=(cfg.f_loc_floor * cfg.f_u_max, cfg.f_u_max),
            p_tx=(cfg.p_min, cfg.p_max),
            f_edge=(0.01 * share, cfg.edge_overalloc * share),
        )

    def blocks(self):
        return (self.phi, self.f_loc, self.p_tx, self.f_edge)


@dataclass(frozen=True)
class DecodedAction:
    action: UdAction
    f_edge_requested: np.ndarray
    requested_edge_sum: float

    @property
    def projected(self) -> bool:
        return not np.array_equal(self.action.f_edge, self.f_edge_requested)


@dataclass(frozen=True)
class Penalties:
    deadline: float
    energy: float
    edge: float

    @property
    def total(self) -> float:
        return self.deadline + self.energy + self.edge


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    raw_action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool


def _to_interval(raw: np.ndarray, lo: float, hi: float) -> np.ndarray:
    # anchored at the upper end so raw = nextafter(1, 0) lands on hi exactly
    return np.clip(hi - (1.0 - raw) * 0.5 * (hi - lo), lo, hi)


def _from_interval(value: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if hi == lo:
        return np.zeros_like(np.asarray(value, dtype=float))
    return 1.0 - 2.0 * (hi - np.asarray(value, dtype=float)) / (hi - lo)


RAW_MAX = float(np.nextafter(1.0, 0.0))
RAW_MIN = -RAW_MAX


def decode_action(raw, cfg: SystemConfig) -> DecodedAction:
    """Map a raw action onto the feasible box, projecting edge compute onto its budget.

    Each block is mapped affinely onto its interval.  The requested edge
    allocations may sum past ``f_e_max`` (up to ``edge_overalloc`` times the
    fair share each); in that case all of them are scaled down together.
    """
    raw = np.asarray(raw, dtype=float)
    k = cfg.num_uds
    if raw.shape != (4 * k,):
        raise ContractError(f"raw action must have shape ({4 * k},), got {raw.shape}")
    if not np.all((raw > -1.0) & (raw < 1.0)):
        raise ContractError("raw action entries must lie strictly inside (-1, 1)")
    bounds = Bounds.from_config(cfg)
    phi, f_loc, p_tx, f_edge = (
        _to_interval(raw[i * k:(i + 1) * k], lo, hi) for i, (lo, hi) in enumerate(bounds.blocks())
    )
    requested = f_edge.copy()
    total = float(np.sum(requested))
    if total > cfg.f_e_max:
        f_edge = f_edge * (cfg.f_e_max / total)
        while np.sum(f_edge) > cfg.f_e_max:
            f_edge = f_edge * (1.0 - 1e-15)
    return DecodedAction(UdAction(phi, f_loc, p_tx, f_edge), requested, total)


def encode_action(action: UdAction, cfg: SystemConfig) -> np.ndarray:
    """Inverse of :func:`decode_action`.

    Edge values inside the request interval are encoded without projection.
    Values below it (only produced by projection) are encoded as a proportionally
    larger request that projects back onto them.
    """
    bounds = Bounds.from_config(cfg)
    k = cfg.num_uds
    parts = []
    for value, (lo, hi) in zip((action.phi, action.f_loc, action.p_tx, action.f_edge), bounds.blocks()):
        value = np.broadcast_to(np.asarray(value, dtype=float), (k,))
        parts.append(np.clip(_from_interval(value, lo, hi), RAW_MIN, RAW_MAX))
    raw = np.concatenate(parts)
    f_edge = np.broadcast_to(np.asarray(action.f_edge, dtype=float), (k,))
    lo, hi = bounds.f_edge
    if np.min(f_edge) < lo and np.min(f_edge) > 0:
        # only reachable through projection: request a scaled-up vector that projects back here
        scaled = f_edge * (lo / np.min(f_edge))
        if np.max(scaled) <= hi:
            raw[3 * k:] = np.clip(_from_interval(scaled, lo, hi), RAW_MIN, RAW_MAX)
            return raw
    edge = raw[3 * k:]
    requested = float(np.sum(f_edge))
    budget = min(requested, cfg.f_e_max)
    step = 1e-15
    while np.sum(_to_interval(edge, *bounds.f_edge)) > budget and np.any(edge > RAW_MIN):
        edge = np.maximum(edge - step, RAW_MIN)
        step *= 2.0
    raw[3 * k:] = edge
    return raw


def compute_penalties(metrics: SlotMetrics, requested_edge_sum: float, cfg: SystemConfig) -> Penalties:
    """Hinge penalties on deadline, energy budget and (fractional) edge over-allocation."""
    w = cfg.penalty_w
    deadline = w * float(np.sum(np.maximum(0.0, metrics.t_dt - cfg.deadline)))
    energy = w * float(np.sum(np.maximum(0.0, metrics.e_total - cfg.e_u_max)))
    edge = w * max(0.0, requested_edge_sum - cfg.f_e_max) / cfg.f_e_max
    return Penalties(deadline, energy, edge)


class DtSyncEnv:
    """Episode of ``num_slots`` slots; one :meth:`step` is one slot."""

    def __init__(self, cfg: SystemConfig):
        self.cfg = cfg
        self.mobility = dynamics.MobilityParams.from_config(cfg)
        self.uds: list[dynamics.UdState] = []
        self._rngs: list[np.random.Generator] = []
        self.slot = 0
        self.last_metrics: SlotMetrics | None = None
        self.last_penalties: Penalties | None = None
        self.last_decoded: DecodedAction | None = None
        self._done = True

    @property
    def state_dim(self) -> int:
        return 2 * self.cfg.num_uds

    @property
    def action_dim(self) -> int:
        return 4 * self.cfg.num_uds

    @property
    def done(self) -> bool:
        return self._done

    def distances(self) -> np.ndarray:
        return np.array([dynamics.distance_to_bs(u.position, self.cfg.bs_position) for u in self.uds])

    def observe(self) -> np.ndarray:
        demand = np.array([u.demand for u in self.uds])
        return np.concatenate([self.distances() / self.cfg.d_ref, demand / self.cfg.d_max])

    def slot_inputs(self) -> UdSlotInput:
        return UdSlotInput(
            demand=np.array([u.demand for u in self.uds]),
            distance=self.distances(),
            fading=np.array([u.fading for u in self.uds]),
        )

    def reset(self, seed: int) -> np.ndarray:
        self._rngs = dynamics.ud_streams(seed, self.cfg.num_uds)
        self.uds = [dynamics.spawn_ud(self.cfg, rng) for rng in self._rngs]
        self.slot = 0
        self._done = False
        self.last_metrics = self.last_penalties = self.last_decoded = None
        return self.observe()

    def step(self, raw) -> Transition:
        if self._done:
            raise ContractError("step() called on a finished episode; call reset()")
        state = self.observe()
        decoded = decode_action(raw, self.cfg)
        metrics = evaluate_slot(self.cfg, self.slot_inputs(), decoded.action)
        penalties = compute_penalties(metrics, decoded.requested_edge_sum, self.cfg)
        reward = -(metrics.total_latency + penalties.total)

        self.uds = [dynamics.advance(u, self.cfg, rng, self.mobility) for u, rng in zip(self.uds, self._rngs)]
        self.slot += 1
        self._done = self.slot >= self.cfg.num_slots
        self.last_metrics, self.last_penalties, self.last_decoded = metrics, penalties, decoded
        return Transition(state, np.array(raw, dtype=float), reward, self.observe(), self._done)
