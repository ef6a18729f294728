"""Per-slot latency and energy model of sensing, semantic extraction, uplink and recovery.

Every function is pure and broadcasts over numpy arrays, so a whole slot for
``K`` user devices is evaluated with one call per formula.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig


class DomainError(ValueError):
    """An argument lies outside the domain where a formula is defined."""


def _require(cond, msg: str) -> None:
    if not np.all(cond):
        raise DomainError(msg)


def sense_latency(demand, sense_rate):
    _require(np.greater(demand, 0), "demand must be > 0")
    _require(np.greater(sense_rate, 0), "sense_rate must be > 0")
    return np.divide(demand, sense_rate)


def sense_energy(demand, energy_per_bit):
    _require(np.greater_equal(demand, 0), "demand must be >= 0")
    return np.multiply(energy_per_bit, demand)


def extraction_demand(demand, phi, x_exp):
    """Bits of extraction workload; a smaller factor inflates the work as ``phi**-x``."""
    _require(np.greater(phi, 0), "phi must be > 0")
    return np.divide(demand, np.power(phi, x_exp))


def extraction_latency(workload, cycles_per_bit, f_loc):
    _require(np.greater(f_loc, 0), "f_loc must be > 0")
    return np.divide(np.multiply(cycles_per_bit, workload), f_loc)


def extraction_energy(workload, cycles_per_bit, k_loc, f_loc):
    _require(np.greater_equal(f_loc, 0), "f_loc must be >= 0")
    return cycles_per_bit * k_loc * np.multiply(workload, np.square(f_loc))


def channel_power_gain(distance, beta0, pathloss_exp, fading_power):
    """Squared magnitude of the Rayleigh uplink channel, ``beta0 * d**alpha * |g|^2``."""
    _require(np.greater(distance, 0), "distance must be > 0")
    return beta0 * np.multiply(np.power(distance, pathloss_exp), fading_power)


def uplink_rate(bandwidth, p_tx, gain2, noise_power):
    _require(np.greater(bandwidth, 0), "bandwidth must be > 0")
    _require(np.greater(noise_power, 0), "noise_power must be > 0")
    return np.multiply(bandwidth, np.log2(1.0 + np.multiply(p_tx, gain2) / noise_power))


def uplink_latency(demand, phi, rate):
    _require(np.greater(rate, 0), "uplink rate must be > 0")
    return np.divide(np.multiply(demand, phi), rate)


def uplink_energy(t_up, p_tx):
    return np.multiply(t_up, p_tx)


def recovery_latency(demand, phi, y_exp, cycles_per_bit, f_edge):
    _require(np.greater(f_edge, 0), "f_edge must be > 0")
    _require(np.greater(phi, 0), "phi must be > 0")
    return cycles_per_bit * np.multiply(demand, phi) / np.multiply(np.power(phi, y_exp), f_edge)


@dataclass(frozen=True)
class UdSlotInput:
    """Per-UD observables of one slot; fields are scalars or length-K arrays."""

    demand: np.ndarray
    distance: np.ndarray
    fading: np.ndarray


@dataclass(frozen=True)
class UdAction:
    """Per-UD decisions of one slot in physical units."""

    phi: np.ndarray
    f_loc: np.ndarray
    p_tx: np.ndarray
    f_edge: np.ndarray


@dataclass(frozen=True)
class SlotMetrics:
    t_s: np.ndarray
    t_en: np.ndarray
    t_up: np.ndarray
    t_de: np.ndarray
    t_dt: np.ndarray
    t_total: np.ndarray
    e_s: np.ndarray
    e_en: np.ndarray
    e_up: np.ndarray
    e_total: np.ndarray
    rate: np.ndarray

    @property
    def total_latency(self) -> float:
        """Sum of per-UD total latency, the slot's objective term."""
        return float(np.sum(self.t_total))


def evaluate_slot(cfg: SystemConfig, inputs: UdSlotInput, action: UdAction) -> SlotMetrics:
    demand = np.atleast_1d(np.asarray(inputs.demand, dtype=float))
    phi = np.asarray(action.phi, dtype=float)
    t_s = sense_latency(demand, cfg.sense_rate)
    e_s = sense_energy(demand, cfg.sense_energy_per_bit)
    workload = extraction_demand(demand, phi, cfg.x_exp)
    t_en = extraction_latency(workload, cfg.cycles_per_bit, action.f_loc)
    e_en = extraction_energy(workload, cfg.cycles_per_bit, cfg.k_loc, action.f_loc)
    gain2 = channel_power_gain(inputs.distance, cfg.beta0, cfg.pathloss_exp, inputs.fading)
    rate = uplink_rate(cfg.bandwidth_per_ud, action.p_tx, gain2, cfg.noise_power)
    t_up = uplink_latency(demand, phi, rate)
    e_up = uplink_energy(t_up, action.p_tx)
    t_de = recovery_latency(demand, phi, cfg.y_exp, cfg.cycles_per_bit, action.f_edge)
    t_dt = t_en + t_up + t_de
    return SlotMetrics(
        t_s=t_s, t_en=t_en, t_up=t_up, t_de=t_de, t_dt=t_dt, t_total=t_s + t_dt,
        e_s=e_s, e_en=e_en, e_up=e_up, e_total=e_s + e_en + e_up,
        rate=np.broadcast_to(rate, demand.shape).copy(),
    )


def sync_latency(cfg: SystemConfig, demand, distance, fading, phi, f_loc, p_tx, f_edge):
    """Extraction + upload + recovery time (no sensing), broadcasting over every argument.

    Used by grid searches that scan many candidate extraction factors at once.
    """
    workload = extraction_demand(demand, phi, cfg.x_exp)
    gain2 = channel_power_gain(distance, cfg.beta0, cfg.pathloss_exp, fading)
    rate = uplink_rate(cfg.bandwidth_per_ud, p_tx, gain2, cfg.noise_power)
    return (
        extraction_latency(workload, cfg.cycles_per_bit, f_loc)
        + uplink_latency(demand, phi, rate)
        + recovery_latency(demand, phi, cfg.y_exp, cfg.cycles_per_bit, f_edge)
    )
