"""Configuration dataclasses and the INI-style experiment config loader."""
from __future__ import annotations

import configparser
import dataclasses
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    """Raised for unknown keys, bad values or violated config invariants."""


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class SystemConfig:
    """Physical and problem constants of the synchronization system (SI units)."""

    num_uds: int = 6
    num_slots: int = 25
    cycle: float = 30.0
    eta: float = 0.25
    bandwidth: float = 0.2e6
    noise_power: float = 1e-11  # -80 dBm
    beta0: float = 1e-3  # -30 dB
    pathloss_exp: float = -2.0
    cycles_per_bit: float = 300.0
    k_loc: float = 1e-27
    x_exp: float = 1.2
    y_exp: float = 1.5
    d_min: float = 0.6e6
    d_max: float = 0.8e6
    phi_min: float = 0.4
    f_u_max: float = 1e9
    f_e_max: float = 10e9
    p_min: float = 0.01
    p_max: float = 0.1
    e_u_max: float = 0.5
    sense_rate: float = 4e6
    sense_energy_per_bit: float = 1e-8
    penalty_w: float = 10.0
    bs_position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    # placement and Gauss-Markov mobility
    spawn_center: tuple[float, float, float] = (50.0, 0.0, 0.0)
    spawn_radius: float = 5.0
    gm_rho: float = 0.8
    gm_mean_speed: float = 0.5
    gm_max_speed: float = 1.0
    gm_sigma_speed: float = 0.1
    gm_sigma_heading: float = 0.2
    # action decoding and state normalisation
    f_loc_floor: float = 0.01
    edge_overalloc: float = 2.0
    d_ref: float = 100.0

    def __post_init__(self) -> None:
        self.validate()

    @property
    def tau(self) -> float:
        return self.cycle / self.num_slots

    @property
    def deadline(self) -> float:
        """Processing window (1 - eta) * tau for extraction, upload and recovery."""
        return (1.0 - self.eta) * self.tau

    @property
    def sensing_capacity(self) -> float:
        """Bits a UD can sense inside the eta * tau sensing window."""
        return self.eta * self.tau * self.sense_rate

    @property
    def sensing_budget_energy(self) -> float:
        return self.sense_energy_per_bit * self.sensing_capacity

    @property
    def bandwidth_per_ud(self) -> float:
        return self.bandwidth / self.num_uds

    def validate(self) -> None:
        if self.num_uds < 1 or self.num_slots < 1:
            raise ConfigError("num_uds and num_slots must be >= 1")
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError(f"eta must lie in [0, 1], got {self.eta}")
        if not 0.0 < self.phi_min <= 1.0:
            raise ConfigError(f"phi_min must lie in (0, 1], got {self.phi_min}")
        if self.p_min > self.p_max:
            raise ConfigError("p_min must not exceed p_max")
        if self.d_min > self.d_max:
            raise ConfigError("d_min must not exceed d_max")
        positive = (
            "cycle", "bandwidth", "noise_power", "beta0", "cycles_per_bit", "k_loc",
            "x_exp", "y_exp", "d_min", "f_u_max", "f_e_max", "p_min", "e_u_max",
            "sense_rate", "sense_energy_per_bit", "penalty_w", "d_ref",
        )
        for name in positive:
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ConfigError(f"{name} must be finite and > 0, got {value}")
        if self.sensing_capacity < self.d_max:
            raise ConfigError(
                f"sensing window holds {self.sensing_capacity:g} bits < d_max={self.d_max:g}; "
                "raise sense_rate or eta"
            )
        if not 0.0 <= self.gm_rho <= 1.0:
            raise ConfigError("gm_rho must lie in [0, 1]")
        if not 0.0 < self.f_loc_floor <= 1.0:
            raise ConfigError("f_loc_floor must lie in (0, 1]")
        if self.edge_overalloc < 1.0:
            raise ConfigError("edge_overalloc must be >= 1")

    def replace(self, **changes: Any) -> "SystemConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class TrainConfig:
    """SAC hyperparameters."""

    lr: float = 1e-4
    batch_size: int = 256
    buffer_size: int = 1_000_000
    gamma: float = 0.99
    n_epoch: int = 20
    n_step: int = 5000
    target_sync_every: int = 320
    hidden: int = 256
    target_entropy: float | None = None  # None -> -action_dim
    reward_scale: float | None = None  # None -> 1 / num_uds
    updates: bool = True

    def __post_init__(self) -> None:
        if self.lr <= 0 or self.batch_size < 1 or self.buffer_size < self.batch_size:
            raise ConfigError("need lr > 0, batch_size >= 1 and buffer_size >= batch_size")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.n_epoch < 0 or self.n_step < 0 or self.target_sync_every < 1 or self.hidden < 1:
            raise ConfigError("epochs/steps must be >= 0, sync frequency and width >= 1")


POLICIES = ("sac", "random", "nosc", "greedy")
SWEEP_AXES = ("K", "D_range", "phi_min", "f_u_max")


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    policy: str = "sac"
    eval_episodes: int = 50
    eval_seed_base: int = 1000
    sweep_axis: str | None = None
    sweep_values: tuple[float, ...] = ()
    out_dir: str = "runs"

    def __post_init__(self) -> None:
        if self.policy not in POLICIES:
            raise ConfigError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if self.sweep_axis is not None and self.sweep_axis not in SWEEP_AXES:
            raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {self.sweep_axis!r}")
        if self.eval_episodes < 1:
            raise ConfigError("eval_episodes must be >= 1")

    def replace(self, **changes: Any) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


# --------------------------------------------------------------------------- loader

_SECTIONS = {
    "system": SystemConfig,
    "train": TrainConfig,
    "experiment": ExperimentConfig,
}
# table entries given in logarithmic units
_ALIASES = {
    "system": {"beta0_db": ("beta0", db_to_linear), "noise_power_dbm": ("noise_power", dbm_to_watts)},
}
_KEY_RE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*[=:]")
_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")


def _field_types(cls: type) -> dict[str, str]:
    return {f.name: str(f.type) for f in dataclasses.fields(cls) if f.name not in ("system", "train")}


def _convert(raw: str, type_name: str) -> Any:
    raw = raw.strip()
    if type_name.startswith("tuple"):
        parts = [p for p in re.split(r"[,\s]+", raw.strip("()[] ")) if p]
        return tuple(float(p) for p in parts)
    if "None" in type_name and raw.lower() in ("none", ""):
        return None
    if type_name.startswith("bool"):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if type_name.startswith("int"):
        value = float(raw)
        if not value.is_integer():
            raise ValueError(f"not an integer: {raw!r}")
        return int(value)
    if type_name.startswith("float"):
        return float(raw)
    return raw


def _line_index(text: str) -> dict[tuple[str, str], int]:
    lines: dict[tuple[str, str], int] = {}
    section = ""
    for lineno, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip().lower()
            lines[(section, "")] = lineno
            continue
        m = _KEY_RE.match(line)
        if m:
            lines[(section, m.group(1).lower())] = lineno
    return lines


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    """Parse INI text with ``[system]``, ``[train]`` and ``[experiment]`` sections.

    Missing keys fall back to the defaults; unknown sections or keys and
    unparsable values raise :class:`ConfigError` naming the offending line.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    lines = _line_index(text)

    def where(section: str, key: str = "") -> str:
        return f"{source}:{lines.get((section, key), '?')}"

    values: dict[str, dict[str, Any]] = {name: {} for name in _SECTIONS}
    for section in parser.sections():
        sec = section.lower()
        if sec not in _SECTIONS:
            raise ConfigError(f"{where(sec)}: unknown section [{section}]")
        types = _field_types(_SECTIONS[sec])
        aliases = _ALIASES.get(sec, {})
        for key, raw in parser.items(section):
            try:
                if key in aliases:
                    target, conv = aliases[key]
                    values[sec][target] = conv(float(raw))
                elif key in types:
                    values[sec][key] = _convert(raw, types[key])
                else:
                    raise ConfigError(f"{where(sec, key)}: unknown key {key!r} in [{section}]")
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(f"{where(sec, key)}: bad value for {key!r}: {exc}") from exc

    def build(sec: str, cls: type, **extra: Any) -> Any:
        try:
            return cls(**values[sec], **extra)
        except ConfigError as exc:
            bad = next((k for k in values[sec] if k in str(exc)), "")
            raise ConfigError(f"{where(sec, bad)}: {exc}") from exc

    system = build("system", SystemConfig)
    train = build("train", TrainConfig)
    return build("experiment", ExperimentConfig, system=system, train=train)


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Load an experiment config file; ``None`` or an empty file yields the defaults."""
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), source=str(path))
