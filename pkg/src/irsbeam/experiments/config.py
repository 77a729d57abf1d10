"""Experiment configuration: nested TOML sections mapped onto frozen dataclasses.

Every key is optional; omitted keys keep the reference-hall defaults.
Unknown sections or keys raise :class:`ConfigError`.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ..channel import ScenarioConfig, dbm_to_watt
from ..estimator import FineSearchConfig, GridSpec
from ..positioning import SelectionPolicy


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SoundingConfig:
    n_training: int = 16
    # None draws fresh codebooks inside every trial
    codebook_seed: int | None = None


@dataclass(frozen=True)
class EstimatorConfig:
    z_theta: int = 64
    z_phi: int = 64
    n_peaks: int = 5
    step: float = 1e-3
    eps: float = 1e-16
    max_iterations: int = 50

    def grid(self) -> GridSpec:
        return GridSpec(self.z_theta, self.z_phi, self.n_peaks)

    def fine(self) -> FineSearchConfig:
        return FineSearchConfig(self.step, self.eps, self.max_iterations)


@dataclass(frozen=True)
class PositioningConfig:
    sqrt_xi_th: float = 0.005
    pl_th_db: float = 6.0
    taylor_eps: float = 1e-6

    def policy(self) -> SelectionPolicy:
        return SelectionPolicy(self.sqrt_xi_th**2, self.pl_th_db)


@dataclass(frozen=True)
class SweepConfig:
    """Axes swept by the figure subcommands."""

    powers_dbm: tuple = (0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0, 21.0, 24.0, 27.0, 30.0)
    training_lengths: tuple = (8, 16)
    misalignment_lengths: tuple = (8, 16, 32, 64, 128, 256)
    misalignment_powers_dbm: tuple = (-20.0, 0.0)
    user_counts: tuple = (20, 50, 100)
    contour_lengths: tuple = (4, 8, 12, 16)


@dataclass(frozen=True)
class RunConfig:
    trials: int = 500
    seed: int = 0
    workers: int = 1
    out: str = "results"


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    sounding: SoundingConfig = field(default_factory=SoundingConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    positioning: PositioningConfig = field(default_factory=PositioningConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def __post_init__(self):
        if self.run.trials < 1:
            raise ConfigError("run.trials must be >= 1")
        if self.run.workers < 1:
            raise ConfigError("run.workers must be >= 1")
        if self.sounding.n_training < 1:
            raise ConfigError("sounding.n_training must be >= 1")

    def with_run(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, run=replace(self.run, **kw))

    def with_scenario(self, **kw) -> "ExperimentConfig":
        return replace(self, scenario=replace(self.scenario, **kw))

    @property
    def noise_power(self) -> float:
        return float(dbm_to_watt(self.scenario.noise_dbm))

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """Short hash of every setting except the run block."""
        d = self.to_dict()
        d.pop("run")
        blob = json.dumps(d, sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_SECTIONS = {
    "scenario": ScenarioConfig,
    "sounding": SoundingConfig,
    "estimator": EstimatorConfig,
    "positioning": PositioningConfig,
    "sweep": SweepConfig,
    "run": RunConfig,
}


def _coerce(cls, name: str, table: dict):
    if not isinstance(table, dict):
        raise ConfigError(f"[{name}] must be a table")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(table) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(unknown)}")
    kw = {}
    for k, v in table.items():
        kw[k] = tuple(v) if isinstance(v, list) else v
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}]: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    unknown = sorted(set(data) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    parts = {name: _coerce(cls, name, data[name]) for name, cls in _SECTIONS.items() if name in data}
    return ExperimentConfig(**parts)


def load_config(path=None) -> ExperimentConfig:
    """Read a TOML file; ``None`` returns the defaults."""
    if path is None:
        return ExperimentConfig()
    with open(Path(path), "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(data)
