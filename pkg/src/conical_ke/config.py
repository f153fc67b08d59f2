"""Experiment configuration: JSON in, validated frozen dataclass out."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    beta: float = 0.5
    beta0: float | None = None
    lam: int = 1
    lp_exponent: float | None = None
    epsilon_schedule: tuple[float, ...] = (1.0, 1e-1, 1e-2, 1e-3, 1e-4)
    grid_size: int = 8192
    half_width: float = 60.0
    newton_tolerance: float = 1e-9
    step_tolerance: float = 1e-7
    max_iterations: int = 30
    initial_step: float | None = None
    min_step: float | None = None
    step_growth: float = 1.5
    distance_grid: int = 256
    stencil: int = 3
    sample_grid: int = 16
    potentials: int = 100
    output_dir: str = "out"
    seed: int = 0

    def __post_init__(self):
        sched = tuple(float(e) for e in self.epsilon_schedule)
        object.__setattr__(self, "epsilon_schedule", sched)
        if not 0.0 < self.beta <= 1.0:
            raise ConfigError(f"beta must lie in (0, 1], got {self.beta}")
        if self.beta0 is not None and not 0.0 < self.beta0 <= self.beta:
            raise ConfigError("beta0 must lie in (0, beta]")
        if self.lam < 1:
            raise ConfigError("lambda must be a positive integer")
        if not sched:
            raise ConfigError("epsilon_schedule is empty")
        if any(not 0.0 < e <= 1.0 for e in sched):
            raise ConfigError("epsilon_schedule entries must lie in (0, 1]")
        if any(b >= a for a, b in zip(sched, sched[1:])):
            raise ConfigError("epsilon_schedule must be strictly decreasing")
        n = self.grid_size
        if n < 2**9 or n > 2**15 or n & (n - 1):
            raise ConfigError("grid_size must be a power of two between 512 and 32768")
        if self.newton_tolerance <= 0 or self.step_tolerance <= 0:
            raise ConfigError("Newton tolerances must be positive")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if self.step_growth < 1.0:
            raise ConfigError("step_growth must be >= 1")
        if self.stencil < 1 or self.distance_grid < 8:
            raise ConfigError("invalid distance-graph resolution")
        if self.distance_grid % self.sample_grid:
            raise ConfigError("sample_grid must divide distance_grid")
        if self.potentials < 1:
            raise ConfigError("potentials must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        d["epsilon_schedule"] = list(d["epsilon_schedule"])
        return d

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()
