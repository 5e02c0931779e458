"""Experiment configuration, stored as JSON."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from ..digitizer import DEFAULT_STAGES
from ..model import TWO_PI, ProblemInstance, Schedule, instance_by_label
from ..nmrsim import NoiseConfig

DEFAULT_SWEEP = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class ExperimentConfig:
    instance: str = "neg"  # "neg", "pos" or "custom"
    custom_instance: dict | None = None
    unit_factor: float = TWO_PI
    schedule: Schedule = field(default_factory=Schedule)
    stages: tuple = DEFAULT_STAGES
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    monte_carlo_runs: int = 100
    sweep: tuple = DEFAULT_SWEEP
    output_dir: str = "runs"
    seed: int = 0
    compile_seed: int = 0
    fidelity_convention: str = "root"  # or "squared"
    bloch_steps: int = 20_000

    def __post_init__(self):
        if self.monte_carlo_runs < 1:
            raise ValueError("monte_carlo_runs must be >= 1")
        if any(not 0 <= g <= 1 for g in self.sweep):
            raise ValueError("sweep gradients must lie in [0, 1] G/cm")
        if self.fidelity_convention not in ("root", "squared"):
            raise ValueError("fidelity_convention must be 'root' or 'squared'")
        if self.instance not in ("neg", "pos", "custom"):
            raise ValueError("instance must be 'neg', 'pos' or 'custom'")
        if self.instance == "custom" and not self.custom_instance:
            raise ValueError("custom instance needs custom_instance parameters")

    @property
    def root_fidelity(self) -> bool:
        return self.fidelity_convention == "root"

    def problem_instance(self) -> ProblemInstance:
        if self.instance == "custom":
            return ProblemInstance(**{"unit_factor": self.unit_factor, **self.custom_instance})
        return instance_by_label(self.instance, self.unit_factor)

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)

    def with_gradient(self, gradient: float) -> "ExperimentConfig":
        return replace(self, noise=replace(self.noise, gradient=gradient))

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stages"] = [list(s) for s in self.stages]
        d["sweep"] = list(self.sweep)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "schedule" in d:
            d["schedule"] = Schedule.from_dict(d["schedule"])
        if "noise" in d:
            d["noise"] = NoiseConfig(**d["noise"])
        if "stages" in d:
            d["stages"] = tuple(tuple(s) for s in d["stages"])
        if "sweep" in d:
            d["sweep"] = tuple(d["sweep"])
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(canonical_json(self.to_dict()) + "\n")

    def compile_key(self) -> dict:
        """The part of the config that determines the compiled pulse program."""
        d = self.to_dict()
        return {k: d[k] for k in ("instance", "custom_instance", "unit_factor", "schedule", "stages", "compile_seed")}

    def compile_hash(self) -> str:
        return sha256_text(canonical_json(self.compile_key()))

    def config_hash(self) -> str:
        return sha256_text(canonical_json(self.to_dict()))


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False)


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()
