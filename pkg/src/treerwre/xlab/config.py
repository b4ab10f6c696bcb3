"""Experiment configuration files (YAML)."""

from __future__ import annotations

from dataclasses import dataclass, field

import yaml

from ..env import EnvSpec
from ..errors import InvalidSpec
from .fit import cube_schedule, doubling_schedule

DEFAULT_BUDGETS = {
    "nodes": 2 * 10**9,        # tree-search visits per query
    "steps": 10**7,            # walk steps per excursion
    "vertices": 1 << 23,       # materialized vertices for exact recursions
}


@dataclass
class ExperimentConfig:
    spec: EnvSpec
    seeds: list = field(default_factory=lambda: [0])
    schedule: list = field(default_factory=list)
    samples: dict = field(default_factory=dict)
    budgets: dict = field(default_factory=lambda: dict(DEFAULT_BUDGETS))
    output: dict = field(default_factory=dict)
    threads: int = 1

    def __post_init__(self):
        self.schedule = [int(n) for n in self.schedule]
        if any(b <= a for a, b in zip(self.schedule, self.schedule[1:])):
            raise InvalidSpec("depth schedule must be strictly increasing")
        merged = dict(DEFAULT_BUDGETS)
        merged.update({k: int(float(v)) for k, v in self.budgets.items()})
        if any(v <= 0 for v in merged.values()):
            raise InvalidSpec("budgets must be positive")
        self.budgets = merged
        self.seeds = [int(s) for s in self.seeds]

    def sample(self, key: str, default):
        """Sample count ``key``; numbers written as ``1e6`` are accepted."""
        v = self.samples.get(key, default)
        return int(float(v)) if isinstance(default, int) else v

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        spec = d.pop("spec")
        spec = spec if isinstance(spec, EnvSpec) else EnvSpec.from_dict(spec)
        sched = d.pop("schedule", [])
        if isinstance(sched, dict):
            kind = sched.get("preset")
            if kind == "doubling":
                sched = doubling_schedule(int(sched["start"]), int(sched["stop"]))
            elif kind == "cube":
                sched = cube_schedule(int(sched["j_max"]), int(sched.get("j_min", 1)))
            else:
                raise InvalidSpec(f"unknown schedule preset {kind!r}")
        return cls(spec=spec, schedule=sched, **d)

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(yaml.safe_load(text))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_text(fh.read())

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "seeds": list(self.seeds),
            "schedule": list(self.schedule),
            "samples": dict(self.samples),
            "budgets": dict(self.budgets),
            "output": dict(self.output),
            "threads": self.threads,
        }
