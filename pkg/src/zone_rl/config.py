"""Configuration schema for the experiment harness.

A single JSON document maps onto frozen dataclasses. Unknown keys are
rejected outright so that config drift (typos, stale fields) surfaces as an
error instead of silently running defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from typing import Any, TypeVar

from .glucose import SCENARIO_TAGS

POLICY_KINDS = ("learned-tabular", "random", "fixed-schedule", "degenerate-case-a")

C = TypeVar("C")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a glucose experiment needs: scenario, policy kind, budgets,
    reward constants, shield settings, observation switches, seeds, and
    episode sizing. ``out_dir`` is consumed by the CLI layer; the runners
    themselves return plain data."""

    scenario: str = "AGVP"
    policy: str = "learned-tabular"
    max_interventions: float = 60
    max_violations: float = 600
    activation_cost: float = 1.0
    impulse_weight: float = 0.1
    violation_penalty: float = 1.0e4
    discount: float = 0.98
    shield_enabled: bool = True
    shield_horizon: int = 36
    shield_samples: int = 8
    shield_margin: float = 15.0
    carb_visibility: bool = True
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    days: int = 3
    episodes_per_seed: int = 1
    fast_magnitudes: tuple[float, ...] = (1.0, 2.0, 4.0)
    train_episodes: int = 300
    train_seed: int = 20240
    sweep_budgets: tuple[float, ...] = (40, 50, 60, 70, 80, 90)
    parallel: int = 1
    out_dir: str | None = None

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIO_TAGS:
            raise ValueError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIO_TAGS}")
        if self.policy not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.policy!r}; expected one of {POLICY_KINDS}")
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if self.max_interventions < 0 or self.max_violations < 0:
            raise ValueError("budget caps must be >= 0")
        if self.activation_cost < 0 or self.impulse_weight < 0:
            raise ValueError("reward cost weights must be >= 0")
        if self.violation_penalty <= 0:
            raise ValueError("violation penalty must be > 0")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError(f"discount must be in [0, 1), got {self.discount}")
        if self.shield_horizon < 1 or self.shield_samples < 1:
            raise ValueError("shield horizon and sample count must be >= 1")
        if self.days < 1 or self.episodes_per_seed < 1:
            raise ValueError("days and episodes_per_seed must be >= 1")
        if not self.fast_magnitudes or any(m <= 0 for m in self.fast_magnitudes):
            raise ValueError("fast magnitudes must be positive")
        if self.train_episodes < 1:
            raise ValueError("train_episodes must be >= 1")
        if not self.sweep_budgets:
            raise ValueError("sweep_budgets must be nonempty")
        if list(self.sweep_budgets) != sorted(self.sweep_budgets):
            raise ValueError("sweep_budgets must be sorted ascending")
        if self.parallel < 1:
            raise ValueError("parallel must be >= 1")


@dataclass(frozen=True)
class TheoryConfig:
    """Knobs for the theory-validation suite: which fixtures to screen, how
    many random contraction pairs, the optional discount override for the
    contraction example, and the learner convergence run."""

    fixtures: tuple[str, ...] = ("tiny", "small")
    contraction_pairs: int = 100
    contraction_discount: float | None = None
    qlearning_fixture: str = "tiny"
    qlearning_seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    sample_seed: int = 0
    mdp_json: str | None = None

    def __post_init__(self) -> None:
        for name in (*self.fixtures, self.qlearning_fixture):
            if name not in ("tiny", "small"):
                raise ValueError(f"unknown fixture {name!r}; expected 'tiny' or 'small'")
        if not self.fixtures:
            raise ValueError("fixtures must be nonempty")
        if self.contraction_pairs < 1:
            raise ValueError("contraction_pairs must be >= 1")
        if self.contraction_discount is not None and not 0.0 <= self.contraction_discount < 1.0:
            raise ValueError("contraction_discount must be in [0, 1)")
        if not self.qlearning_seeds:
            raise ValueError("qlearning_seeds must be nonempty")


def config_from_dict(cls: type[C], data: dict[str, Any]) -> C:
    """Build a config dataclass from a parsed JSON mapping, rejecting unknown
    keys and coercing JSON arrays onto tuple-typed fields."""
    if not isinstance(data, dict):
        raise ValueError(f"config document must be a JSON object, got {type(data).__name__}")
    declared = {f.name: f for f in fields(cls)}  # type: ignore[arg-type]
    unknown = sorted(set(data) - set(declared))
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


def load_config(cls: type[C], path: str) -> C:
    with open(path) as fh:
        return config_from_dict(cls, json.load(fh))
