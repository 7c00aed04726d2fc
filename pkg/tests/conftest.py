"""Shared fixtures: the exact-solver fixtures, a deterministic stub
environment for controller tests, and small experiment configs sized for
fast unit runs."""

from __future__ import annotations

from dataclasses import dataclass

import pytest

from zone_rl.constraints import ConstraintSet, RewardConfig
from zone_rl.processes import ActionKind, SpectraProcess, SystemState, spectra_step
from zone_rl.tabular import build_fixture_mdp, value_iteration


@dataclass
class StubEnv:
    """Linear mean-reverting system with additive long/fast pulls.

    Deterministic enough to hand-compute shield look-aheads (sigma=0 turns
    the live dynamics exact; ``predict_step`` is always noise-free and holds
    the residual level constant, i.e. a pessimistic central model).
    """

    constraints: ConstraintSet
    reward_config: RewardConfig
    sigma: float = 1.0
    drift_rate: float = -0.05
    baseline: float = 140.0
    long_gain: float = 2.0
    fast_gain: float = 8.0
    init_x: float = 125.0
    spectra_levels: tuple = (0.0, 0.25, 0.5, 0.75)

    def _drift(self, x: float, effective: float, impulse: float) -> float:
        return (
            self.drift_rate * (x - self.baseline)
            - self.long_gain * effective
            - self.fast_gain * impulse
        )

    def start_episode(self, rng):
        sp = SpectraProcess(levels=self.spectra_levels, stay_prob=0.6, drop_ratio=0.5)
        return SystemState(x=self.init_x), {"rng": rng, "sp": sp}

    def step(self, ctx, t, state, action):
        sp, rng = ctx["sp"], ctx["rng"]
        activated = action.kind is ActionKind.LONG
        if activated:
            spectra_step(sp, True, rng)
        effective = sp.level if (activated or state.long_active) else 0.0
        impulse = action.magnitude if action.kind is ActionKind.FAST else 0.0
        x = state.x + self._drift(state.x, effective, impulse)
        if self.sigma > 0:
            x += self.sigma * rng.normal()
        next_level = spectra_step(sp, False, rng)
        return SystemState(x=float(x), level=next_level)

    def predict_step(self, ctx, t, state, action, rng):
        activated = action.kind is ActionKind.LONG
        level = 1.0 if activated else state.level
        impulse = action.magnitude if action.kind is ActionKind.FAST else 0.0
        x = state.x + self._drift(state.x, level, impulse)
        return SystemState(x=float(x), level=level)


@pytest.fixture(scope="session")
def stub_env_cls():
    return StubEnv


@pytest.fixture(scope="session")
def base_constraints():
    return ConstraintSet(target=125.0, halfwidth=55.0, max_interventions=60, max_violations=600)


@pytest.fixture(scope="session")
def base_rewards():
    return RewardConfig(target=125.0, alpha=1.0, beta=0.1)


@pytest.fixture(scope="session")
def tiny_mdp():
    return build_fixture_mdp("tiny")


@pytest.fixture(scope="session")
def small_mdp():
    return build_fixture_mdp("small")


@pytest.fixture(scope="session")
def tiny_vi(tiny_mdp):
    return value_iteration(tiny_mdp)


@pytest.fixture(scope="session")
def small_vi(small_mdp):
    return value_iteration(small_mdp)
