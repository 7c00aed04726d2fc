"""Core stochastic processes: the controlled level, intervention accumulators,
and the residual-effect level ladder for the long-acting modality.

Discrete-time Euler scheme. One step is the control cadence (5 minutes in the
glucose instantiation, 288 steps/day); Brownian increments are sqrt(dt)-scaled
standard normals.

The long-acting modality works as an activation pulse plus a residual level:
an activation forces the level to exactly 1 for that step; afterwards the
level decays through a fixed ladder of values in (0, 1) — staying put with
probability ``stay_prob`` and otherwise dropping d >= 1 rungs with probability
proportional to ``drop_ratio**(d-1)`` — until it is absorbed at 0, which ends
the active interval. The level never increases between activations.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

from .rng import RngStream


class ActionKind(enum.Enum):
    NOOP = "noop"
    FAST = "fast"
    LONG = "long"


@dataclass(frozen=True)
class InterventionAction:
    """One of: no intervention, a fast impulse of a given magnitude, or a
    long-acting activation (single magnitude: the pulse is 1, strength is
    carried by the residual level)."""

    kind: ActionKind
    magnitude: float = 0.0

    @staticmethod
    def noop() -> "InterventionAction":
        return InterventionAction(ActionKind.NOOP, 0.0)

    @staticmethod
    def fast(magnitude: float) -> "InterventionAction":
        if magnitude < 0:
            raise ValueError(f"fast impulse magnitude must be >= 0, got {magnitude}")
        return InterventionAction(ActionKind.FAST, float(magnitude))

    @staticmethod
    def long_activation() -> "InterventionAction":
        return InterventionAction(ActionKind.LONG, 1.0)

    @property
    def is_intervention(self) -> bool:
        return self.kind is not ActionKind.NOOP


NOOP = InterventionAction.noop()


@dataclass(frozen=True)
class SystemState:
    """Snapshot of the controlled system at one step.

    x        — controlled process level
    z_long   — cumulative long-acting accumulator (activation pulses + noise)
    z_fast   — cumulative fast-acting accumulator (impulse magnitudes + noise)
    level    — residual long-effect level: 1.0 at an activation step, a ladder
               value during the active interval, 0.0 when no effect is running
    pools    — optional environment-specific auxiliary state (e.g. substance
               pools) that must ride along with the Markov state
    """

    x: float
    z_long: float = 0.0
    z_fast: float = 0.0
    level: float = 0.0
    pools: tuple[float, ...] = ()

    @property
    def long_active(self) -> bool:
        return self.level > 0.0


def effective_long_magnitude(state: SystemState) -> float:
    """Effective long-acting input at this step: 1 at activation steps, the
    residual level mid-interval, 0 when no effect is running."""
    return state.level


# ---------------------------------------------------------------------------
# Controlled process
# ---------------------------------------------------------------------------


@dataclass
class UnderlyingProcess:
    """Euler-discretised controlled level: X' = X + U(state)*dt + sigma*sqrt(dt)*xi.

    ``drift`` maps the full system state to a rate per time unit; the caller
    chooses the dt convention (the glucose env uses dt=1 step-unit with
    per-step rate constants).
    """

    drift: Callable[[SystemState], float]
    sigma: float = 1.0
    dt: float = 5.0

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.dt <= 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")


def step_underlying(proc: UnderlyingProcess, state: SystemState, rng: RngStream) -> float:
    """One Euler step of the controlled level; returns the new x."""
    u = float(proc.drift(state))
    if not math.isfinite(u):
        raise ValueError(f"drift returned non-finite value {u!r} at state {state!r}")
    noise = proc.sigma * math.sqrt(proc.dt) * rng.normal() if proc.sigma > 0 else 0.0
    return state.x + u * proc.dt + noise


# ---------------------------------------------------------------------------
# Intervention accumulators
# ---------------------------------------------------------------------------


@dataclass
class InterventionProcess:
    """Cumulative intervention records: fast impulses and long activations.

    ``z_fast``/``z_long`` integrate the applied magnitudes (plus optional
    accumulator noise); ``rho``/``tau`` hold the impulse/activation step
    indices. Exhaustion times (level hitting 0) are appended to ``tau`` by the
    environment so tau alternates activation/exhaustion.
    """

    sigma_fast: float = 0.0
    sigma_long: float = 0.0
    dt: float = 1.0
    z_fast: float = 0.0
    z_long: float = 0.0
    rho: list[tuple[int, float]] = field(default_factory=list)
    tau: list[int] = field(default_factory=list)

    def step_fast(self, t: int, impulse: float | None, rng: RngStream) -> float:
        """Apply an optional impulse at step t; returns the new z_fast."""
        if impulse is not None:
            if impulse < 0:
                raise ValueError(f"impulse must be >= 0, got {impulse}")
            self.z_fast += impulse
            self.rho.append((t, float(impulse)))
        if self.sigma_fast > 0:
            self.z_fast += self.sigma_fast * math.sqrt(self.dt) * rng.normal()
        return self.z_fast

    def step_long(self, t: int, activated: bool, rng: RngStream) -> float:
        """Register an optional activation pulse at step t; returns the new z_long."""
        if activated:
            self.z_long += 1.0
            self.tau.append(t)
        if self.sigma_long > 0:
            self.z_long += self.sigma_long * math.sqrt(self.dt) * rng.normal()
        return self.z_long


# ---------------------------------------------------------------------------
# Residual-effect level ladder
# ---------------------------------------------------------------------------

ACTIVATION_LEVEL = 1.0


@dataclass
class SpectraProcess:
    """Residual level of the long-acting effect.

    ``levels`` is the ascending decay ladder, levels[0] == 0, all values in
    [0, 1); the activation value 1.0 sits above the ladder and cannot be
    stayed at. Level 0 is absorbing absent activation — and stepping from 0
    consumes no randomness.
    """

    levels: tuple[float, ...] = (0.0, 0.2, 0.4, 0.6, 0.8)
    stay_prob: float = 0.6
    drop_ratio: float = 0.5
    level: float = 0.0

    def __post_init__(self) -> None:
        lv = tuple(float(v) for v in self.levels)
        if len(lv) < 1 or lv[0] != 0.0:
            raise ValueError(f"levels must start at 0.0, got {lv}")
        if any(b <= a for a, b in zip(lv, lv[1:])):
            raise ValueError(f"levels must be strictly increasing, got {lv}")
        if any(v >= 1.0 for v in lv[1:]):
            raise ValueError(f"ladder levels must be < 1, got {lv}")
        if not (0.0 < self.stay_prob < 1.0):
            raise ValueError(f"stay_prob must be in (0,1), got {self.stay_prob}")
        if not (0.0 < self.drop_ratio < 1.0):
            raise ValueError(f"drop_ratio must be in (0,1), got {self.drop_ratio}")
        self.levels = lv
        if self.level not in self.value_set():
            raise ValueError(f"level {self.level} not in {self.value_set()}")

    def value_set(self) -> tuple[float, ...]:
        """All values the level can take: the ladder plus the activation value."""
        return self.levels + (ACTIVATION_LEVEL,)


def spectra_pmf(spectra: SpectraProcess, from_level: float) -> dict[float, float]:
    """One-step decay distribution from ``from_level``.

    Support is the ladder values <= from_level. From a ladder rung: stay with
    probability q, otherwise drop d rungs with probability (1-q)*r^(d-1),
    renormalised over the available lower rungs. From the activation value 1
    (not a ladder member) there is no stay mass: the r^(d-1) weights are
    renormalised over the whole ladder.
    """
    levels = spectra.levels
    q, r = spectra.stay_prob, spectra.drop_ratio
    if from_level == 0.0:
        return {0.0: 1.0}
    if from_level == ACTIVATION_LEVEL:
        m = len(levels)  # rungs strictly below 1: all ladder values
        weights = [r**d for d in range(m)]
        z = sum(weights)
        # d = 1 lands on the top ladder rung, d = m on 0
        return {levels[m - 1 - d]: weights[d] / z for d in range(m)}
    try:
        i = levels.index(from_level)
    except ValueError:
        raise ValueError(f"from_level {from_level!r} is not a ladder value {levels} or 1.0")
    weights = [r ** (d - 1) for d in range(1, i + 1)]
    z = sum(weights)
    pmf = {from_level: q}
    for d in range(1, i + 1):
        pmf[levels[i - d]] = (1.0 - q) * weights[d - 1] / z
    return pmf


def spectra_step(spectra: SpectraProcess, activated: bool, rng: RngStream) -> float:
    """Advance the level one step. Activation forces it to 1 (no draw);
    level 0 stays 0 without consuming randomness; otherwise sample the decay
    pmf. Returns the new level."""
    if activated:
        spectra.level = ACTIVATION_LEVEL
        return spectra.level
    if spectra.level == 0.0:
        return 0.0
    pmf = spectra_pmf(spectra, spectra.level)
    values = list(pmf.keys())
    idx = rng.choice_index([pmf[v] for v in values])
    spectra.level = values[idx]
    return spectra.level


# ---------------------------------------------------------------------------
# Trajectory CSV
# ---------------------------------------------------------------------------

TRAJECTORY_BASE_COLUMNS = (
    "t",
    "x",
    "z_long",
    "z_fast",
    "level",
    "eta_long",
    "eta_fast",
    "effective_long",
)


def write_trajectory_csv(
    path: str,
    rows: Iterable[dict],
    extra_columns: Sequence[str] = (),
) -> None:
    """Write one row per step with the mandatory header. ``rows`` supply the
    base columns plus any ``extra_columns`` (budgets b1..bJ, environment
    observables). Values are written at full precision via repr."""
    columns = list(TRAJECTORY_BASE_COLUMNS) + list(extra_columns)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c, "")) for c in columns])


def _fmt(value: object) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def state_with(state: SystemState, **changes) -> SystemState:
    """Functional update helper for SystemState."""
    return replace(state, **changes)
