"""Stylised type-1-diabetes blood-glucose environment.

Dual-modality insulin control of a scalar glucose level on a 5-minute clock
(288 steps/day, episodes default to 3 days):

- a gut carbohydrate pool fills at meal times and is absorbed into blood at a
  fixed fractional rate (one gram raises glucose by one mg/dL in total);
- a fast-insulin activity pool receives impulse doses and decays
  geometrically, lowering glucose while it lasts;
- a long-acting activation contributes through the residual level ladder of
  :mod:`zone_rl.processes`, scaled by a fixed potency;
- a weak homeostatic pull relaxes glucose toward a basal value.

The drift decomposition is this package's own stylisation. Its coefficients
are calibrated by an explicit procedure (see ``no_insulin_tir``): without any
insulin, the three-main-meal day profile must land between 25% and 55% time
in the 70-180 mg/dL zone over 20 seeds — high enough that control matters,
low enough that it is needed.

A glucose reading below 40 mg/dL is a severe event: it is counted, the
entered low state remains real (it is charged against the zone-violation
budget like any excursion), and the system restarts from the initial state at
the beginning of the following step — the day then continues.

Meal scenarios (one realisation drawn per day):

- CMP: exactly lunch (12:00 +/- 60 min, 50 +/- 10 g) and dinner
  (18:00 +/- 60 min, 70 +/- 10 g).
- AGVP: mains at 7:00/12:00/18:00 each with probability 0.95 and
  25/40/40 +/- 10 g; snacks at 9:30/15:00/21:30 each with probability 0.30
  and 10-30 g (uniform).
- PHC: the AGVP structure with mains at 60/80/100 +/- 10 g and snacks at
  30 +/- 5 g.

Carbohydrate draws truncate at zero. Times without a stated spread are exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any

from .constraints import (
    BudgetAccount,
    ConstraintSet,
    RewardConfig,
    budget_vector,
    reshaped_reward,
    base_reward,
)
from .processes import (
    ActionKind,
    InterventionAction,
    SpectraProcess,
    SystemState,
    UnderlyingProcess,
    effective_long_magnitude,
    spectra_step,
    step_underlying,
)
from .rng import RngStream

MINUTES_PER_STEP = 5
STEPS_PER_DAY = 288
SCENARIO_TAGS = ("CMP", "AGVP", "PHC")


# ---------------------------------------------------------------------------
# Meal scenarios
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MealEvent:
    """One potential meal in a day's scenario.

    ``clock_minutes`` is the mean clock time; ``time_window`` a uniform
    +/- jitter in minutes. Carbohydrates draw from a normal law
    (``carb_mean`` +/- ``carb_sigma``, truncated at 0) unless ``carb_range``
    overrides it with a uniform window.
    """

    clock_minutes: int
    carb_mean: float
    carb_sigma: float = 0.0
    time_window: int = 0
    carb_range: tuple[float, float] | None = None
    probability: float = 1.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.probability <= 1.0):
            raise ValueError(f"probability must be in [0,1], got {self.probability}")
        if not (0 <= self.clock_minutes < 24 * 60):
            raise ValueError(f"clock time out of day range: {self.clock_minutes}")
        if self.carb_range is not None and self.carb_range[0] > self.carb_range[1]:
            raise ValueError(f"carb_range must be ordered, got {self.carb_range}")


@dataclass(frozen=True)
class MealScenario:
    tag: str
    events: tuple[MealEvent, ...]


@dataclass(frozen=True)
class RealisedMeal:
    """A meal that actually occurs: day-relative step index and grams."""

    step: int
    grams: float


def scenario(tag: str) -> MealScenario:
    """The named scenario's event parameters (one day)."""
    if tag == "CMP":
        return MealScenario(
            tag,
            (
                MealEvent(12 * 60, 50.0, 10.0, time_window=60),
                MealEvent(18 * 60, 70.0, 10.0, time_window=60),
            ),
        )
    if tag == "AGVP":
        return MealScenario(
            tag,
            (
                MealEvent(7 * 60, 25.0, 10.0, probability=0.95),
                MealEvent(12 * 60, 40.0, 10.0, probability=0.95),
                MealEvent(18 * 60, 40.0, 10.0, probability=0.95),
                MealEvent(9 * 60 + 30, 20.0, carb_range=(10.0, 30.0), probability=0.30),
                MealEvent(15 * 60, 20.0, carb_range=(10.0, 30.0), probability=0.30),
                MealEvent(21 * 60 + 30, 20.0, carb_range=(10.0, 30.0), probability=0.30),
            ),
        )
    if tag == "PHC":
        return MealScenario(
            tag,
            (
                MealEvent(7 * 60, 60.0, 10.0, probability=0.95),
                MealEvent(12 * 60, 80.0, 10.0, probability=0.95),
                MealEvent(18 * 60, 100.0, 10.0, probability=0.95),
                MealEvent(9 * 60 + 30, 30.0, 5.0, probability=0.30),
                MealEvent(15 * 60, 30.0, 5.0, probability=0.30),
                MealEvent(21 * 60 + 30, 30.0, 5.0, probability=0.30),
            ),
        )
    raise ValueError(f"unknown scenario tag {tag!r}; expected one of {SCENARIO_TAGS}")


def realise_day(spec: MealScenario, rng: RngStream) -> tuple[RealisedMeal, ...]:
    """Draw one day's concrete meals from a scenario.

    Per event, in declaration order: one occurrence draw (always consumed),
    one time draw iff the event has a window, one carb draw. Carbohydrates
    truncate at zero; times round to the nearest step.
    """
    meals: list[RealisedMeal] = []
    for event in spec.events:
        occurs = rng.random() < event.probability
        minutes = float(event.clock_minutes)
        if event.time_window > 0:
            minutes += rng.uniform(-event.time_window, event.time_window)
        if event.carb_range is not None:
            grams = rng.uniform(*event.carb_range)
        else:
            grams = event.carb_mean + event.carb_sigma * rng.normal()
        if not occurs:
            continue
        step = int(round(minutes / MINUTES_PER_STEP)) % STEPS_PER_DAY
        meals.append(RealisedMeal(step, max(0.0, float(grams))))
    return tuple(meals)


def build_scenario(tag: str, rng: RngStream) -> tuple[RealisedMeal, ...]:
    """One day's realised meals for the named scenario."""
    return realise_day(scenario(tag), rng)


# ---------------------------------------------------------------------------
# Dynamics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GlucoseDynamics:
    """Stylised glucose drift coefficients (per 5-minute step).

    k_abs    — fractional gut absorption; one gram raises glucose 1 mg/dL in
               total, spread geometrically
    k_fast   — mg/dL lowering per unit of fast-insulin activity per step
    k_fast_decay — fractional decay of fast-insulin activity per step
    k_long   — mg/dL lowering per step at residual level 1
    k_homeo  — fractional pull toward ``basal``
    sigma_x  — glucose noise (mg/dL per sqrt(step))
    """

    k_abs: float = 0.03
    k_fast: float = 1.2
    k_fast_decay: float = 0.15
    k_long: float = 0.8
    k_homeo: float = 0.007
    basal: float = 140.0
    sigma_x: float = 1.0
    x_min: float = 10.0
    x_max: float = 600.0
    init_x: float = 140.0
    hypo_threshold: float = 40.0
    sensor_sigma: float = 0.0

    def __post_init__(self) -> None:
        for name in ("k_abs", "k_fast", "k_fast_decay", "k_long", "k_homeo"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not (0.0 <= self.k_abs < 1.0) or not (0.0 <= self.k_fast_decay < 1.0):
            raise ValueError("fractional rates must be in [0, 1)")
        if self.x_min >= self.x_max:
            raise ValueError("x_min must be below x_max")


def glucose_drift(dynamics: GlucoseDynamics, state: SystemState) -> float:
    """Glucose rate of change (mg/dL per step) for a state whose pools are
    (gut carbohydrates, fast-insulin activity)."""
    gut, fast_activity = state.pools
    return (
        dynamics.k_abs * gut
        - dynamics.k_fast * fast_activity
        - dynamics.k_long * effective_long_magnitude(state)
        - dynamics.k_homeo * (state.x - dynamics.basal)
    )


# ---------------------------------------------------------------------------
# Environment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Observation:
    """What a policy may see: sensed glucose (plus sensor noise when
    configured), the residual long-effect level, the budget vector, and —
    only when carbohydrate visibility is on — the environment's announced
    carbs-on-board (the current gut pool)."""

    glucose: float
    level: float
    budgets: tuple[float, float, float, float]
    carbs_on_board: float | None


@dataclass
class GlucoseEpisode:
    """Per-episode mutable context: named streams, the realised meal plan
    (absolute step -> grams), the decay ladder state, and event counters."""

    dynamics_rng: RngStream
    spectra_rng: RngStream
    sensor_rng: RngStream
    spectra: SpectraProcess
    meals: dict[int, float]
    meal_log: list[float] = field(default_factory=list)
    aime_events: int = 0
    resets: int = 0
    reset_pending: bool = False


@dataclass(frozen=True)
class GlucoseConfig:
    scenario: str = "AGVP"
    days: int = 3
    dynamics: GlucoseDynamics = field(default_factory=GlucoseDynamics)
    constraints: ConstraintSet = field(
        default_factory=lambda: ConstraintSet(
            target=125.0, halfwidth=55.0, max_interventions=60, max_violations=600
        )
    )
    rewards: RewardConfig = field(
        default_factory=lambda: RewardConfig(target=125.0, alpha=1.0, beta=0.1)
    )
    carb_visibility: bool = True
    spectra_levels: tuple[float, ...] = (0.0, 0.2, 0.4, 0.6, 0.8)
    spectra_stay: float = 0.9
    spectra_drop: float = 0.5

    def __post_init__(self) -> None:
        scenario(self.scenario)  # validates the tag
        if self.days < 1:
            raise ValueError(f"days must be >= 1, got {self.days}")

    @property
    def horizon(self) -> int:
        return self.days * STEPS_PER_DAY


class GlucoseEnv:
    """The glucose system as a controllable environment.

    Two equivalent faces share one dynamics core:

    - the episode-loop protocol (``start_episode`` / ``step`` /
      ``predict_step``) used by the switching controller, where the episode
      context is explicit and the caller owns budgets and rewards;
    - a stateful single-agent interface (``env_reset`` / ``env_step``) for
      training loops, which carries its own clock and budget account.
    """

    def __init__(self, config: GlucoseConfig | None = None) -> None:
        self.config = config or GlucoseConfig()
        self.constraints = self.config.constraints
        self.reward_config = self.config.rewards
        dyn = self.config.dynamics
        self._process = UnderlyingProcess(
            drift=lambda s: glucose_drift(dyn, s), sigma=dyn.sigma_x, dt=1.0
        )
        self.last_episode: GlucoseEpisode | None = None
        # state of the single-agent face (populated by env_reset)
        self._agent: dict[str, Any] | None = None

    # -- episode-loop protocol -------------------------------------------------

    def _fresh_state(self) -> SystemState:
        return SystemState(x=self.config.dynamics.init_x, pools=(0.0, 0.0))

    def _fresh_spectra(self) -> SpectraProcess:
        return SpectraProcess(
            levels=self.config.spectra_levels,
            stay_prob=self.config.spectra_stay,
            drop_ratio=self.config.spectra_drop,
        )

    def start_episode(self, rng: RngStream) -> tuple[SystemState, GlucoseEpisode]:
        meals_rng = rng.child("meals")
        meals: dict[int, float] = {}
        for day in range(self.config.days):
            for meal in build_scenario(self.config.scenario, meals_rng):
                step = day * STEPS_PER_DAY + meal.step
                meals[step] = meals.get(step, 0.0) + meal.grams
        ctx = GlucoseEpisode(
            dynamics_rng=rng.child("dynamics"),
            spectra_rng=rng.child("spectra"),
            sensor_rng=rng.child("sensor"),
            spectra=self._fresh_spectra(),
            meals=meals,
        )
        self.last_episode = ctx
        return self._fresh_state(), ctx

    def step(
        self,
        ctx: GlucoseEpisode,
        t: int,
        state: SystemState,
        action: InterventionAction,
    ) -> SystemState:
        if not (action.magnitude >= 0):  # also rejects NaN
            raise ValueError(f"invalid action magnitude: {action.magnitude}")
        dyn = self.config.dynamics
        if ctx.reset_pending:
            # the severe event was entered (and charged) last step; restart
            # the system now and let the day continue
            ctx.reset_pending = False
            ctx.resets += 1
            ctx.spectra.level = 0.0
            state = SystemState(
                x=dyn.init_x,
                z_long=state.z_long,
                z_fast=state.z_fast,
                level=0.0,
                pools=(0.0, 0.0),
            )
        gut, fast_activity = state.pools
        grams = ctx.meals.get(t, 0.0)
        ctx.meal_log.append(grams)
        gut += grams
        activated = action.kind is ActionKind.LONG
        if activated:
            spectra_step(ctx.spectra, True, ctx.spectra_rng)
        if action.kind is ActionKind.FAST:
            fast_activity += action.magnitude
        level_now = ctx.spectra.level if activated else state.level
        staged = replace(state, level=level_now, pools=(gut, fast_activity))
        x = step_underlying(self._process, staged, ctx.dynamics_rng)
        x = min(max(x, dyn.x_min), dyn.x_max)
        ctx.spectra.level = level_now
        next_level = spectra_step(ctx.spectra, False, ctx.spectra_rng)
        if x < dyn.hypo_threshold:
            ctx.aime_events += 1
            ctx.reset_pending = True
        return SystemState(
            x=float(x),
            z_long=state.z_long + (1.0 if activated else 0.0),
            z_fast=state.z_fast + (action.magnitude if action.kind is ActionKind.FAST else 0.0),
            level=next_level,
            pools=((1.0 - dyn.k_abs) * gut, (1.0 - dyn.k_fast_decay) * fast_activity),
        )

    def predict_step(
        self,
        ctx: GlucoseEpisode,
        t: int,
        state: SystemState,
        action: InterventionAction,
        rng: RngStream,
    ) -> SystemState:
        """Side-effect-free one-step model for look-ahead screening.

        Deliberately pessimistic about glucose dips: upcoming meals are not
        anticipated and the residual level persists instead of decaying, so
        predicted trajectories sit at or below the live ones on the hypo side.
        Glucose noise is sampled from the stream the shield hands in.
        """
        dyn = self.config.dynamics
        gut, fast_activity = state.pools
        if action.kind is ActionKind.FAST:
            fast_activity += action.magnitude
        level = 1.0 if action.kind is ActionKind.LONG else state.level
        staged = replace(state, level=level, pools=(gut, fast_activity))
        x = step_underlying(self._process, staged, rng)
        x = min(max(x, dyn.x_min), dyn.x_max)
        return SystemState(
            x=float(x),
            z_long=state.z_long,
            z_fast=state.z_fast,
            level=level,
            pools=((1.0 - dyn.k_abs) * gut, (1.0 - dyn.k_fast_decay) * fast_activity),
        )

    # -- single-agent face -------------------------------------------------

    def observe(
        self, state: SystemState, account: BudgetAccount, ctx: GlucoseEpisode
    ) -> Observation:
        sensed = state.x
        if self.config.dynamics.sensor_sigma > 0:
            sensed += self.config.dynamics.sensor_sigma * ctx.sensor_rng.normal()
        return Observation(
            glucose=float(sensed),
            level=state.level,
            budgets=budget_vector(self.constraints, state.x, account),
            carbs_on_board=state.pools[0] if self.config.carb_visibility else None,
        )


def env_reset(env: GlucoseEnv, seed: int) -> Observation:
    """(Re)start the single-agent face from a seed: fresh state, pools,
    budgets, and a newly drawn meal plan. Deterministic per seed."""
    rng = RngStream(seed).child("environment")
    state, ctx = env.start_episode(rng)
    env._agent = {
        "state": state,
        "ctx": ctx,
        "t": 0,
        "account": BudgetAccount(),
    }
    return env.observe(state, BudgetAccount(), ctx)


def env_step(
    env: GlucoseEnv, action: InterventionAction
) -> tuple[Observation, float, tuple[float, float, float, float], bool, dict]:
    """Advance the single-agent face one step.

    Returns (observation, base reward, budget vector entering the step, done,
    info). The reward at t is reshaped with the budgets as they stood at t;
    the reshaped value rides in ``info`` alongside event counters.
    """
    if env._agent is None:
        raise RuntimeError("env_step before env_reset")
    agent = env._agent
    state, ctx, t, account = agent["state"], agent["ctx"], agent["t"], agent["account"]
    budgets = budget_vector(env.constraints, state.x, account)
    next_state = env.step(ctx, t, state, action)
    next_account = account.charge(action, next_state.x, env.constraints)
    base = base_reward(env.reward_config, state.x, action)
    reshaped = reshaped_reward(env.reward_config, state.x, action, budgets)
    agent.update(state=next_state, t=t + 1, account=next_account)
    done = agent["t"] >= env.config.horizon
    info = {
        "reshaped_reward": reshaped,
        "meal_grams": ctx.meal_log[-1],
        "aime_events": ctx.aime_events,
        "resets": ctx.resets,
        "true_glucose": next_state.x,
        "t": agent["t"],
    }
    return env.observe(next_state, next_account, ctx), base, budgets, done, info


# ---------------------------------------------------------------------------
# Calibration and trajectory export
# ---------------------------------------------------------------------------


def no_insulin_tir(config: GlucoseConfig | None = None, seeds: range = range(20)) -> float:
    """Mean time-in-range of the do-nothing policy — the calibration oracle
    for the drift coefficients (target band: 25% to 55% on AGVP defaults)."""
    from .metrics import time_in_range  # local import: metrics depends on nothing here

    env = GlucoseEnv(config or GlucoseConfig())
    values = []
    for seed in seeds:
        rng = RngStream(seed).child("environment")
        state, ctx = env.start_episode(rng)
        xs = [state.x]
        for t in range(env.config.horizon):
            state = env.step(ctx, t, state, InterventionAction.noop())
            xs.append(state.x)
        values.append(time_in_range(xs))
    return float(sum(values) / len(values))


GLUCOSE_EXTRA_COLUMNS = (
    "gut_carbs",
    "fast_insulin",
    "meal_grams",
    "observed_glucose",
    "carbs_on_board",
)


def glucose_row(record, meal_grams: float, carb_visibility: bool = True) -> dict:
    """Extend a controller CSV row with the glucose-specific columns."""
    from .controller import record_to_row

    row = record_to_row(record)
    gut, fast_activity = record.state.pools
    row.update(
        gut_carbs=gut,
        fast_insulin=fast_activity,
        meal_grams=meal_grams,
        observed_glucose=record.state.x,
        carbs_on_board=gut if carb_visibility else "",
    )
    return row
