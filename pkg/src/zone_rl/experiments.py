"""Experiment harness behind the service and CLI entry points.

Four pieces live here:

* the coarse-grid tabular learner for the glucose environment (glucose in
  10 mg/dL bins crossed with insulin-on-board, budget-slack, carb, and
  long-active features), trained unshielded on short episodes and evaluated
  through the switching controller with the shield on;
* policy-bundle builders for the four experiment policy kinds
  (learned-tabular, random, fixed-schedule, degenerate-case-a);
* seeded experiment runners — single configuration, intervention-budget
  sweep, and the observation/constraint ablation — that return plain-data
  results the service and CLI layers serialise;
* the theory-validation suite (contraction, exact solve, learner
  convergence, extraction consistency) with named pass/fail checks.

Every runner is deterministic given (config, seeds): seed-level parallelism
uses one environment instance per worker and results are reduced in seed
order, so re-runs produce identical reports.
"""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Any, Callable, Sequence

import numpy as np

from .config import ExperimentConfig, TheoryConfig
from .constraints import (
    BudgetAccount,
    ConstraintSet,
    RewardConfig,
    base_reward,
    budget_vector,
    case_a_constraints,
    reshaped_reward,
)
from .controller import (
    ConstantFast,
    ConstantLong,
    PolicyBundle,
    ScheduleSwitcher,
    ShieldConfig,
    TabularFast,
    TabularSwitcher,
    TransitionRecord,
    UniformFast,
    UniformSwitcher,
    degenerate_to_case_a,
    record_to_json_dict,
    run_episode,
    x_path,
)
from .glucose import (
    MINUTES_PER_STEP,
    STEPS_PER_DAY,
    GlucoseConfig,
    GlucoseEnv,
    scenario,
)
from .metrics import AggregateRow, GlycemicSummary, aggregate, report_payload, summarise
from .processes import ActionKind, InterventionAction, NOOP, SystemState
from .rng import RngStream
from .tabular import (
    FIRST_FAST_ACTION,
    LONG_ACTION,
    NOOP_ACTION,
    LearningSchedule,
    SwitchingPolicy,
    bellman_backup,
    build_fixture_mdp,
    extract_switching_policy,
    greedy_switch_decisions,
    import_mdp_json,
    run_q_learning,
    value_iteration,
)

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Coarse observation grid
# ---------------------------------------------------------------------------

GLUCOSE_BIN_WIDTH = 10.0
GLUCOSE_BIN_LOW = 40.0
GLUCOSE_BIN_HIGH = 400.0
IOB_BUCKET_EDGES = (0.25, 1.0, 3.0)
SLACK_BUCKET_EDGES = (30.0, 60.0)
CARB_PRESENT_THRESHOLD = 0.5  # grams of gut carbs that count as "meal on board"


def _bucket(value: float, edges: tuple[float, ...]) -> int:
    return sum(value >= edge for edge in edges)


@dataclass(frozen=True)
class ObservationGrid:
    """Coarsened observation index for the tabular glucose learner.

    Features: glucose in 10 mg/dL bins, an insulin-on-board bucket, a budget
    slack bucket (the smaller of the two spending slacks, recovered from the
    cumulative accumulators that mirror the budget account), a carbs-on-board
    bit, and a long-effect-active bit. Everything is read off the system
    state itself, so the same index function serves training, the switching
    policy, and the fast-magnitude policy.
    """

    slack_anchor: float  # common offset of the spending slacks (zone target / 2)
    use_budget: bool = True
    use_carbs: bool = True

    @property
    def n_glucose_bins(self) -> int:
        return int((GLUCOSE_BIN_HIGH - GLUCOSE_BIN_LOW) // GLUCOSE_BIN_WIDTH)

    @property
    def n_slack_buckets(self) -> int:
        return len(SLACK_BUCKET_EDGES) + 1 if self.use_budget else 1

    @property
    def n_states(self) -> int:
        iob = len(IOB_BUCKET_EDGES) + 1
        carb = 2 if self.use_carbs else 1
        return self.n_glucose_bins * iob * self.n_slack_buckets * carb * 2

    def index(self, state: SystemState) -> int:
        raw_bin = (state.x - GLUCOSE_BIN_LOW) // GLUCOSE_BIN_WIDTH
        glucose = min(self.n_glucose_bins - 1, max(0, int(raw_bin)))
        iob = _bucket(state.pools[1] if len(state.pools) > 1 else 0.0, IOB_BUCKET_EDGES)
        index = glucose * (len(IOB_BUCKET_EDGES) + 1) + iob
        if self.use_budget:
            slack = state.x - self.slack_anchor - max(state.z_long, state.z_fast)
            index = index * self.n_slack_buckets + _bucket(slack, SLACK_BUCKET_EDGES)
        if self.use_carbs:
            carbs = state.pools[0] if state.pools else 0.0
            index = index * 2 + (1 if carbs > CARB_PRESENT_THRESHOLD else 0)
        return index * 2 + (1 if state.long_active else 0)


# ---------------------------------------------------------------------------
# Tabular glucose learner
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LearnerSettings:
    """Training-run shape for the coarse-grid glucose learner."""

    episodes: int = 300
    discount: float = 0.98
    step_offset: float = 1.0
    step_exponent: float = 0.6
    epsilon_start: float = 0.5
    epsilon_end: float = 0.05
    constrained: bool = True  # learn on budget-reshaped rewards

    def epsilon(self, episode: int) -> float:
        if self.episodes <= 1:
            return self.epsilon_end
        frac = episode / (self.episodes - 1)
        return self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac


def _learner_action(index: int, magnitudes: tuple[float, ...]) -> InterventionAction:
    if index == NOOP_ACTION:
        return NOOP
    if index == LONG_ACTION:
        return InterventionAction.long_activation()
    return InterventionAction.fast(magnitudes[index - FIRST_FAST_ACTION])


def policy_from_table(q: np.ndarray) -> SwitchingPolicy:
    """Greedy modality regions from a learned table, preferring no
    intervention on exact ties so that never-visited rows (still at their
    zero initialisation) stay inert."""
    q = np.asarray(q, dtype=float)
    continuation = q[:, NOOP_ACTION].copy()
    operator_long = q[:, LONG_ACTION].copy()
    fast_block = q[:, FIRST_FAST_ACTION:]
    operator_fast = fast_block.max(axis=1)
    fast_choice = fast_block.argmax(axis=1) + FIRST_FAST_ACTION
    decisions: list[ActionKind] = []
    for y in range(q.shape[0]):
        w = continuation[y]
        if operator_long[y] > w and operator_long[y] >= operator_fast[y]:
            decisions.append(ActionKind.LONG)
        elif operator_fast[y] > w:
            decisions.append(ActionKind.FAST)
        else:
            decisions.append(ActionKind.NOOP)
    return SwitchingPolicy(decisions, fast_choice, operator_long, operator_fast, continuation)


def train_glucose_policy(
    env_config: GlucoseConfig,
    grid: ObservationGrid,
    magnitudes: tuple[float, ...],
    settings: LearnerSettings,
    seed: int,
) -> SwitchingPolicy:
    """Epsilon-greedy tabular learning on the coarse grid, unshielded.

    The loop mirrors the switching controller's action availability: while a
    long effect is active the only admissible decision is to wait, so both
    the behaviour action and the bootstrap target are restricted to the
    no-intervention column at long-active states. Rewards follow the
    controller's convention (current glucose, budgets entering the step),
    reshaped by the budget penalty when ``settings.constrained``.
    """
    env = GlucoseEnv(env_config)
    n_actions = FIRST_FAST_ACTION + len(magnitudes)
    q = np.zeros((grid.n_states, n_actions))
    visits = np.zeros((grid.n_states, n_actions))
    base = RngStream(seed).child("glucose-train")
    for episode in range(settings.episodes):
        episode_rng = base.child(f"episode-{episode}")
        policy_rng = episode_rng.child("policy")
        state, ctx = env.start_episode(episode_rng.child("environment"))
        account = BudgetAccount()
        epsilon = settings.epsilon(episode)
        for t in range(env_config.horizon):
            budgets = budget_vector(env.constraints, state.x, account)
            s_index = grid.index(state)
            if state.long_active:
                a_index = NOOP_ACTION
            elif policy_rng.random() < epsilon:
                a_index = int(policy_rng.integers(0, n_actions))
            else:
                a_index = int(q[s_index].argmax())
            action = _learner_action(a_index, magnitudes)
            next_state = env.step(ctx, t, state, action)
            account = account.charge(action, next_state.x, env.constraints)
            if settings.constrained:
                reward = reshaped_reward(env.reward_config, state.x, action, budgets)
            else:
                reward = base_reward(env.reward_config, state.x, action)
            ns_index = grid.index(next_state)
            if next_state.long_active:
                bootstrap = q[ns_index, NOOP_ACTION]
            else:
                bootstrap = q[ns_index].max()
            visits[s_index, a_index] += 1.0
            step_size = 1.0 / (settings.step_offset + visits[s_index, a_index]) ** settings.step_exponent
            q[s_index, a_index] += step_size * (
                reward + settings.discount * bootstrap - q[s_index, a_index]
            )
            state = next_state
    return policy_from_table(q)


# ---------------------------------------------------------------------------
# Config plumbing: experiment config -> environment / shield / bundles
# ---------------------------------------------------------------------------


def experiment_constraints(
    config: ExperimentConfig,
    max_interventions: float | None = None,
    scale: float = 1.0,
) -> ConstraintSet:
    cap = config.max_interventions if max_interventions is None else max_interventions
    return ConstraintSet(
        max_interventions=cap * scale,
        max_violations=config.max_violations * scale,
    )


def experiment_rewards(config: ExperimentConfig) -> RewardConfig:
    return RewardConfig(
        alpha=config.activation_cost,
        beta=config.impulse_weight,
        delta=config.violation_penalty,
    )


def eval_env_config(
    config: ExperimentConfig,
    *,
    max_interventions: float | None = None,
    carb_visibility: bool | None = None,
) -> GlucoseConfig:
    return GlucoseConfig(
        scenario=config.scenario,
        days=config.days,
        constraints=experiment_constraints(config, max_interventions),
        rewards=experiment_rewards(config),
        carb_visibility=config.carb_visibility if carb_visibility is None else carb_visibility,
    )


def train_env_config(config: ExperimentConfig, *, carb_visibility: bool | None = None) -> GlucoseConfig:
    """One-day training episodes with budget caps scaled down to match, so a
    day of training spends the same budget fraction as a day of evaluation."""
    scale = 1.0 / config.days
    return GlucoseConfig(
        scenario=config.scenario,
        days=1,
        constraints=experiment_constraints(config, scale=scale),
        rewards=experiment_rewards(config),
        carb_visibility=config.carb_visibility if carb_visibility is None else carb_visibility,
    )


def shield_from_config(config: ExperimentConfig, enabled: bool | None = None) -> ShieldConfig:
    return ShieldConfig(
        horizon=config.shield_horizon,
        samples=config.shield_samples,
        margin=config.shield_margin,
        enabled=config.shield_enabled if enabled is None else enabled,
    )


def observation_grid(config: ExperimentConfig, *, use_budget: bool = True, use_carbs: bool | None = None) -> ObservationGrid:
    constraints = experiment_constraints(config)
    return ObservationGrid(
        slack_anchor=constraints.target / 2.0,
        use_budget=use_budget,
        use_carbs=config.carb_visibility if use_carbs is None else use_carbs,
    )


def learner_settings(config: ExperimentConfig, *, constrained: bool = True) -> LearnerSettings:
    return LearnerSettings(
        episodes=config.train_episodes,
        discount=config.discount,
        constrained=constrained,
    )


def learned_bundle(
    policy: SwitchingPolicy, grid: ObservationGrid, magnitudes: tuple[float, ...]
) -> PolicyBundle:
    return PolicyBundle(
        fast_policy=TabularFast(policy, grid.index, magnitudes),
        long_policy=ConstantLong(1),
        switcher=TabularSwitcher(policy, grid.index),
        fast_magnitudes=magnitudes,
    )


def random_bundle(magnitudes: tuple[float, ...]) -> PolicyBundle:
    return PolicyBundle(
        fast_policy=UniformFast(magnitudes),
        long_policy=ConstantLong(1),
        switcher=UniformSwitcher(),
        fast_magnitudes=magnitudes,
    )


def fixed_schedule_bundle(config: ExperimentConfig) -> PolicyBundle:
    """Clock-driven baseline: one activation each morning, one fixed impulse
    half an hour after every scheduled main meal of the scenario."""
    events = scenario(config.scenario).events
    main_steps = [
        round(event.clock_minutes / MINUTES_PER_STEP)
        for event in events
        if event.probability >= 0.5
    ]
    fast_times = frozenset(
        day * STEPS_PER_DAY + step + 6 for day in range(config.days) for step in main_steps
    )
    long_times = frozenset(day * STEPS_PER_DAY + 60 for day in range(config.days))
    magnitude = config.fast_magnitudes[len(config.fast_magnitudes) // 2]
    return PolicyBundle(
        fast_policy=ConstantFast(magnitude),
        long_policy=ConstantLong(1),
        switcher=ScheduleSwitcher(long_times=long_times, fast_times=fast_times),
        fast_magnitudes=config.fast_magnitudes,
    )


def prepare_policy(config: ExperimentConfig) -> tuple[PolicyBundle, GlucoseConfig]:
    """Build (bundle, evaluation env config) for the configured policy kind.
    The learned kind trains its table here, deterministically from
    ``config.train_seed``."""
    env_config = eval_env_config(config)
    if config.policy == "learned-tabular":
        grid = observation_grid(config)
        policy = train_glucose_policy(
            train_env_config(config),
            grid,
            config.fast_magnitudes,
            learner_settings(config),
            config.train_seed,
        )
        return learned_bundle(policy, grid, config.fast_magnitudes), env_config
    if config.policy == "random":
        return random_bundle(config.fast_magnitudes), env_config
    if config.policy == "fixed-schedule":
        return fixed_schedule_bundle(config), env_config
    if config.policy == "degenerate-case-a":
        bundle = degenerate_to_case_a(random_bundle(config.fast_magnitudes))
        constraints = case_a_constraints(env_config.constraints)
        return bundle, replace(env_config, constraints=constraints)
    raise ValueError(f"unknown policy kind {config.policy!r}")


# ---------------------------------------------------------------------------
# Seeded evaluation
# ---------------------------------------------------------------------------


@dataclass
class SeedRun:
    """One seed's evaluation: concatenated trajectory metrics, the raw
    transition records, and the realised meal schedule per episode."""

    seed: int
    summary: GlycemicSummary
    records: list[TransitionRecord]
    budget_negative_steps: int
    meals: list[list[tuple[int, float]]]
    glucose_path: list[float]

    def payload(self, include_log: bool = True) -> dict[str, Any]:
        data: dict[str, Any] = {
            "seed": self.seed,
            "tir": self.summary.tir,
            "tar": self.summary.tar,
            "tbr": self.summary.tbr,
            "mean_glucose": self.summary.mean_glucose,
            "aime": self.summary.aime,
            "budget_negative_steps": self.budget_negative_steps,
            "meals": [[[step, grams] for step, grams in episode] for episode in self.meals],
            "x": self.glucose_path,
        }
        if include_log:
            data["log"] = [record_to_json_dict(record) for record in self.records]
        return data


def run_seed(
    env_config: GlucoseConfig,
    bundle: PolicyBundle,
    shield: ShieldConfig,
    seed: int,
    episodes: int = 1,
) -> SeedRun:
    """Evaluate one seed: ``episodes`` independent episodes whose glucose
    paths are concatenated for the time-fraction metrics. A fresh environment
    instance keeps seed workers independent under thread parallelism."""
    env = GlucoseEnv(env_config)
    records: list[TransitionRecord] = []
    meals: list[list[tuple[int, float]]] = []
    values: list[float] = []
    negative = 0
    for episode in range(episodes):
        episode_rng = RngStream(seed).child(f"episode-{episode}")
        episode_records = run_episode(env, bundle, shield, env_config.horizon, episode_rng)
        records.extend(episode_records)
        values.extend(x_path(episode_records))
        negative += sum(1 for r in episode_records if any(b < 0 for b in r.budgets))
        meals.append(sorted(env.last_episode.meals.items()))
    summary = summarise(values, STEPS_PER_DAY, seed=seed)
    summary = dataclasses.replace(summary, episodes=episodes)
    return SeedRun(seed, summary, records, negative, meals, values)


def _map_seeds(worker: Callable[[int], SeedRun], seeds: Sequence[int], parallel: int) -> list[SeedRun]:
    if parallel <= 1 or len(seeds) <= 1:
        return [worker(seed) for seed in seeds]
    with ThreadPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(worker, seeds))


@dataclass
class ExperimentGroup:
    """One aggregate row and the seed runs behind it."""

    label: str
    row: AggregateRow
    seed_runs: list[SeedRun]

    @property
    def budget_negative_steps(self) -> int:
        return sum(run.budget_negative_steps for run in self.seed_runs)

    def payload(self, include_logs: bool = True) -> dict[str, Any]:
        return {
            "label": self.label,
            "budget_negative_steps": self.budget_negative_steps,
            "seeds": [run.payload(include_logs) for run in self.seed_runs],
        }


@dataclass
class ExperimentResult:
    """Plain-data result of one experiment command."""

    kind: str
    groups: list[ExperimentGroup]

    @property
    def rows(self) -> list[AggregateRow]:
        return [group.row for group in self.groups]

    def payload(self, include_logs: bool = True) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "report": report_payload(self.rows),
            "groups": [group.payload(include_logs) for group in self.groups],
        }


def _evaluate_group(
    label: str,
    task: str,
    model: str,
    env_config: GlucoseConfig,
    bundle: PolicyBundle,
    shield: ShieldConfig,
    config: ExperimentConfig,
) -> ExperimentGroup:
    def worker(seed: int) -> SeedRun:
        return run_seed(env_config, bundle, shield, seed, config.episodes_per_seed)

    seed_runs = _map_seeds(worker, config.seeds, config.parallel)
    row = aggregate([run.summary for run in seed_runs], task=task, model=model)
    group = ExperimentGroup(label, row, seed_runs)
    if group.budget_negative_steps and not shield.enabled:
        logger.warning(
            "group %r ran unshielded and logged %d budget-negative steps",
            label,
            group.budget_negative_steps,
        )
    return group


def run_glucose_experiment(config: ExperimentConfig) -> ExperimentResult:
    """One scenario/policy configuration across the configured seeds."""
    bundle, env_config = prepare_policy(config)
    shield = shield_from_config(config)
    group = _evaluate_group(
        label=f"glucose-{config.scenario}",
        task=f"glucose-{config.scenario}",
        model=config.policy,
        env_config=env_config,
        bundle=bundle,
        shield=shield,
        config=config,
    )
    return ExperimentResult("run-glucose", [group])


def run_budget_sweep(
    config: ExperimentConfig, budgets: Sequence[float] | None = None
) -> ExperimentResult:
    """Evaluate one policy across ascending intervention budgets.

    The learned policy is trained once at the configured budget and then
    evaluated under each swept cap, so the rows isolate the budget's effect
    on the same controller. Repeated budget entries reproduce identical rows.
    """
    swept = tuple(config.sweep_budgets if budgets is None else budgets)
    if not swept:
        raise ValueError("budget sweep needs at least one budget")
    if list(swept) != sorted(swept):
        raise ValueError("budgets must be sorted ascending")
    bundle, _ = prepare_policy(config)
    shield = shield_from_config(config)
    groups = []
    for budget in swept:
        env_config = eval_env_config(config, max_interventions=budget)
        if config.policy == "degenerate-case-a":
            env_config = replace(
                env_config, constraints=case_a_constraints(env_config.constraints)
            )
        groups.append(
            _evaluate_group(
                label=f"budget-{budget:g}",
                task=f"budget-{budget:g}",
                model=config.policy,
                env_config=env_config,
                bundle=bundle,
                shield=shield,
                config=config,
            )
        )
    return ExperimentResult("sweep-budget", groups)


ABLATION_SETTINGS: tuple[tuple[str, bool, bool], ...] = (
    ("no-carbs-no-constraints", False, False),
    ("constraints-only", False, True),
    ("carbs-and-constraints", True, True),
)


def run_ablation(config: ExperimentConfig) -> ExperimentResult:
    """Three learned-policy settings sharing evaluation seeds.

    Axes: whether the learner's grid sees carbs on board, and whether the
    constraint machinery is active (budget-reshaped training rewards plus
    the shield at evaluation). The constraint-free setting may log
    budget-negative steps; that is flagged, not an error.
    """
    groups = []
    for label, use_carbs, constrained in ABLATION_SETTINGS:
        grid = observation_grid(config, use_budget=constrained, use_carbs=use_carbs)
        policy = train_glucose_policy(
            train_env_config(config, carb_visibility=use_carbs),
            grid,
            config.fast_magnitudes,
            learner_settings(config, constrained=constrained),
            config.train_seed,
        )
        bundle = learned_bundle(policy, grid, config.fast_magnitudes)
        env_config = eval_env_config(config, carb_visibility=use_carbs)
        shield = shield_from_config(config, enabled=constrained and config.shield_enabled)
        groups.append(
            _evaluate_group(
                label=label,
                task=f"ablation-{config.scenario}",
                model=label,
                env_config=env_config,
                bundle=bundle,
                shield=shield,
                config=config,
            )
        )
    return ExperimentResult("ablation", groups)


# ---------------------------------------------------------------------------
# Theory validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TheoryCheck:
    name: str
    passed: bool
    residual: float | None
    threshold: float | None
    detail: str

    def payload(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "passed": self.passed,
            "residual": self.residual,
            "threshold": self.threshold,
            "detail": self.detail,
        }


@dataclass
class TheoryResult:
    checks: list[TheoryCheck]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failures(self) -> list[str]:
        return [check.name for check in self.checks if not check.passed]

    def payload(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "failures": self.failures,
            "checks": [check.payload() for check in self.checks],
        }


def _contraction_check(name: str, mdp, pairs: int, rng: RngStream) -> TheoryCheck:
    """Empirical sup-norm contraction ratio of the exact backup over random
    value-vector pairs; must not exceed the discount."""
    scale = mdp.delta / max(1.0 - mdp.gamma, 1e-6)
    worst = 0.0
    for _ in range(pairs):
        u = np.array([rng.uniform(-scale, scale) for _ in range(mdp.n_states)])
        v = np.array([rng.uniform(-scale, scale) for _ in range(mdp.n_states)])
        gap = float(np.abs(u - v).max())
        if gap == 0.0:
            continue
        backed = float(np.abs(bellman_backup(u, mdp) - bellman_backup(v, mdp)).max())
        worst = max(worst, backed / gap)
    residual = worst - mdp.gamma
    return TheoryCheck(
        name=name,
        passed=residual <= 1e-12,
        residual=residual,
        threshold=0.0,
        detail=f"worst ratio {worst:.12f} over {pairs} pairs (bound {mdp.gamma})",
    )


def run_validate_theory(config: TheoryConfig) -> TheoryResult:
    """Contraction, exact-solve residuals, extraction consistency, and
    learner convergence on the built-in fixtures, each as a named check."""
    checks: list[TheoryCheck] = []
    sample_rng = RngStream(config.sample_seed).child("contraction-pairs")
    for fixture in config.fixtures:
        mdp = build_fixture_mdp(fixture)
        checks.append(
            _contraction_check(
                f"contraction-{fixture}", mdp, config.contraction_pairs, sample_rng.child(fixture)
            )
        )
        if config.contraction_discount is not None:
            overridden = dataclasses.replace(mdp, gamma=config.contraction_discount)
            checks.append(
                _contraction_check(
                    f"contraction-{fixture}-discount-{config.contraction_discount:g}",
                    overridden,
                    config.contraction_pairs,
                    sample_rng.child(f"{fixture}-override"),
                )
            )
        vi = value_iteration(mdp)
        checks.append(
            TheoryCheck(
                name=f"value-iteration-{fixture}",
                passed=vi.residual < 1e-9,
                residual=vi.residual,
                threshold=1e-9,
                detail=f"{vi.iterations} sweeps, exact-backup residual {vi.residual:.3e}",
            )
        )
        extracted = extract_switching_policy(vi.q_greedy, mdp)
        greedy = greedy_switch_decisions(vi.q_greedy, mdp)
        matches = sum(a is b for a, b in zip(extracted.decisions, greedy))
        checks.append(
            TheoryCheck(
                name=f"policy-extraction-{fixture}",
                passed=matches == mdp.n_states,
                residual=float(mdp.n_states - matches),
                threshold=0.0,
                detail=f"{matches}/{mdp.n_states} states agree with the greedy classification",
            )
        )
    learner_mdp = build_fixture_mdp(config.qlearning_fixture)
    reference = value_iteration(learner_mdp).q_fixed_point
    schedule = LearningSchedule()
    errors: list[float] = []
    updates: list[int] = []
    for seed in config.qlearning_seeds:
        outcome = run_q_learning(learner_mdp, schedule, RngStream(seed), reference=reference)
        errors.append(float(outcome.final_error))
        updates.append(outcome.updates)
    checks.append(
        TheoryCheck(
            name=f"q-learning-{config.qlearning_fixture}",
            passed=max(errors) < schedule.tolerance,
            residual=max(errors),
            threshold=schedule.tolerance,
            detail=(
                f"sup-norm errors {['%.3e' % e for e in errors]} after "
                f"{updates} updates across seeds {list(config.qlearning_seeds)}"
            ),
        )
    )
    if config.mdp_json is not None:
        try:
            external = import_mdp_json(config.mdp_json)
        except (OSError, ValueError, KeyError) as exc:
            checks.append(
                TheoryCheck(
                    name="mdp-construction",
                    passed=False,
                    residual=None,
                    threshold=None,
                    detail=f"{config.mdp_json}: {exc}",
                )
            )
        else:
            checks.append(
                TheoryCheck(
                    name="mdp-construction",
                    passed=True,
                    residual=None,
                    threshold=None,
                    detail=(
                        f"{config.mdp_json}: {external.n_states} states, "
                        f"{external.n_actions} actions, tables valid"
                    ),
                )
            )
    return TheoryResult(checks)
