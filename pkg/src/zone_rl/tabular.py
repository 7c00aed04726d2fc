"""Exact solvers and tabular learning on a finite target-zone MDP.

The state space is a finite grid (controlled-level values × residual-level
values × discretised budget components); the action set is
[NoOp, Long, Fast(h) for h in fast_magnitudes]. Budget-negative states are
penalty states: every action from them pays -delta and the budget component
stays negative, so the penalty slice is absorbing.

Three related objects live here:

* the one-step branch machinery — intervention operators (branch value of
  acting now, continuing from the no-intervention column) and the Bellman
  backup (best of the long / no-op / fast branches), which is a
  gamma-contraction;
* ``value_iteration`` — the exact oracle; returns the value function, the
  greedy Q-table (R + gamma·P·v*), and the fixed point of the tabular update
  below, which differs from the greedy table at off-policy pairs;
* ``q_update`` / ``run_q_learning`` — the tabular update whose target is the
  best of: the intervention operators evaluated at the *current* state on the
  current table, and the no-op reward plus the discounted no-op value at the
  *sampled* successor. Only the visited pair is updated.

``extract_switching_policy`` classifies each state by comparing the operator
values against the no-intervention column (Long wherever the long operator
ties or beats it; Fast wherever only the fast operator does; NoOp otherwise).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .processes import ActionKind
from .rng import RngStream

# Action layout shared by every DiscreteTargetMDP.
NOOP_ACTION = 0
LONG_ACTION = 1
FIRST_FAST_ACTION = 2

MAX_STATES = 100_000


class MdpTransition(NamedTuple):
    """One sampled step: (state, action, reward, next_state) indices/values."""

    state: int
    action: int
    reward: float
    next_state: int


@dataclass
class DiscreteTargetMDP:
    """Finite MDP with exact transition and (penalty-reshaped) reward tables.

    ``rewards`` is already reshaped: rows of budget-negative states are
    -delta for every action. Metadata arrays (x_values / levels /
    budget_components) describe each state for policy extraction, shielding,
    and export; the optional grids are present on the built-in fixtures and
    enable index lookup by (x, level, budget).
    """

    transitions: np.ndarray  # (S, A, S)
    rewards: np.ndarray  # (S, A)
    gamma: float
    delta: float
    fast_magnitudes: tuple[float, ...]
    x_values: np.ndarray  # (S,)
    levels: np.ndarray  # (S,)
    budget_components: np.ndarray  # (S, J)
    target: float = 0.0
    x_grid: tuple[float, ...] | None = None
    level_grid: tuple[float, ...] | None = None
    budget_grid: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        self.transitions = np.asarray(self.transitions, dtype=float)
        self.rewards = np.asarray(self.rewards, dtype=float)
        s, a, s2 = self.transitions.shape
        if s != s2 or self.rewards.shape != (s, a):
            raise ValueError(
                f"shape mismatch: transitions {self.transitions.shape}, rewards {self.rewards.shape}"
            )
        if s > MAX_STATES:
            raise ValueError(f"state count {s} exceeds oracle tractability bound {MAX_STATES}")
        if a != FIRST_FAST_ACTION + len(self.fast_magnitudes):
            raise ValueError(
                f"action count {a} inconsistent with fast magnitudes {self.fast_magnitudes}"
            )
        if not (0.0 <= self.gamma < 1.0):
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        if self.delta <= 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if not np.all(np.isfinite(self.rewards)):
            raise ValueError("rewards must be finite")
        row_sums = self.transitions.sum(axis=2)
        worst = float(np.abs(row_sums - 1.0).max())
        if worst > 1e-12:
            raise ValueError(f"transition rows must sum to 1 (worst deviation {worst:.3e})")
        if np.any(self.transitions < 0):
            raise ValueError("transition probabilities must be >= 0")
        self.x_values = np.asarray(self.x_values, dtype=float)
        self.levels = np.asarray(self.levels, dtype=float)
        self.budget_components = np.atleast_2d(np.asarray(self.budget_components, dtype=float))
        if self.budget_components.shape[0] != s:
            self.budget_components = self.budget_components.reshape(s, -1)

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]

    @property
    def fast_actions(self) -> range:
        return range(FIRST_FAST_ACTION, self.n_actions)

    @property
    def budget_negative(self) -> np.ndarray:
        """Boolean mask of penalty (budget-violated) states."""
        return (self.budget_components < 0).any(axis=1)

    def action_kind(self, action: int) -> ActionKind:
        if action == NOOP_ACTION:
            return ActionKind.NOOP
        if action == LONG_ACTION:
            return ActionKind.LONG
        return ActionKind.FAST

    def state_index(self, x: float, level: float, budget: float) -> int:
        """Index lookup on gridded fixtures (exact grid values expected)."""
        if self.x_grid is None or self.level_grid is None or self.budget_grid is None:
            raise ValueError("this MDP carries no state grids")
        ix = self.x_grid.index(x)
        il = self.level_grid.index(level)
        ib = self.budget_grid.index(budget)
        return (ix * len(self.level_grid) + il) * len(self.budget_grid) + ib


def sample_transition(
    mdp: DiscreteTargetMDP, state: int, action: int, rng: RngStream
) -> MdpTransition:
    """Draw one successor from P(·|state, action)."""
    next_state = rng.choice_index(mdp.transitions[state, action])
    return MdpTransition(state, action, float(mdp.rewards[state, action]), next_state)


@dataclass
class QTable:
    """Dense (state, action) value table with per-pair visit counts.

    Column 0 (NoOp) is the continuation branch: the value of not intervening
    now. Columns [1] and [2:] are the long-activation and fast-impulse views.
    """

    values: np.ndarray
    visits: np.ndarray

    @classmethod
    def zeros(cls, mdp: DiscreteTargetMDP) -> "QTable":
        shape = (mdp.n_states, mdp.n_actions)
        return cls(np.zeros(shape), np.zeros(shape, dtype=np.int64))

    @property
    def noop_values(self) -> np.ndarray:
        return self.values[:, NOOP_ACTION]

    @property
    def long_values(self) -> np.ndarray:
        return self.values[:, LONG_ACTION]

    @property
    def fast_values(self) -> np.ndarray:
        return self.values[:, FIRST_FAST_ACTION:]


@dataclass(frozen=True)
class LearningSchedule:
    """Robbins–Monro step sizes and exploration for the tabular learner.

    Per-pair step size 1/(offset + visits)^exponent with exponent in (0.5, 1];
    time-indexed exploration epsilon(t) = max(floor, 1/(1 + t/decay_steps)).
    """

    step_exponent: float = 0.7
    step_offset: float = 1.0
    epsilon_floor: float = 0.05
    epsilon_decay_steps: float = 1.0e4
    max_updates: int = 1_000_000
    tolerance: float = 1.0e-2

    def __post_init__(self) -> None:
        if not (0.5 < self.step_exponent <= 1.0):
            raise ValueError(
                f"step exponent must lie in (0.5, 1] for square-summability, got {self.step_exponent}"
            )
        if self.step_offset <= 0 or self.max_updates <= 0:
            raise ValueError("step_offset and max_updates must be positive")

    def step_size(self, prior_visits: int) -> float:
        return 1.0 / (self.step_offset + prior_visits) ** self.step_exponent

    def epsilon(self, t: int) -> float:
        return max(self.epsilon_floor, 1.0 / (1.0 + t / self.epsilon_decay_steps))


# ---------------------------------------------------------------------------
# Branch values and operators
# ---------------------------------------------------------------------------


def _continuation(q: QTable | np.ndarray) -> np.ndarray:
    """No-intervention column of a Q-table (or a raw (S,A) array)."""
    values = q.values if isinstance(q, QTable) else np.asarray(q, dtype=float)
    if values.ndim != 2:
        raise ValueError(f"expected a (states, actions) table, got shape {values.shape}")
    return values[:, NOOP_ACTION]


def branch_values(mdp: DiscreteTargetMDP, continuation: np.ndarray) -> np.ndarray:
    """(S, A) one-step branch values R + gamma · P · continuation."""
    return mdp.rewards + mdp.gamma * (mdp.transitions @ continuation)


def intervention_operator_long(
    q: QTable | np.ndarray,
    mdp: DiscreteTargetMDP,
    state: int,
    mode: str = "greedy",
    policy_weights: Sequence[float] | None = None,
) -> float:
    """Value of activating the long modality now and continuing without
    further intervention: R(state, Long) + gamma · Σ P(y'|state, Long) · Q(y', NoOp).

    The activation magnitude set is a singleton, so greedy and fixed-policy
    modes coincide; the mode argument keeps the operator signature symmetric
    with its fast counterpart.
    """
    w = _continuation(q)
    value = mdp.rewards[state, LONG_ACTION] + mdp.gamma * float(
        mdp.transitions[state, LONG_ACTION] @ w
    )
    if mode not in ("greedy", "fixed-policy"):
        raise ValueError(f"unknown operator mode {mode!r}")
    return float(value)


def intervention_operator_fast(
    q: QTable | np.ndarray,
    mdp: DiscreteTargetMDP,
    state: int,
    mode: str = "greedy",
    policy_weights: Sequence[float] | None = None,
) -> float:
    """Value of applying a fast impulse now: in greedy mode the best
    magnitude, max_h [R(state, Fast(h)) + gamma · Σ P(y'|state, h) · Q(y', NoOp)];
    in fixed-policy mode the expectation under ``policy_weights`` over
    ``mdp.fast_magnitudes``."""
    w = _continuation(q)
    fast = list(mdp.fast_actions)
    values = np.array(
        [mdp.rewards[state, a] + mdp.gamma * float(mdp.transitions[state, a] @ w) for a in fast]
    )
    if mode == "greedy":
        return float(values.max())
    if mode == "fixed-policy":
        if policy_weights is None or len(policy_weights) != len(fast):
            raise ValueError("fixed-policy mode needs one weight per fast magnitude")
        weights = np.asarray(policy_weights, dtype=float)
        if abs(weights.sum() - 1.0) > 1e-9 or np.any(weights < 0):
            raise ValueError("policy weights must be a probability vector")
        return float(weights @ values)
    raise ValueError(f"unknown operator mode {mode!r}")


def bellman_backup(values: np.ndarray, mdp: DiscreteTargetMDP) -> np.ndarray:
    """One exact backup: per state, the best of the long branch, the no-op
    branch, and the best fast branch, all continuing into ``values``. Equals
    the row-max of branch_values and is a gamma-contraction in sup norm."""
    return branch_values(mdp, np.asarray(values, dtype=float)).max(axis=1)


# ---------------------------------------------------------------------------
# Exact solution
# ---------------------------------------------------------------------------


@dataclass
class ValueIterationResult:
    values: np.ndarray  # v*
    q_greedy: np.ndarray  # R + gamma·P·v*
    q_fixed_point: np.ndarray  # fixed point of the tabular update's target
    iterations: int
    residual: float  # ‖T v − v‖∞ of the returned values
    change_history: list[float] = field(default_factory=list)


def value_iteration(
    mdp: DiscreteTargetMDP, tol: float = 1e-9, max_iterations: int = 200_000
) -> ValueIterationResult:
    """Iterate the backup from v ≡ 0 until the sup-norm change drops below
    tol·(1−gamma)/gamma, which bounds ‖v − v*‖∞ by tol. Emits the greedy
    Q-table and the learner's fixed-point table (see q_update)."""
    if tol <= 0:
        raise ValueError(f"tol must be > 0, got {tol}")
    threshold = tol * (1.0 - mdp.gamma) / mdp.gamma if mdp.gamma > 0 else np.inf
    v = np.zeros(mdp.n_states)
    history: list[float] = []
    for iteration in range(1, max_iterations + 1):
        v_next = bellman_backup(v, mdp)
        change = float(np.abs(v_next - v).max())
        history.append(change)
        v = v_next
        if change < threshold:
            break
    else:
        raise RuntimeError(
            f"value iteration did not converge: residual {history[-1]:.3e} after {max_iterations} iterations"
        )
    residual = float(np.abs(bellman_backup(v, mdp) - v).max())
    q_greedy = branch_values(mdp, v)
    q_fixed_point = _update_fixed_point(mdp, q_greedy, threshold, max_iterations)
    return ValueIterationResult(v, q_greedy, q_fixed_point, iteration, residual, history)


def _update_target_matrix(mdp: DiscreteTargetMDP, table: np.ndarray) -> np.ndarray:
    """(S, S') matrix of update targets: entry (y, y') is the target value
    when y' is the sampled successor — max of the two intervention operators
    at y and the no-op branch R(y, NoOp) + gamma·w(y')."""
    w = table[:, NOOP_ACTION]
    branches = branch_values(mdp, w)
    op_long = branches[:, LONG_ACTION]
    op_fast = branches[:, FIRST_FAST_ACTION:].max(axis=1)
    op_best = np.maximum(op_long, op_fast)
    noop_branch = mdp.rewards[:, [NOOP_ACTION]] + mdp.gamma * w[None, :]
    return np.maximum(op_best[:, None], noop_branch)


def _update_fixed_point(
    mdp: DiscreteTargetMDP, q_init: np.ndarray, threshold: float, max_iterations: int
) -> np.ndarray:
    """Fixed point of Q(y,a) = Σ_y' P(y'|y,a)·target(y, y') — the table the
    stochastic update converges to. The map is a gamma-contraction (the
    operator branches carry gamma through P, the no-op branch through gamma·w)."""
    q = np.array(q_init, dtype=float)
    for _ in range(max_iterations):
        targets = _update_target_matrix(mdp, q)
        q_next = np.einsum("yas,ys->ya", mdp.transitions, targets)
        change = float(np.abs(q_next - q).max())
        q = q_next
        if change < threshold:
            return q
    raise RuntimeError(
        f"fixed-point iteration did not converge (last change {change:.3e})"
    )


# ---------------------------------------------------------------------------
# Tabular learning
# ---------------------------------------------------------------------------


def q_update(
    q: QTable,
    transition: MdpTransition,
    mdp: DiscreteTargetMDP,
    schedule: LearningSchedule,
) -> QTable:
    """Apply one update to the visited pair.

    Target = max( long operator at y, R(y, NoOp) + gamma·Q(y', NoOp),
    fast operator at y ), with both operators evaluated on the current table
    (known transition probabilities) and y' the sampled successor. The sampled
    reward rides along in the transition record but the no-op branch uses the
    tabulated no-intervention reward, since the target prices the option of
    not intervening at y regardless of the action actually explored.
    """
    y, a, _, y_next = transition
    w = q.values[:, NOOP_ACTION]
    op_long = intervention_operator_long(q, mdp, y)
    op_fast = intervention_operator_fast(q, mdp, y)
    noop_branch = float(mdp.rewards[y, NOOP_ACTION]) + mdp.gamma * float(w[y_next])
    target = max(op_long, noop_branch, op_fast)
    alpha = schedule.step_size(int(q.visits[y, a]))
    q.visits[y, a] += 1
    q.values[y, a] += alpha * (target - q.values[y, a])
    return q


@dataclass
class QLearningResult:
    q: QTable
    updates: int
    final_error: float | None  # sup-norm distance to the reference, if given
    error_history: list[tuple[int, float]] = field(default_factory=list)


def run_q_learning(
    mdp: DiscreteTargetMDP,
    schedule: LearningSchedule,
    rng: RngStream,
    reference: np.ndarray | None = None,
    check_every: int = 5_000,
) -> QLearningResult:
    """Run the tabular learner with uniform (state, action) restarts.

    Penalty slices are absorbing, so on-trajectory exploration would starve
    most pairs; uniform pair sampling keeps every pair infinitely visited
    (the Robbins–Monro requirement). When a reference table is supplied the
    run stops early once the sup-norm error drops below schedule.tolerance.
    """
    q = QTable.zeros(mdp)
    n_s, n_a = mdp.n_states, mdp.n_actions
    history: list[tuple[int, float]] = []
    error: float | None = None
    updates = 0
    # Hot loop: same arithmetic as q_update with the lookups hoisted, plus
    # precomputed per-pair transition CDFs for inverse-CDF successor draws.
    values, visits = q.values, q.visits
    rewards, gamma = mdp.rewards, mdp.gamma
    p_long = mdp.transitions[:, LONG_ACTION]
    p_fast = mdp.transitions[:, FIRST_FAST_ACTION:]
    cdf = np.cumsum(mdp.transitions, axis=2)
    w = values[:, NOOP_ACTION]  # view; tracks in-place updates
    exponent, offset = schedule.step_exponent, schedule.step_offset
    for t in range(1, schedule.max_updates + 1):
        state = rng.integers(0, n_s)
        action = rng.integers(0, n_a)
        next_state = int(
            min(np.searchsorted(cdf[state, action], rng.random(), side="right"), n_s - 1)
        )
        op_long = rewards[state, LONG_ACTION] + gamma * (p_long[state] @ w)
        op_fast = (rewards[state, FIRST_FAST_ACTION:] + gamma * (p_fast[state] @ w)).max()
        noop_branch = rewards[state, NOOP_ACTION] + gamma * w[next_state]
        target = max(op_long, noop_branch, op_fast)
        alpha = 1.0 / (offset + visits[state, action]) ** exponent
        visits[state, action] += 1
        values[state, action] += alpha * (target - values[state, action])
        updates = t
        if reference is not None and t % check_every == 0:
            error = float(np.abs(values - reference).max())
            history.append((t, error))
            if error < schedule.tolerance:
                break
    if reference is not None and error is None:
        error = float(np.abs(values - reference).max())
        history.append((updates, error))
    return QLearningResult(q, updates, error, history)


# ---------------------------------------------------------------------------
# Policy extraction
# ---------------------------------------------------------------------------


@dataclass
class SwitchingPolicy:
    """Per-state modality regions plus the operator values that induced them."""

    decisions: list[ActionKind]
    fast_choice: np.ndarray  # best fast-action index per state (absolute index)
    operator_long: np.ndarray
    operator_fast: np.ndarray
    continuation: np.ndarray  # the table's no-intervention column

    def action_index(self, state: int) -> int:
        kind = self.decisions[state]
        if kind is ActionKind.LONG:
            return LONG_ACTION
        if kind is ActionKind.FAST:
            return int(self.fast_choice[state])
        return NOOP_ACTION


# Width of a numerical tie in the ≥ comparisons below. Recomputing branch
# values through different float paths perturbs exact ties by ≲ 1e-9 at the
# penalty-value scale, while genuine decision gaps on the fixtures are ≥ 0.18;
# anything within the window treats the branches as tied.
TIE_TOLERANCE = 1e-6


def extract_switching_policy(
    q: QTable | np.ndarray, mdp: DiscreteTargetMDP, tie_tolerance: float = TIE_TOLERANCE
) -> SwitchingPolicy:
    """Region classification from a converged table: Long wherever the long
    operator ties or beats the no-intervention column; Fast wherever only the
    fast operator does; NoOp otherwise. Ties therefore prefer Long, then Fast."""
    values = q.values if isinstance(q, QTable) else np.asarray(q, dtype=float)
    w = values[:, NOOP_ACTION]
    branches = branch_values(mdp, w)
    op_long = branches[:, LONG_ACTION]
    fast_block = branches[:, FIRST_FAST_ACTION:]
    op_fast = fast_block.max(axis=1)
    fast_choice = fast_block.argmax(axis=1) + FIRST_FAST_ACTION
    decisions: list[ActionKind] = []
    for y in range(mdp.n_states):
        if op_long[y] >= w[y] - tie_tolerance:
            decisions.append(ActionKind.LONG)
        elif op_fast[y] >= w[y] - tie_tolerance:
            decisions.append(ActionKind.FAST)
        else:
            decisions.append(ActionKind.NOOP)
    return SwitchingPolicy(decisions, fast_choice, op_long, op_fast, w)


def greedy_switch_decisions(
    q: QTable | np.ndarray, mdp: DiscreteTargetMDP, tie_tolerance: float = TIE_TOLERANCE
) -> list[ActionKind]:
    """Greedy modality per state from a Q-table, with the tie preference of
    the region classifier (Long, then Fast, then NoOp): a modality is chosen
    iff its column attains the row maximum."""
    values = q.values if isinstance(q, QTable) else np.asarray(q, dtype=float)
    row_max = values.max(axis=1)
    decisions: list[ActionKind] = []
    for y in range(mdp.n_states):
        if values[y, LONG_ACTION] >= row_max[y] - tie_tolerance:
            decisions.append(ActionKind.LONG)
        elif values[y, FIRST_FAST_ACTION:].max() >= row_max[y] - tie_tolerance:
            decisions.append(ActionKind.FAST)
        else:
            decisions.append(ActionKind.NOOP)
    return decisions


def first_intervention_times(
    mdp: DiscreteTargetMDP,
    policy: SwitchingPolicy,
    start_state: int,
    rng: RngStream,
    max_steps: int = 1_000,
) -> tuple[int | None, int | None]:
    """Simulate the extracted policy and report the first long-activation and
    first fast-impulse step indices (None if the horizon passes without one)."""
    first_long: int | None = None
    first_fast: int | None = None
    state = start_state
    for t in range(max_steps):
        action = policy.action_index(state)
        if action == LONG_ACTION and first_long is None:
            first_long = t
        if action >= FIRST_FAST_ACTION and first_fast is None:
            first_fast = t
        if first_long is not None and first_fast is not None:
            break
        state = sample_transition(mdp, state, action, rng).next_state
    return first_long, first_fast


# ---------------------------------------------------------------------------
# Fixtures
# ---------------------------------------------------------------------------


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def build_fixture_mdp(profile: str) -> DiscreteTargetMDP:
    """Deterministic construction of the test fixtures.

    tiny  — 2 controlled levels {125, 145} (target 125) × residual levels
            {0, 1} × intervention budget {−1, 0, 1}; fully deterministic
            dynamics (an effective input ≥ 1 pulls to 125, otherwise the
            level drifts to 145), gamma 0.7.
    small — 10 controlled levels {40, 60, …, 220} on the zone geometry
            target 130, halfwidth 50 × residual levels {0, .25, .5, .75, 1}
            × budget {−1, …, 3}; drift/noise quantised to a one-rung up-move
            with probability 0.5 (mean +10, std 10 per step on the 20-wide
            grid) and a control pull of round(2·effective input) rungs;
            residual decay follows the ladder law (stay 0.6, drop ratio 0.5),
            gamma 0.9.

    Both use alpha = beta = 1 (equal modality costs), a single fast magnitude
    of 1, and delta 1e4; budget-negative states absorb with reward −delta.
    """
    from .processes import SpectraProcess, spectra_pmf

    if profile == "tiny":
        x_grid: tuple[float, ...] = (125.0, 145.0)
        target = 125.0
        ladder: tuple[float, ...] = (0.0,)
        budget_grid: tuple[float, ...] = (-1.0, 0.0, 1.0)
        gamma = 0.7
        p_up = 1.0  # deterministic drift to the high level
        pull_scale = 1.0  # any positive input reaches the target level
        pull_floor = 0
    elif profile == "small":
        x_grid = tuple(40.0 + 20.0 * i for i in range(10))
        target = 130.0
        ladder = (0.0, 0.25, 0.5, 0.75)
        budget_grid = (-1.0, 0.0, 1.0, 2.0, 3.0)
        gamma = 0.9
        p_up = 0.5
        pull_scale = 2.0
        pull_floor = 4  # grid index of 120, the rung just below the target
    else:
        raise ValueError(f"unknown fixture profile {profile!r}")

    alpha = beta = 1.0
    delta = 1.0e4
    fast_magnitudes = (1.0,)
    level_grid = ladder + (1.0,)
    spectra = SpectraProcess(levels=ladder, stay_prob=0.6, drop_ratio=0.5)
    decay_pmfs = {lv: spectra_pmf(spectra, lv) for lv in level_grid}

    n_x, n_lv, n_b = len(x_grid), len(level_grid), len(budget_grid)
    n_states = n_x * n_lv * n_b
    n_actions = FIRST_FAST_ACTION + len(fast_magnitudes)
    transitions = np.zeros((n_states, n_actions, n_states))
    rewards = np.zeros((n_states, n_actions))
    x_values = np.zeros(n_states)
    levels = np.zeros(n_states)
    budgets = np.zeros((n_states, 1))

    def index(ix: int, il: int, ib: int) -> int:
        return (ix * n_lv + il) * n_b + ib

    action_costs = [0.0, alpha] + [beta * h**2 for h in fast_magnitudes]

    for ix, x in enumerate(x_grid):
        for il, lv in enumerate(level_grid):
            for ib, b in enumerate(budget_grid):
                y = index(ix, il, ib)
                x_values[y] = x
                levels[y] = lv
                budgets[y, 0] = b
                violated = b < 0
                for a in range(n_actions):
                    kind = (
                        ActionKind.NOOP
                        if a == NOOP_ACTION
                        else ActionKind.LONG
                        if a == LONG_ACTION
                        else ActionKind.FAST
                    )
                    rewards[y, a] = (
                        -delta if violated else -((x - target) ** 2) - action_costs[a]
                    )
                    # Effective input during the step: the residual level
                    # (forced to 1 by an activation) or the fast impulse,
                    # whichever is stronger (saturating response).
                    level_now = 1.0 if kind is ActionKind.LONG else lv
                    impulse = (
                        fast_magnitudes[a - FIRST_FAST_ACTION]
                        if kind is ActionKind.FAST
                        else 0.0
                    )
                    u = max(level_now, impulse)
                    pull = _round_half_up(pull_scale * u)
                    ib_next = ib if kind is ActionKind.NOOP else max(ib - 1, 0)
                    for lv_next, p_lv in decay_pmfs[level_now].items():
                        il_next = level_grid.index(lv_next)
                        for up, p_up_branch in ((1, p_up), (0, 1.0 - p_up)):
                            if p_up_branch == 0.0:
                                continue
                            if profile == "tiny":
                                ix_next = 0 if u >= 1.0 else 1
                            else:
                                # Control saturates at the rung just below the
                                # target: the pull never drives the level past
                                # it (no overshoot), so a larger residual is
                                # never worse and the long branch dominates
                                # the fast one wherever intervening pays.
                                ix_drift = min(max(ix + up, 0), n_x - 1)
                                ix_next = max(ix_drift - pull, min(ix_drift, pull_floor))
                            transitions[y, a, index(ix_next, il_next, ib_next)] += (
                                p_lv * p_up_branch
                            )

    return DiscreteTargetMDP(
        transitions=transitions,
        rewards=rewards,
        gamma=gamma,
        delta=delta,
        fast_magnitudes=fast_magnitudes,
        x_values=x_values,
        levels=levels,
        budget_components=budgets,
        target=target,
        x_grid=x_grid,
        level_grid=level_grid,
        budget_grid=budget_grid,
    )


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------


def export_q_table_csv(path: str, q: QTable) -> None:
    """CSV rows (state index, action index, value, visits)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["state", "action", "value", "visits"])
        n_s, n_a = q.values.shape
        for y in range(n_s):
            for a in range(n_a):
                writer.writerow([y, a, repr(float(q.values[y, a])), int(q.visits[y, a])])


def export_mdp_json(path: str, mdp: DiscreteTargetMDP) -> None:
    """JSON with (from, action, to, prob, reward) triplets for every
    positive-probability transition."""
    triplets = []
    for y in range(mdp.n_states):
        for a in range(mdp.n_actions):
            reward = float(mdp.rewards[y, a])
            for y_next in np.nonzero(mdp.transitions[y, a])[0]:
                triplets.append(
                    {
                        "from": int(y),
                        "action": int(a),
                        "to": int(y_next),
                        "prob": float(mdp.transitions[y, a, y_next]),
                        "reward": reward,
                    }
                )
    payload = {
        "gamma": mdp.gamma,
        "delta": mdp.delta,
        "fast_magnitudes": list(mdp.fast_magnitudes),
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "target": mdp.target,
        "x_values": [float(x) for x in mdp.x_values],
        "levels": [float(v) for v in mdp.levels],
        "budget_components": [[float(b) for b in row] for row in mdp.budget_components],
        "transitions": triplets,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


def import_mdp_json(path: str) -> DiscreteTargetMDP:
    """Inverse of :func:`export_mdp_json`: rebuild the dense tables from the
    transition triplets. Construction re-runs every table invariant, so a
    malformed document (e.g. a transition row that does not sum to 1) raises
    ``ValueError`` here rather than corrupting downstream solves."""
    with open(path) as fh:
        payload = json.load(fh)
    n_states = int(payload["n_states"])
    n_actions = int(payload["n_actions"])
    transitions = np.zeros((n_states, n_actions, n_states))
    rewards = np.zeros((n_states, n_actions))
    for entry in payload["transitions"]:
        y, a, y_next = int(entry["from"]), int(entry["action"]), int(entry["to"])
        transitions[y, a, y_next] = float(entry["prob"])
        rewards[y, a] = float(entry["reward"])
    return DiscreteTargetMDP(
        transitions=transitions,
        rewards=rewards,
        gamma=float(payload["gamma"]),
        delta=float(payload["delta"]),
        fast_magnitudes=tuple(float(m) for m in payload["fast_magnitudes"]),
        x_values=np.asarray(payload.get("x_values", np.zeros(n_states)), dtype=float),
        levels=np.asarray(payload.get("levels", np.zeros(n_states)), dtype=float),
        budget_components=np.asarray(
            payload.get("budget_components", np.zeros((n_states, 1))), dtype=float
        ),
        target=float(payload.get("target", 0.0)),
    )
