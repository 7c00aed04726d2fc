"""Switching controller: proposal policies, the three-way switch, look-ahead
shielding, and the episode loop with budget-reshaped rewards.

Each control step resolves in a fixed precedence order:

1. A still-active long effect continues — no switcher consultation and no new
   activation. The shield is consulted with the null action (continuation
   consumes no new budget), so a rejection here changes only the record, not
   the dynamics.
2. Otherwise the fast and long policies each propose, the switcher picks one
   of {NoOp, Long, Fast}, and a proposed intervention is executed only if the
   shield accepts it; a rejected proposal falls back to the null action.

The shield simulates ``horizon`` steps forward — the proposed action first,
null actions after it — and rejects iff any predicted entered state has a
budget component below ``margin``. With margin 0 that is exactly the set of
states whose reshaped reward is the penalty value.

Budgets are charged on entry (the account sees the action taken at t and the
level entered at t+1) while the reward at step t is reshaped with the budget
vector as it stood at t. Long continuation carries no activation cost and no
count charge: costs bind once, at the activation step.

Episodes are independent given distinct root streams and strictly sequential
inside; every source of randomness is drawn from a named child stream so that
structurally identical runs consume draw-for-draw identical noise.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Protocol, Sequence, TypeVar

import numpy as np

from .constraints import (
    BudgetAccount,
    ConstraintSet,
    RewardConfig,
    base_reward,
    budget_vector,
    reshaped_reward,
)
from .processes import NOOP, ActionKind, InterventionAction, SystemState
from .rng import RngStream
from .tabular import (
    FIRST_FAST_ACTION,
    LONG_ACTION,
    NOOP_ACTION,
    DiscreteTargetMDP,
    SwitchingPolicy,
)

LOG_SCHEMA_VERSION = 1


class SwitchDecision(enum.Enum):
    NOOP = "noop"
    FAST = "fast"
    LONG = "long"


# ---------------------------------------------------------------------------
# Policy interfaces and stock implementations
# ---------------------------------------------------------------------------


class FastPolicy(Protocol):
    def sample(self, state: SystemState, rng: RngStream) -> float:
        """Propose an impulse magnitude (>= 0)."""
        ...


class LongPolicy(Protocol):
    def sample(self, state: SystemState, rng: RngStream) -> int:
        """Propose whether to activate the long modality (0 or 1)."""
        ...


class Switcher(Protocol):
    def decide(
        self,
        t: int,
        state: SystemState,
        fast_proposal: float,
        long_proposal: int,
        rng: RngStream,
    ) -> SwitchDecision:
        """Pick which proposal (if any) to execute; called after both draws."""
        ...


@dataclass(frozen=True)
class ConstantFast:
    magnitude: float

    def sample(self, state: SystemState, rng: RngStream) -> float:
        return self.magnitude


@dataclass(frozen=True)
class UniformFast:
    """Uniform draw over a fixed menu of impulse magnitudes."""

    magnitudes: tuple[float, ...]

    def sample(self, state: SystemState, rng: RngStream) -> float:
        return self.magnitudes[rng.integers(0, len(self.magnitudes))]


@dataclass(frozen=True)
class ConstantLong:
    value: int = 1

    def sample(self, state: SystemState, rng: RngStream) -> int:
        return self.value


@dataclass(frozen=True)
class BernoulliLong:
    p: float

    def sample(self, state: SystemState, rng: RngStream) -> int:
        return 1 if rng.random() < self.p else 0


@dataclass(frozen=True)
class ConstantSwitcher:
    decision: SwitchDecision

    def decide(self, t, state, fast_proposal, long_proposal, rng) -> SwitchDecision:
        return self.decision


@dataclass(frozen=True)
class UniformSwitcher:
    """Uniform draw over the switch alternatives in the fixed order
    [NoOp, Long, Fast]."""

    def decide(self, t, state, fast_proposal, long_proposal, rng) -> SwitchDecision:
        order = (SwitchDecision.NOOP, SwitchDecision.LONG, SwitchDecision.FAST)
        return order[rng.integers(0, 3)]


@dataclass(frozen=True)
class ScheduleSwitcher:
    """Fixed calendar: activate the long modality at ``long_times``, fire an
    impulse at ``fast_times``, otherwise do nothing. A step listed in both
    resolves to Long (the order [NoOp, Long, Fast] breaks ties upstream of
    NoOp only when a branch is scheduled)."""

    long_times: frozenset[int] = frozenset()
    fast_times: frozenset[int] = frozenset()

    def decide(self, t, state, fast_proposal, long_proposal, rng) -> SwitchDecision:
        if t in self.long_times:
            return SwitchDecision.LONG
        if t in self.fast_times:
            return SwitchDecision.FAST
        return SwitchDecision.NOOP


@dataclass(frozen=True)
class TabularSwitcher:
    """Greedy region switcher backed by a solved table: maps the live state to
    a state index and reads off the Long/Fast/NoOp classification."""

    policy: SwitchingPolicy
    state_index: Callable[[SystemState], int]

    def decide(self, t, state, fast_proposal, long_proposal, rng) -> SwitchDecision:
        kind = self.policy.decisions[self.state_index(state)]
        if kind is ActionKind.LONG:
            return SwitchDecision.LONG
        if kind is ActionKind.FAST:
            return SwitchDecision.FAST
        return SwitchDecision.NOOP


@dataclass(frozen=True)
class TabularFast:
    """Fast proposals from a solved table: the best impulse magnitude at the
    mapped state index."""

    policy: SwitchingPolicy
    state_index: Callable[[SystemState], int]
    magnitudes: tuple[float, ...]

    def sample(self, state: SystemState, rng: RngStream) -> float:
        column = int(self.policy.fast_choice[self.state_index(state)])
        return self.magnitudes[column - FIRST_FAST_ACTION]


@dataclass(frozen=True)
class PolicyBundle:
    """The three strategy slots of the switching architecture. Proposals are
    always drawn (fast then long) before the switcher is consulted."""

    fast_policy: FastPolicy
    long_policy: LongPolicy
    switcher: Switcher
    fast_magnitudes: tuple[float, ...]

    def __post_init__(self) -> None:
        if any(m < 0 for m in self.fast_magnitudes):
            raise ValueError(
                f"impulse magnitudes must be >= 0, got {self.fast_magnitudes}"
            )


def degenerate_to_case_a(bundle: PolicyBundle) -> PolicyBundle:
    """Collapse the switching architecture onto the impulse-only loop: the
    switcher is pinned to Fast everywhere, the long policy proposes 0, and the
    impulse menu gains the zero magnitude so 'no impulse' stays expressible."""
    magnitudes = bundle.fast_magnitudes
    if 0.0 not in magnitudes:
        magnitudes = (0.0, *magnitudes)
    return PolicyBundle(
        fast_policy=bundle.fast_policy,
        long_policy=ConstantLong(0),
        switcher=ConstantSwitcher(SwitchDecision.FAST),
        fast_magnitudes=magnitudes,
    )


# ---------------------------------------------------------------------------
# Look-ahead shield
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShieldConfig:
    """Look-ahead safety screen.

    horizon — steps simulated ahead (the proposed action, then null actions)
    samples — successor draws per step in sampling mode (mean fed forward)
    margin  — reject when a predicted budget component falls below this
              (0 reproduces exactly the penalty-reward criterion)
    enabled — when False every proposal passes unexamined
    """

    horizon: int = 1
    samples: int = 1
    margin: float = 0.0
    enabled: bool = True

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValueError(f"shield horizon must be >= 1, got {self.horizon}")
        if self.samples < 1:
            raise ValueError(f"shield samples must be >= 1, got {self.samples}")


@dataclass(frozen=True)
class ShieldVerdict:
    accepted: bool
    rejected_at: int | None = None  # 1-based look-ahead step of first predicted breach

    @property
    def rejected(self) -> bool:
        return not self.accepted


Token = TypeVar("Token")


class ShieldModel(Protocol[Token]):
    """Prediction handle the shield rolls forward.

    ``advance`` returns the predicted successor tokens of one token under one
    action: a single mean successor in sampling mode, the full positive-
    probability support in exact mode. ``violates`` says whether an entered
    token has a budget component below ``margin``.
    """

    def advance(
        self, token: Token, action: InterventionAction, rng: RngStream, samples: int
    ) -> list[Token]:
        ...

    def violates(self, token: Token, margin: float) -> bool:
        ...


def shield_check(
    config: ShieldConfig,
    model: ShieldModel,
    token: Any,
    action: InterventionAction,
    rng: RngStream,
) -> ShieldVerdict:
    """Simulate ``horizon`` steps ahead — the proposed action first, null
    actions after it — and reject iff any predicted entered state breaches a
    budget component (below ``margin``). Prediction errors propagate; a
    failing model never silently accepts."""
    if not config.enabled:
        return ShieldVerdict(True)
    tokens: list[Any] = [token]
    upcoming = action
    for k in range(1, config.horizon + 1):
        successors: list[Any] = []
        for current in tokens:
            successors.extend(model.advance(current, upcoming, rng, config.samples))
        if any(model.violates(s, config.margin) for s in successors):
            return ShieldVerdict(False, rejected_at=k)
        # Dedupe (order-preserving) so exact-support branches do not multiply.
        tokens = list(dict.fromkeys(successors))
        upcoming = NOOP
    return ShieldVerdict(True)


def mdp_action_index(mdp: DiscreteTargetMDP, action: InterventionAction) -> int:
    """Column of ``action`` in the MDP's action enumeration."""
    if action.kind is ActionKind.NOOP:
        return NOOP_ACTION
    if action.kind is ActionKind.LONG:
        return LONG_ACTION
    try:
        return FIRST_FAST_ACTION + mdp.fast_magnitudes.index(action.magnitude)
    except ValueError:
        raise ValueError(
            f"impulse magnitude {action.magnitude} is not in the MDP menu "
            f"{mdp.fast_magnitudes}"
        ) from None


def mdp_action(mdp: DiscreteTargetMDP, index: int) -> InterventionAction:
    """Inverse of :func:`mdp_action_index`."""
    if index == NOOP_ACTION:
        return NOOP
    if index == LONG_ACTION:
        return InterventionAction.long_activation()
    return InterventionAction.fast(mdp.fast_magnitudes[index - FIRST_FAST_ACTION])


@dataclass(frozen=True)
class MdpShieldModel:
    """Exact-expectation look-ahead on a finite MDP: tokens are state indices
    and ``advance`` returns the full positive-probability successor support
    (``samples`` is ignored; nothing is drawn)."""

    mdp: DiscreteTargetMDP

    def advance(
        self, token: int, action: InterventionAction, rng: RngStream, samples: int
    ) -> list[int]:
        row = self.mdp.transitions[token, mdp_action_index(self.mdp, action)]
        return [int(i) for i in np.nonzero(row > 0.0)[0]]

    def violates(self, token: int, margin: float) -> bool:
        return bool((self.mdp.budget_components[token] < margin).any())


@dataclass(frozen=True)
class EnvironmentShieldModel:
    """Monte-Carlo look-ahead through an environment's prediction hook.

    Tokens are (t, state, account) triples. Each ``advance`` draws ``samples``
    successors, feeds the componentwise sample-mean state forward, and charges
    the account exactly as the live loop would on entering that state.
    """

    env: "Environment"
    ctx: Any

    def advance(
        self,
        token: tuple[int, SystemState, BudgetAccount],
        action: InterventionAction,
        rng: RngStream,
        samples: int,
    ) -> list[tuple[int, SystemState, BudgetAccount]]:
        t, state, account = token
        draws = [
            self.env.predict_step(self.ctx, t, state, action, rng)
            for _ in range(samples)
        ]
        mean_state = SystemState(
            x=float(np.mean([d.x for d in draws])),
            z_long=float(np.mean([d.z_long for d in draws])),
            z_fast=float(np.mean([d.z_fast for d in draws])),
            level=float(np.mean([d.level for d in draws])),
            pools=tuple(
                float(np.mean(column)) for column in zip(*(d.pools for d in draws))
            ),
        )
        next_account = account.charge(action, mean_state.x, self.env.constraints)
        return [(t + 1, mean_state, next_account)]

    def violates(
        self, token: tuple[int, SystemState, BudgetAccount], margin: float
    ) -> bool:
        t, state, account = token
        budgets = budget_vector(self.env.constraints, state.x, account)
        return any(b < margin for b in budgets)


def audit_mdp_shield(
    mdp: DiscreteTargetMDP, config: ShieldConfig
) -> tuple[int, list[tuple[int, int, int]]]:
    """Exhaustively screen every (nonnegative-budget state, proposal) pair
    through the exact shield and collect executed transitions that could still
    enter a negative-budget state. Returns (pairs covered, breaches); a sound
    shield yields no breaches."""
    model = MdpShieldModel(mdp)
    rng = RngStream(0)  # never drawn from in exact mode
    negative = mdp.budget_negative
    covered = 0
    breaches: list[tuple[int, int, int]] = []
    for state in range(mdp.n_states):
        if negative[state]:
            continue
        for action_index in range(mdp.n_actions):
            covered += 1
            action = mdp_action(mdp, action_index)
            verdict = shield_check(config, model, state, action, rng)
            executed = action_index if verdict.accepted else NOOP_ACTION
            successors = np.nonzero(mdp.transitions[state, executed] > 0.0)[0]
            for nxt in successors:
                if negative[nxt]:
                    breaches.append((state, action_index, int(nxt)))
    return covered, breaches


# ---------------------------------------------------------------------------
# Environment interface
# ---------------------------------------------------------------------------


class Environment(Protocol):
    """A controllable target-zone system.

    ``start_episode`` returns the initial state plus an opaque episode context
    (internal streams, schedules, ...). ``step`` advances the live system one
    step under a *new* intervention: a long continuation is carried by
    ``state.level``, never by the action, so re-activation is always explicit.
    ``predict_step`` is the shield's side-effect-free model of ``step`` and
    draws only from the stream it is handed.
    """

    constraints: ConstraintSet
    reward_config: RewardConfig

    def start_episode(self, rng: RngStream) -> tuple[SystemState, Any]:
        ...

    def step(
        self, ctx: Any, t: int, state: SystemState, action: InterventionAction
    ) -> SystemState:
        ...

    def predict_step(
        self,
        ctx: Any,
        t: int,
        state: SystemState,
        action: InterventionAction,
        rng: RngStream,
    ) -> SystemState:
        ...


# ---------------------------------------------------------------------------
# Transition records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransitionRecord:
    """One executed control step.

    ``budgets`` is the budget vector as it stood on entering the step (the
    reward at t is reshaped with it). ``proposed_*``, ``decision`` and
    ``verdict`` are None on branches that never reached them: continuation
    steps draw no proposals, and the shield is consulted only for proposed
    interventions (or continuation, with the null action). ``executed``
    carries the effective residual magnitude on continuation steps; rewards
    and budget charges then follow the null action.
    """

    t: int
    state: SystemState
    budgets: tuple[float, float, float, float]
    proposed_fast: float | None
    proposed_long: int | None
    decision: SwitchDecision | None
    verdict: ShieldVerdict | None
    executed: InterventionAction
    continued_long: bool
    base_reward: float
    reshaped_reward: float
    next_state: SystemState


def _state_dict(state: SystemState) -> dict:
    payload = {
        "x": state.x,
        "z_long": state.z_long,
        "z_fast": state.z_fast,
        "level": state.level,
    }
    if state.pools:
        payload["pools"] = list(state.pools)
    return payload


def _state_from_dict(payload: dict) -> SystemState:
    return SystemState(
        x=payload["x"],
        z_long=payload["z_long"],
        z_fast=payload["z_fast"],
        level=payload["level"],
        pools=tuple(payload.get("pools", ())),
    )


def record_to_json_dict(record: TransitionRecord) -> dict:
    return {
        "v": LOG_SCHEMA_VERSION,
        "t": record.t,
        "state": _state_dict(record.state),
        "budgets": list(record.budgets),
        "proposed_fast": record.proposed_fast,
        "proposed_long": record.proposed_long,
        "decision": record.decision.value if record.decision is not None else None,
        "verdict": (
            None
            if record.verdict is None
            else {
                "accepted": record.verdict.accepted,
                "rejected_at": record.verdict.rejected_at,
            }
        ),
        "executed": {
            "kind": record.executed.kind.value,
            "magnitude": record.executed.magnitude,
        },
        "continued_long": record.continued_long,
        "base_reward": record.base_reward,
        "reshaped_reward": record.reshaped_reward,
        "next_state": _state_dict(record.next_state),
    }


def record_from_json_dict(payload: dict) -> TransitionRecord:
    version = payload.get("v")
    if version != LOG_SCHEMA_VERSION:
        raise ValueError(f"unsupported record schema version: {version!r}")
    verdict = payload["verdict"]
    return TransitionRecord(
        t=int(payload["t"]),
        state=_state_from_dict(payload["state"]),
        budgets=tuple(payload["budgets"]),
        proposed_fast=payload["proposed_fast"],
        proposed_long=payload["proposed_long"],
        decision=(
            SwitchDecision(payload["decision"])
            if payload["decision"] is not None
            else None
        ),
        verdict=(
            ShieldVerdict(verdict["accepted"], verdict["rejected_at"])
            if verdict is not None
            else None
        ),
        executed=InterventionAction(
            ActionKind(payload["executed"]["kind"]), payload["executed"]["magnitude"]
        ),
        continued_long=bool(payload["continued_long"]),
        base_reward=float(payload["base_reward"]),
        reshaped_reward=float(payload["reshaped_reward"]),
        next_state=_state_from_dict(payload["next_state"]),
    )


def write_episode_log(path: str | Path, records: Iterable[TransitionRecord]) -> None:
    """JSON-lines episode log, one record per line."""
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record_to_json_dict(record)) + "\n")


def read_episode_log(path: str | Path) -> list[TransitionRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                records.append(record_from_json_dict(json.loads(line)))
    return records


def effective_long_input(record: TransitionRecord) -> float:
    """The long-acting input the drift saw during this step: 1 at activation
    steps, the residual level otherwise (0 when no effect is running)."""
    if record.executed.kind is ActionKind.LONG and not record.continued_long:
        return 1.0
    return record.state.level


def record_to_row(record: TransitionRecord) -> dict:
    """Flatten a record into a trajectory-CSV row (base columns + budgets +
    rewards + control annotations)."""
    is_activation = (
        record.executed.kind is ActionKind.LONG and not record.continued_long
    )
    is_fast = record.executed.kind is ActionKind.FAST
    return {
        "t": record.t,
        "x": record.state.x,
        "z_long": record.state.z_long,
        "z_fast": record.state.z_fast,
        "level": record.state.level,
        "eta_long": 1.0 if is_activation else 0.0,
        "eta_fast": record.executed.magnitude if is_fast else 0.0,
        "effective_long": effective_long_input(record),
        "b1": record.budgets[0],
        "b2": record.budgets[1],
        "b3": record.budgets[2],
        "b4": record.budgets[3],
        "base_reward": record.base_reward,
        "reshaped_reward": record.reshaped_reward,
        "decision": record.decision.value if record.decision is not None else "",
        "verdict": (
            ""
            if record.verdict is None
            else ("accept" if record.verdict.accepted else "reject")
        ),
    }


TRAJECTORY_EXTRA_COLUMNS = (
    "b1",
    "b2",
    "b3",
    "b4",
    "base_reward",
    "reshaped_reward",
    "decision",
    "verdict",
)


# ---------------------------------------------------------------------------
# Control loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ControlStreams:
    """Named randomness channels of one episode. Keeping them separate makes
    runs comparable draw-for-draw when a single channel changes (e.g. shield
    on/off leaves the dynamics draws untouched)."""

    policy_fast: RngStream
    policy_long: RngStream
    switcher: RngStream
    shield: RngStream


def _episode_streams(rng: RngStream) -> tuple[ControlStreams, RngStream]:
    streams = ControlStreams(
        policy_fast=rng.child("policy-fast"),
        policy_long=rng.child("policy-long"),
        switcher=rng.child("switcher"),
        shield=rng.child("shield"),
    )
    return streams, rng.child("environment")


def control_step(
    env: Environment,
    ctx: Any,
    t: int,
    state: SystemState,
    account: BudgetAccount,
    bundle: PolicyBundle,
    shield: ShieldConfig,
    streams: ControlStreams,
) -> tuple[TransitionRecord, SystemState, BudgetAccount]:
    """Resolve one step of the switching controller and advance the system.

    Precedence: active long effect continues (shielded with the null action);
    otherwise the switcher arbitrates the drawn proposals and the shield
    screens the chosen intervention. Returns the record plus the successor
    state and account for the loop.
    """
    budgets = budget_vector(env.constraints, state.x, account)
    model = EnvironmentShieldModel(env, ctx)
    proposed_fast: float | None = None
    proposed_long: int | None = None
    decision: SwitchDecision | None = None
    verdict: ShieldVerdict | None = None
    continued = False

    if state.long_active:
        if shield.enabled:
            verdict = shield_check(shield, model, (t, state, account), NOOP, streams.shield)
        if verdict is None or verdict.accepted:
            executed = InterventionAction(ActionKind.LONG, state.level)
            continued = True
        else:
            executed = NOOP
        applied = NOOP  # continuation introduces no new intervention
    else:
        proposed_fast = float(bundle.fast_policy.sample(state, streams.policy_fast))
        proposed_long = int(bundle.long_policy.sample(state, streams.policy_long))
        decision = bundle.switcher.decide(
            t, state, proposed_fast, proposed_long, streams.switcher
        )
        candidate = NOOP
        if decision is SwitchDecision.LONG and proposed_long == 1:
            candidate = InterventionAction.long_activation()
        elif decision is SwitchDecision.FAST:
            candidate = InterventionAction.fast(proposed_fast)
        if candidate.is_intervention and shield.enabled:
            verdict = shield_check(
                shield, model, (t, state, account), candidate, streams.shield
            )
            executed = candidate if verdict.accepted else NOOP
        else:
            executed = candidate
        applied = executed

    next_state = env.step(ctx, t, state, applied)
    next_account = account.charge(applied, next_state.x, env.constraints)
    record = TransitionRecord(
        t=t,
        state=state,
        budgets=budgets,
        proposed_fast=proposed_fast,
        proposed_long=proposed_long,
        decision=decision,
        verdict=verdict,
        executed=executed,
        continued_long=continued,
        base_reward=base_reward(env.reward_config, state.x, applied),
        reshaped_reward=reshaped_reward(env.reward_config, state.x, applied, budgets),
        next_state=next_state,
    )
    return record, next_state, next_account


def run_episode(
    env: Environment,
    bundle: PolicyBundle,
    shield: ShieldConfig,
    horizon: int,
    rng: RngStream,
    log_path: str | Path | None = None,
) -> list[TransitionRecord]:
    """Run one episode of the switching controller for ``horizon`` steps with
    a fresh budget account. Optionally writes the JSON-lines episode log."""
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    streams, env_rng = _episode_streams(rng)
    state, ctx = env.start_episode(env_rng)
    account = BudgetAccount()
    records: list[TransitionRecord] = []
    for t in range(horizon):
        record, state, account = control_step(
            env, ctx, t, state, account, bundle, shield, streams
        )
        records.append(record)
    if log_path is not None:
        write_episode_log(log_path, records)
    return records


def run_case_a(
    env: Environment,
    fast_policy: FastPolicy,
    shield: ShieldConfig,
    horizon: int,
    rng: RngStream,
    log_path: str | Path | None = None,
) -> list[TransitionRecord]:
    """The impulse-only control loop: every step proposes one impulse (a zero
    magnitude expresses 'none'), screens it through the shield, and executes
    it or falls back to the null action. Draw-for-draw identical to running
    the switching loop with a bundle collapsed by :func:`degenerate_to_case_a`
    under the same root stream."""
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    streams, env_rng = _episode_streams(rng)
    state, ctx = env.start_episode(env_rng)
    account = BudgetAccount()
    records: list[TransitionRecord] = []
    for t in range(horizon):
        budgets = budget_vector(env.constraints, state.x, account)
        model = EnvironmentShieldModel(env, ctx)
        proposed = float(fast_policy.sample(state, streams.policy_fast))
        candidate = InterventionAction.fast(proposed)
        verdict: ShieldVerdict | None = None
        if shield.enabled:
            verdict = shield_check(
                shield, model, (t, state, account), candidate, streams.shield
            )
            executed = candidate if verdict.accepted else NOOP
        else:
            executed = candidate
        next_state = env.step(ctx, t, state, executed)
        account_next = account.charge(executed, next_state.x, env.constraints)
        records.append(
            TransitionRecord(
                t=t,
                state=state,
                budgets=budgets,
                proposed_fast=proposed,
                proposed_long=None,
                decision=None,
                verdict=verdict,
                executed=executed,
                continued_long=False,
                base_reward=base_reward(env.reward_config, state.x, executed),
                reshaped_reward=reshaped_reward(
                    env.reward_config, state.x, executed, budgets
                ),
                next_state=next_state,
            )
        )
        state, account = next_state, account_next
    if log_path is not None:
        write_episode_log(log_path, records)
    return records


def x_path(records: Sequence[TransitionRecord]) -> list[float]:
    """The visited level path x_0, x_1, ..., x_T of an episode."""
    if not records:
        return []
    return [records[0].state.x] + [r.next_state.x for r in records]
