"""Operating constraints, budget accounting, and penalty-reshaped rewards.

The controller must keep four running budgets nonnegative:

1. interventions_remaining — cap on the total number of interventions
   (fast impulses + long activations combined);
2. long_slack  — cumulative long-acting consumption may not exceed the
   current level minus half the target (x - target/2);
3. fast_slack  — same bound for cumulative fast-acting consumption;
4. violations_remaining — cap on the number of steps spent outside the
   target zone [target - halfwidth, target + halfwidth].

Budgets are charged on state entry: entering x' after taking action a adds
a's consumption and, if x' lies strictly outside the zone, one violation.
The per-step reward is quadratic in the distance to target with flat
activation / quadratic impulse costs; whenever any budget component is
negative the reward is replaced by -delta (a budget of exactly zero still
counts as satisfied).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .processes import ActionKind, InterventionAction

BUDGET_NAMES = (
    "interventions_remaining",
    "long_slack",
    "fast_slack",
    "violations_remaining",
)


@dataclass(frozen=True)
class ConstraintSet:
    """Zone geometry and budget caps.

    ``max_interventions`` / ``max_violations`` may be ``math.inf`` to disable
    a cap (the single-modality degenerate variant runs with an uncapped
    intervention count).
    """

    target: float = 125.0
    halfwidth: float = 55.0
    max_interventions: float = 60.0
    max_violations: float = 600.0

    def __post_init__(self) -> None:
        if self.halfwidth <= 0:
            raise ValueError(f"halfwidth must be > 0, got {self.halfwidth}")
        if self.max_interventions < 0 or self.max_violations < 0:
            raise ValueError("budget caps must be >= 0")

    @property
    def zone_low(self) -> float:
        return self.target - self.halfwidth

    @property
    def zone_high(self) -> float:
        return self.target + self.halfwidth

    def in_zone(self, x: float) -> bool:
        """Zone membership is inclusive at both edges."""
        return self.zone_low <= x <= self.zone_high


@dataclass(frozen=True)
class BudgetAccount:
    """Exact (noise-free) running totals the budgets are derived from."""

    interventions_used: int = 0
    spent_long: float = 0.0
    spent_fast: float = 0.0
    violations: int = 0

    def charge(
        self, action: InterventionAction, x_entered: float, constraints: ConstraintSet
    ) -> "BudgetAccount":
        """Account update on entering ``x_entered`` after taking ``action``."""
        used = self.interventions_used + (1 if action.is_intervention else 0)
        spent_long = self.spent_long + (1.0 if action.kind is ActionKind.LONG else 0.0)
        spent_fast = self.spent_fast + (
            action.magnitude if action.kind is ActionKind.FAST else 0.0
        )
        violations = self.violations + (0 if constraints.in_zone(x_entered) else 1)
        return BudgetAccount(used, spent_long, spent_fast, violations)

    def with_violation(self) -> "BudgetAccount":
        return replace(self, violations=self.violations + 1)


def budget_vector(
    constraints: ConstraintSet, x: float, account: BudgetAccount
) -> tuple[float, float, float, float]:
    """Current budget components (ordered as BUDGET_NAMES)."""
    slack_base = x - constraints.target / 2.0
    return (
        constraints.max_interventions - account.interventions_used,
        slack_base - account.spent_long,
        slack_base - account.spent_fast,
        constraints.max_violations - account.violations,
    )


def budgets_satisfied(budgets: tuple[float, ...]) -> bool:
    """Componentwise nonnegativity; exact zeros are satisfied."""
    return all(b >= 0.0 for b in budgets)


@dataclass(frozen=True)
class RewardConfig:
    """Per-step reward: -(x - target)^2 - alpha*1{activation} - beta*eta^2*1{impulse},
    replaced by -delta whenever a budget component is negative."""

    target: float = 125.0
    alpha: float = 1.0
    beta: float = 0.1
    delta: float = 1.0e4

    def __post_init__(self) -> None:
        if self.delta <= 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("action costs must be >= 0")


def base_reward(config: RewardConfig, x: float, action: InterventionAction) -> float:
    r = -((x - config.target) ** 2)
    if action.kind is ActionKind.LONG:
        r -= config.alpha
    elif action.kind is ActionKind.FAST:
        r -= config.beta * action.magnitude**2
    return r


def reshaped_reward(
    config: RewardConfig,
    x: float,
    action: InterventionAction,
    budgets: tuple[float, ...],
) -> float:
    if not budgets_satisfied(budgets):
        return -config.delta
    return base_reward(config, x, action)


def case_a_constraints(constraints: ConstraintSet) -> ConstraintSet:
    """Degenerate single-modality variant: the intervention-count cap is
    lifted (the fast channel is the only one and fires freely)."""
    return replace(constraints, max_interventions=math.inf)
