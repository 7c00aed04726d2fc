"""Switching controller semantics: branch precedence, shield screening,
degeneration to the impulse-only loop, and episode-log round-trips.

The stub environment (conftest) is linear and noise-controllable, so shield
look-aheads are hand-computable.
"""

from __future__ import annotations

import pytest

from zone_rl.constraints import BudgetAccount, ConstraintSet, budget_vector
from zone_rl.controller import (
    ConstantFast,
    ConstantLong,
    ConstantSwitcher,
    EnvironmentShieldModel,
    MdpShieldModel,
    PolicyBundle,
    ScheduleSwitcher,
    ShieldConfig,
    ShieldVerdict,
    SwitchDecision,
    UniformFast,
    UniformSwitcher,
    audit_mdp_shield,
    degenerate_to_case_a,
    effective_long_input,
    mdp_action,
    mdp_action_index,
    read_episode_log,
    record_from_json_dict,
    record_to_json_dict,
    record_to_row,
    run_case_a,
    run_episode,
    shield_check,
    write_episode_log,
    x_path,
)
from zone_rl.processes import ActionKind, InterventionAction, NOOP, SystemState
from zone_rl.rng import RngStream
from zone_rl.tabular import FIRST_FAST_ACTION, LONG_ACTION, NOOP_ACTION


class TestPolicyPieces:
    def test_uniform_fast_draws_from_menu(self):
        policy = UniformFast((1.0, 2.0, 4.0))
        rng = RngStream(0)
        draws = {policy.sample(SystemState(x=0.0), rng) for _ in range(50)}
        assert draws == {1.0, 2.0, 4.0}

    def test_uniform_switcher_covers_alternatives(self):
        switcher = UniformSwitcher()
        rng = RngStream(0)
        draws = {
            switcher.decide(0, SystemState(x=0.0), 1.0, 1, rng) for _ in range(50)
        }
        assert draws == {SwitchDecision.NOOP, SwitchDecision.LONG, SwitchDecision.FAST}

    def test_schedule_switcher_precedence(self):
        switcher = ScheduleSwitcher(long_times=frozenset({3}), fast_times=frozenset({3, 5}))
        state = SystemState(x=0.0)
        assert switcher.decide(3, state, 1.0, 1, RngStream(0)) is SwitchDecision.LONG
        assert switcher.decide(5, state, 1.0, 1, RngStream(0)) is SwitchDecision.FAST
        assert switcher.decide(4, state, 1.0, 1, RngStream(0)) is SwitchDecision.NOOP

    def test_bundle_rejects_negative_magnitudes(self):
        with pytest.raises(ValueError):
            PolicyBundle(
                fast_policy=ConstantFast(1.0),
                long_policy=ConstantLong(1),
                switcher=ConstantSwitcher(SwitchDecision.NOOP),
                fast_magnitudes=(-1.0,),
            )

    def test_degenerate_bundle_shape(self):
        bundle = PolicyBundle(
            fast_policy=UniformFast((0.0, 1.0, 2.0)),
            long_policy=ConstantLong(1),
            switcher=UniformSwitcher(),
            fast_magnitudes=(1.0, 2.0),
        )
        collapsed = degenerate_to_case_a(bundle)
        assert collapsed.fast_magnitudes == (0.0, 1.0, 2.0)  # zero added once
        assert degenerate_to_case_a(collapsed).fast_magnitudes == (0.0, 1.0, 2.0)
        state = SystemState(x=0.0)
        assert collapsed.switcher.decide(0, state, 1.0, 1, RngStream(0)) is SwitchDecision.FAST
        assert collapsed.long_policy.sample(state, RngStream(0)) == 0


class TestShieldConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            ShieldConfig(horizon=0)
        with pytest.raises(ValueError):
            ShieldConfig(samples=0)

    def test_disabled_shield_accepts_everything(self, stub_env_cls, base_constraints, base_rewards):
        env = stub_env_cls(base_constraints, base_rewards)
        model = EnvironmentShieldModel(env, {"rng": None, "sp": None})
        token = (0, SystemState(x=10.0), BudgetAccount(interventions_used=10**6))
        verdict = shield_check(
            ShieldConfig(enabled=False), model, token, InterventionAction.fast(5.0), RngStream(0)
        )
        assert verdict.accepted and verdict.rejected_at is None

    def test_verdict_flags(self):
        assert not ShieldVerdict(True).rejected
        assert ShieldVerdict(False, rejected_at=2).rejected


class TestShieldLookahead:
    def test_k_horizon_hand_example(self, stub_env_cls, base_constraints, base_rewards):
        # Deterministic long pull of 2/step from x=66: the activation step
        # lands at 64 (long slack 1.5 - 1 spent = 0.5, fine) but the next
        # carried step lands at 62 with slack 62 - 62.5 - 1 < 0. A one-step
        # screen accepts; a three-step screen sees the breach at step 2.
        env = stub_env_cls(
            base_constraints, base_rewards, sigma=0.0, drift_rate=0.0, long_gain=2.0
        )
        model = EnvironmentShieldModel(env, {"rng": None, "sp": None})
        token = (0, SystemState(x=66.0), BudgetAccount())
        long_act = InterventionAction.long_activation()
        v1 = shield_check(ShieldConfig(horizon=1), model, token, long_act, RngStream(0))
        v3 = shield_check(ShieldConfig(horizon=3), model, token, long_act, RngStream(0))
        assert v1.accepted
        assert v3.rejected and v3.rejected_at == 2

    def test_margin_tightens_the_screen(self, stub_env_cls, base_constraints, base_rewards):
        env = stub_env_cls(
            base_constraints, base_rewards, sigma=0.0, drift_rate=0.0, long_gain=2.0
        )
        model = EnvironmentShieldModel(env, {"rng": None, "sp": None})
        token = (0, SystemState(x=66.0), BudgetAccount())
        long_act = InterventionAction.long_activation()
        relaxed = shield_check(ShieldConfig(horizon=1, margin=0.0), model, token, long_act, RngStream(0))
        strict = shield_check(ShieldConfig(horizon=1, margin=1.0), model, token, long_act, RngStream(0))
        assert relaxed.accepted
        assert strict.rejected and strict.rejected_at == 1

    def test_sample_mean_feeds_forward(self, stub_env_cls, base_constraints, base_rewards):
        # With noise, the model averages `samples` draws into one successor.
        env = stub_env_cls(base_constraints, base_rewards, sigma=0.0)
        model = EnvironmentShieldModel(env, {"rng": None, "sp": None})
        token = (0, SystemState(x=125.0), BudgetAccount())
        out = model.advance(token, NOOP, RngStream(0), samples=4)
        assert len(out) == 1
        t_next, state, account = out[0]
        assert t_next == 1
        assert state.x == pytest.approx(125.0 + -0.05 * (125.0 - 140.0))
        assert account == BudgetAccount()  # no intervention, in-zone entry

    def test_violates_uses_margin(self, stub_env_cls, base_constraints, base_rewards):
        env = stub_env_cls(base_constraints, base_rewards)
        model = EnvironmentShieldModel(env, {"rng": None, "sp": None})
        token = (0, SystemState(x=66.0), BudgetAccount())
        budgets = budget_vector(base_constraints, 66.0, BudgetAccount())
        assert min(budgets) == pytest.approx(3.5)
        assert not model.violates(token, margin=3.5)
        assert model.violates(token, margin=3.6)


class TestMdpActions:
    def test_index_round_trip(self, tiny_mdp):
        for index in range(tiny_mdp.n_actions):
            assert mdp_action_index(tiny_mdp, mdp_action(tiny_mdp, index)) == index
        assert mdp_action_index(tiny_mdp, NOOP) == NOOP_ACTION
        assert mdp_action_index(tiny_mdp, InterventionAction.long_activation()) == LONG_ACTION
        assert mdp_action_index(tiny_mdp, InterventionAction.fast(1.0)) == FIRST_FAST_ACTION

    def test_unknown_magnitude_rejected(self, tiny_mdp):
        with pytest.raises(ValueError, match="menu"):
            mdp_action_index(tiny_mdp, InterventionAction.fast(3.0))


class TestMdpShieldAudit:
    def test_exact_support_advance(self, small_mdp):
        model = MdpShieldModel(small_mdp)
        support = model.advance(0, NOOP, RngStream(0), samples=99)
        expected = [int(i) for i in small_mdp.transitions[0, NOOP_ACTION].nonzero()[0]]
        assert support == expected

    @pytest.mark.parametrize("profile", ["tiny", "small"])
    def test_shield_soundness_exhaustive(self, profile, request):
        mdp = request.getfixturevalue(f"{profile}_mdp")
        covered, breaches = audit_mdp_shield(mdp, ShieldConfig(horizon=1, enabled=True))
        nonnegative = int((~mdp.budget_negative).sum())
        assert covered == nonnegative * mdp.n_actions
        assert breaches == []
        # non-vacuity: without the screen, executed transitions do breach
        _, unshielded = audit_mdp_shield(mdp, ShieldConfig(horizon=1, enabled=False))
        assert len(unshielded) > 0

    def test_audit_counts_frozen(self, tiny_mdp):
        covered, breaches = audit_mdp_shield(tiny_mdp, ShieldConfig(horizon=1, enabled=True))
        _, unshielded = audit_mdp_shield(tiny_mdp, ShieldConfig(horizon=1, enabled=False))
        assert (covered, len(breaches)) == (24, 0)
        assert len(unshielded) == 8


class TestControlLoop:
    def make_schedule_bundle(self):
        return PolicyBundle(
            fast_policy=ConstantFast(1.0),
            long_policy=ConstantLong(1),
            switcher=ScheduleSwitcher(long_times=frozenset({0})),
            fast_magnitudes=(1.0,),
        )

    def test_continuation_precedence(self, stub_env_cls, base_constraints, base_rewards):
        env = stub_env_cls(base_constraints, base_rewards, sigma=0.5)
        records = run_episode(
            env, self.make_schedule_bundle(), ShieldConfig(horizon=2), 60, RngStream(7)
        )
        first = records[0]
        assert first.executed.kind is ActionKind.LONG and not first.continued_long
        assert first.decision is SwitchDecision.LONG
        assert effective_long_input(first) == 1.0

        active = [r for r in records[1:] if r.state.long_active]
        assert active, "no continuation steps sampled"
        for r in active:
            # continuation draws no proposals and reports the carried level
            assert r.continued_long
            assert r.decision is None and r.proposed_fast is None and r.proposed_long is None
            assert r.executed.kind is ActionKind.LONG
            assert r.executed.magnitude == r.state.level

    def test_effective_input_decays_monotonically(
        self, stub_env_cls, base_constraints, base_rewards
    ):
        env = stub_env_cls(base_constraints, base_rewards, sigma=0.5)
        records = run_episode(
            env, self.make_schedule_bundle(), ShieldConfig(horizon=2), 60, RngStream(7)
        )
        eff = [effective_long_input(r) for r in records]
        first_zero = next(i for i, e in enumerate(eff) if i > 0 and e == 0.0)
        assert eff[0] == 1.0
        assert all(eff[i] >= eff[i + 1] for i in range(first_zero - 1))

    def test_continuation_charges_nothing(self, stub_env_cls, base_constraints, base_rewards):
        env = stub_env_cls(base_constraints, base_rewards, sigma=0.5)
        records = run_episode(
            env, self.make_schedule_bundle(), ShieldConfig(horizon=2), 60, RngStream(7)
        )
        eff = [effective_long_input(r) for r in records]
        first_zero = next(i for i, e in enumerate(eff) if i > 0 and e == 0.0)
        counts = [r.budgets[0] for r in records]
        assert counts[0] == 60.0  # entering budget
        assert counts[first_zero] == 59.0  # one activation charged, continuations free
        # rewards on continuation steps follow the null action (no new cost)
        for r in records:
            if r.continued_long:
                assert r.base_reward == -((r.state.x - 125.0) ** 2)

    def test_count_exhaustion_rejects_rest(self, stub_env_cls, base_rewards):
        tight = ConstraintSet(
            target=125.0, halfwidth=55.0, max_interventions=1, max_violations=600
        )
        env = stub_env_cls(tight, base_rewards, sigma=0.0)
        bundle = PolicyBundle(
            fast_policy=ConstantFast(1.0),
            long_policy=ConstantLong(0),
            switcher=ConstantSwitcher(SwitchDecision.FAST),
            fast_magnitudes=(1.0,),
        )
        records = run_episode(env, bundle, ShieldConfig(horizon=1), 5, RngStream(3))
        assert records[0].verdict.accepted
        assert records[0].executed.kind is ActionKind.FAST
        for r in records[1:]:
            # rejection only records: the null action executes and is priced
            assert r.verdict is not None and r.verdict.rejected
            assert r.executed.kind is ActionKind.NOOP
            assert r.base_reward == -((r.state.x - 125.0) ** 2)
        assert all(r.budgets[0] >= 0 for r in records)

    def test_noop_decision_skips_shield(self, stub_env_cls, base_constraints, base_rewards):
        env = stub_env_cls(base_constraints, base_rewards, sigma=0.0)
        bundle = PolicyBundle(
            fast_policy=ConstantFast(1.0),
            long_policy=ConstantLong(1),
            switcher=ConstantSwitcher(SwitchDecision.NOOP),
            fast_magnitudes=(1.0,),
        )
        records = run_episode(env, bundle, ShieldConfig(horizon=1), 3, RngStream(0))
        for r in records:
            assert r.verdict is None  # nothing proposed, nothing screened
            assert r.proposed_fast == 1.0 and r.proposed_long == 1  # proposals still drawn
            assert r.executed == NOOP

    def test_long_needs_proposal_one(self, stub_env_cls, base_constraints, base_rewards):
        env = stub_env_cls(base_constraints, base_rewards, sigma=0.0)
        bundle = PolicyBundle(
            fast_policy=ConstantFast(1.0),
            long_policy=ConstantLong(0),  # switcher wants Long, proposer says no
            switcher=ConstantSwitcher(SwitchDecision.LONG),
            fast_magnitudes=(1.0,),
        )
        records = run_episode(env, bundle, ShieldConfig(horizon=1), 3, RngStream(0))
        assert all(r.executed == NOOP for r in records)

    def test_horizon_validated(self, stub_env_cls, base_constraints, base_rewards):
        env = stub_env_cls(base_constraints, base_rewards)
        with pytest.raises(ValueError):
            run_episode(env, self.make_schedule_bundle(), ShieldConfig(), 0, RngStream(0))
        with pytest.raises(ValueError):
            run_case_a(env, ConstantFast(1.0), ShieldConfig(), 0, RngStream(0))

    def test_x_path(self, stub_env_cls, base_constraints, base_rewards):
        env = stub_env_cls(base_constraints, base_rewards)
        records = run_episode(
            env, self.make_schedule_bundle(), ShieldConfig(horizon=1), 10, RngStream(1)
        )
        path = x_path(records)
        assert len(path) == 11
        assert path[0] == records[0].state.x
        assert path[1:] == [r.next_state.x for r in records]
        assert x_path([]) == []


class TestDegeneration:
    @pytest.mark.parametrize("seed", range(10))
    def test_case_a_bit_identical(
        self, seed, stub_env_cls, base_constraints, base_rewards
    ):
        from zone_rl.constraints import case_a_constraints

        env = stub_env_cls(case_a_constraints(base_constraints), base_rewards)
        bundle = degenerate_to_case_a(
            PolicyBundle(
                fast_policy=UniformFast((0.0, 1.0, 2.0)),
                long_policy=ConstantLong(0),
                switcher=ConstantSwitcher(SwitchDecision.NOOP),
                fast_magnitudes=(1.0, 2.0),
            )
        )
        shield = ShieldConfig(horizon=3, samples=4)
        direct = run_case_a(env, bundle.fast_policy, shield, 200, RngStream(seed))
        via_switching = run_episode(env, bundle, shield, 200, RngStream(seed))
        assert x_path(direct) == x_path(via_switching)
        for a, b in zip(direct, via_switching):
            assert a.executed == b.executed
            assert a.budgets == b.budgets
            assert a.base_reward == b.base_reward
            assert a.reshaped_reward == b.reshaped_reward
            assert a.verdict == b.verdict

    def test_degenerate_never_activates(self, stub_env_cls, base_constraints, base_rewards):
        from zone_rl.constraints import case_a_constraints

        env = stub_env_cls(case_a_constraints(base_constraints), base_rewards)
        bundle = degenerate_to_case_a(
            PolicyBundle(
                fast_policy=UniformFast((0.0, 1.0)),
                long_policy=ConstantLong(1),
                switcher=UniformSwitcher(),
                fast_magnitudes=(1.0,),
            )
        )
        records = run_episode(env, bundle, ShieldConfig(horizon=1), 100, RngStream(2))
        assert all(r.executed.kind is not ActionKind.LONG for r in records)
        assert all(r.next_state.z_long == 0.0 for r in records)


class TestEpisodeLogs:
    def test_json_lines_round_trip(self, stub_env_cls, base_constraints, base_rewards, tmp_path):
        env = stub_env_cls(base_constraints, base_rewards, sigma=0.5)
        bundle = PolicyBundle(
            fast_policy=ConstantFast(1.0),
            long_policy=ConstantLong(1),
            switcher=ScheduleSwitcher(long_times=frozenset({0}), fast_times=frozenset({30})),
            fast_magnitudes=(1.0,),
        )
        records = run_episode(env, bundle, ShieldConfig(horizon=2), 60, RngStream(7))
        path = tmp_path / "episode.jsonl"
        write_episode_log(path, records)
        assert read_episode_log(path) == records

    def test_round_trip_with_infinite_budget(
        self, stub_env_cls, base_constraints, base_rewards, tmp_path
    ):
        from zone_rl.constraints import case_a_constraints

        env = stub_env_cls(case_a_constraints(base_constraints), base_rewards)
        records = run_case_a(env, ConstantFast(1.0), ShieldConfig(horizon=1), 50, RngStream(1))
        path = tmp_path / "case_a.jsonl"
        write_episode_log(path, records)
        back = read_episode_log(path)
        assert back == records
        assert back[0].budgets[0] == float("inf")

    def test_record_dict_round_trip(self, stub_env_cls, base_constraints, base_rewards):
        env = stub_env_cls(base_constraints, base_rewards)
        bundle = PolicyBundle(
            fast_policy=ConstantFast(1.0),
            long_policy=ConstantLong(1),
            switcher=ScheduleSwitcher(long_times=frozenset({0})),
            fast_magnitudes=(1.0,),
        )
        for record in run_episode(env, bundle, ShieldConfig(horizon=2), 20, RngStream(5)):
            assert record_from_json_dict(record_to_json_dict(record)) == record

    def test_record_to_row_columns(self, stub_env_cls, base_constraints, base_rewards):
        env = stub_env_cls(base_constraints, base_rewards)
        records = run_case_a(env, ConstantFast(2.0), ShieldConfig(horizon=1), 3, RngStream(0))
        row = record_to_row(records[0])
        for column in ("t", "x", "z_long", "z_fast", "level", "eta_long", "eta_fast", "effective_long"):
            assert column in row
        assert row["t"] == 0
        assert row["x"] == records[0].state.x
        assert row["eta_fast"] == 2.0
