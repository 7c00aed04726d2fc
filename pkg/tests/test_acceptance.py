"""Acceptance gate: one test per release criterion, so a verbose run prints
one pass/fail line for each. The expensive artefacts (trained policy, seeded
evaluation runs, sweep, ablation) are built once per module and shared."""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np
import pytest

from zone_rl.cli import main
from zone_rl.config import ExperimentConfig
from zone_rl.controller import (
    ShieldConfig,
    audit_mdp_shield,
    run_case_a,
    run_episode,
    x_path,
)
from zone_rl.experiments import (
    prepare_policy,
    run_ablation,
    run_budget_sweep,
    run_seed,
    shield_from_config,
)
from zone_rl.glucose import GlucoseEnv
from zone_rl.metrics import time_above_below, time_in_range
from zone_rl.processes import SpectraProcess, spectra_step
from zone_rl.rng import RngStream
from zone_rl.tabular import (
    LearningSchedule,
    bellman_backup,
    build_fixture_mdp,
    extract_switching_policy,
    greedy_switch_decisions,
    run_q_learning,
    value_iteration,
)

FIXTURES = ("tiny", "small")
GLUCOSE_LADDER = (0.0, 0.2, 0.4, 0.6, 0.8)


# ---------------------------------------------------------------------------
# Shared expensive artefacts
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def default_config() -> ExperimentConfig:
    return ExperimentConfig()


@pytest.fixture(scope="module")
def trained(default_config):
    """The learned-tabular policy at default settings, trained once."""
    return prepare_policy(default_config)


@pytest.fixture(scope="module")
def shielded_runs(default_config, trained):
    """20 shielded evaluation seeds; the first five share seeds with the
    unshielded and directional comparisons."""
    bundle, env_config = trained
    shield = shield_from_config(default_config)
    return [run_seed(env_config, bundle, shield, seed) for seed in range(20)]


@pytest.fixture(scope="module")
def unshielded_runs(default_config, trained):
    bundle, env_config = trained
    shield = shield_from_config(default_config, enabled=False)
    return [run_seed(env_config, bundle, shield, seed) for seed in default_config.seeds]


@pytest.fixture(scope="module")
def sweep_result(default_config):
    return run_budget_sweep(default_config)


@pytest.fixture(scope="module")
def ablation_result(default_config):
    return run_ablation(default_config)


def all_seed_runs(shielded_runs, unshielded_runs, sweep_result, ablation_result):
    runs = list(shielded_runs) + list(unshielded_runs)
    for result in (sweep_result, ablation_result):
        for group in result.groups:
            runs.extend(group.seed_runs)
    return runs


# ---------------------------------------------------------------------------
# Criteria
# ---------------------------------------------------------------------------


def test_criterion_01_bellman_operator_contracts():
    start = time.perf_counter()
    for fixture in FIXTURES:
        mdp = build_fixture_mdp(fixture)
        rng = RngStream(0).child(f"acceptance-contraction-{fixture}")
        scale = mdp.delta / (1.0 - mdp.gamma)
        for _ in range(100):
            u = np.array([rng.uniform(-scale, scale) for _ in range(mdp.n_states)])
            v = np.array([rng.uniform(-scale, scale) for _ in range(mdp.n_states)])
            gap = float(np.abs(u - v).max())
            backed = float(np.abs(bellman_backup(u, mdp) - bellman_backup(v, mdp)).max())
            assert backed <= mdp.gamma * gap * (1.0 + 1e-12)
    assert time.perf_counter() - start < 10.0


def test_criterion_02_value_iteration_reaches_fixed_point():
    start = time.perf_counter()
    mdp = build_fixture_mdp("tiny")
    vi = value_iteration(mdp)
    assert vi.residual < 1e-9
    bellman_residual = float(np.abs(bellman_backup(vi.values, mdp) - vi.values).max())
    assert bellman_residual < 1e-9
    assert time.perf_counter() - start < 5.0


def test_criterion_03_q_learning_converges_on_five_seeds():
    start = time.perf_counter()
    mdp = build_fixture_mdp("tiny")
    reference = value_iteration(mdp).q_fixed_point
    schedule = LearningSchedule()
    for seed in range(5):
        outcome = run_q_learning(mdp, schedule, RngStream(seed), reference=reference)
        assert outcome.updates <= 1_000_000
        assert outcome.final_error < 1e-2, f"seed {seed}: error {outcome.final_error}"
    assert time.perf_counter() - start < 120.0


def test_criterion_04_extracted_regions_match_greedy_everywhere():
    for fixture in FIXTURES:
        mdp = build_fixture_mdp(fixture)
        q_star = value_iteration(mdp).q_greedy
        extracted = extract_switching_policy(q_star, mdp).decisions
        greedy = greedy_switch_decisions(q_star, mdp)
        matches = sum(a is b for a, b in zip(extracted, greedy))
        assert matches == mdp.n_states, f"{fixture}: {matches}/{mdp.n_states}"


def test_criterion_05_shielding_prevents_budget_violations(shielded_runs):
    # exact-model shielding on the discrete fixtures: exhaustive, zero breaches
    for fixture in FIXTURES:
        mdp = build_fixture_mdp(fixture)
        covered, breaches = audit_mdp_shield(mdp, ShieldConfig())
        nonneg = int((~mdp.budget_negative).sum())
        assert covered == nonneg * mdp.n_actions
        assert breaches == [], f"{fixture}: shielded breaches {breaches[:3]}"
        _, unshielded = audit_mdp_shield(mdp, ShieldConfig(enabled=False))
        assert unshielded, f"{fixture}: audit is vacuous without the shield"
    # stochastic glucose environment: 20 seeds x 3 days, shield on
    negative = sum(run.budget_negative_steps for run in shielded_runs)
    assert len(shielded_runs) == 20
    assert negative == 0


def test_criterion_06_spectral_decay_chains_absorb():
    proc = SpectraProcess(levels=GLUCOSE_LADDER, stay_prob=0.9, drop_ratio=0.5)
    rng = RngStream(0).child("acceptance-spectra")
    for chain in range(10_000):
        chain_rng = rng.child(f"chain-{chain}")
        level = spectra_step(proc, True, chain_rng)
        assert level == 1.0  # activation pins the full effect
        reactivate_at = 250 if chain % 10 == 0 else None
        for step in range(1, 501):
            if step == reactivate_at:
                level = spectra_step(proc, True, chain_rng)
                assert level == 1.0
                continue
            nxt = spectra_step(proc, False, chain_rng)
            assert nxt <= level, f"chain {chain} rose {level} -> {nxt}"
            level = nxt
            if level == 0.0 and (reactivate_at is None or step > reactivate_at):
                break
        assert level == 0.0, f"chain {chain} failed to absorb within 500 steps"


def test_criterion_07_degenerate_bundle_reproduces_impulse_loop():
    config = ExperimentConfig(policy="degenerate-case-a")
    bundle, env_config = prepare_policy(config)
    shield = ShieldConfig()
    env = GlucoseEnv(env_config)
    for seed in range(10):
        via_switching = run_episode(env, bundle, shield, env_config.horizon, RngStream(seed))
        via_impulse_only = run_case_a(
            env, bundle.fast_policy, shield, env_config.horizon, RngStream(seed)
        )
        assert x_path(via_switching) == x_path(via_impulse_only), f"seed {seed} diverged"


def test_criterion_08_metric_partition_on_every_trajectory(
    shielded_runs, unshielded_runs, sweep_result, ablation_result
):
    runs = all_seed_runs(shielded_runs, unshielded_runs, sweep_result, ablation_result)
    assert len(runs) >= 60
    for run in runs:
        tir = time_in_range(run.glucose_path)
        tar, tbr = time_above_below(run.glucose_path)
        assert abs(tir + tar + tbr - 100.0) < 1e-9
        assert run.summary.tir == pytest.approx(tir)


def test_criterion_09_directional_experiment_checks(
    default_config, shielded_runs, unshielded_runs, sweep_result, ablation_result
):
    # shielding strictly lowers time-below-range for the learned policy
    n = len(default_config.seeds)
    shielded_tbr = sum(run.summary.tbr for run in shielded_runs[:n]) / n
    unshielded_tbr = sum(run.summary.tbr for run in unshielded_runs) / n
    assert shielded_tbr < unshielded_tbr, (shielded_tbr, unshielded_tbr)

    # a larger intervention budget buys more time in range
    tir_by_budget = {group.label: group.row.means["tir"] for group in sweep_result.groups}
    assert tir_by_budget["budget-90"] > tir_by_budget["budget-40"], tir_by_budget

    # richer observations and active constraints never hurt time in range
    tir_by_arm = {group.label: group.row.means["tir"] for group in ablation_result.groups}
    assert (
        tir_by_arm["carbs-and-constraints"]
        >= tir_by_arm["constraints-only"]
        >= tir_by_arm["no-carbs-no-constraints"]
    ), tir_by_arm


def test_criterion_10_cli_rerun_is_byte_identical(tmp_path, capsys):
    document = {
        "scenario": "AGVP",
        "policy": "learned-tabular",
        "seeds": [0, 1],
        "days": 1,
        "train_episodes": 20,
        "shield_horizon": 12,
        "shield_samples": 4,
    }
    config = tmp_path / "config.json"
    config.write_text(json.dumps(document))

    def run(out: Path) -> dict[str, bytes]:
        assert main(["run-glucose", "--config", str(config), "--out", str(out)]) == 0
        capsys.readouterr()
        return {
            str(p.relative_to(out)): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()
        }

    first = run(tmp_path / "first")
    second = run(tmp_path / "second")
    assert first and first == second
