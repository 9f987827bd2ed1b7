import json

import numpy as np
import pytest

from multinoise.mals import (
    design_inputs,
    empirical_moments,
    estimate_covariance,
    estimate_nominal,
    mals,
)
from multinoise.moment_oracle import lift, propagate_first, propagate_second
from multinoise.system_model import (
    CovarianceNoise,
    FixedInitial,
    InputSchedule,
    RolloutSet,
    ZeroNoise,
    make_system,
    simulate_rollouts,
)

from conftest import BENCH_A, BENCH_B, BENCH_SIGMA_A, BENCH_SIGMA_B


# --- input design ---------------------------------------------------------


def test_design_inputs_deterministic_zero_cov():
    sched = design_inputs(1, 4, seed=3, input_law="deterministic")
    assert np.all(sched.ubar == 0)
    assert sched.law == "deterministic"


def test_design_inputs_uniform_means_support():
    sched = design_inputs(3, 50, seed=1)
    assert np.all(sched.nu >= 0.0) and np.all(sched.nu <= 1.0)


def test_design_inputs_wishart_scalar_mean():
    # 1-dim Wishart W(0.1, 1) is 0.1 * chi^2_1: mean 0.1, var 0.02
    sched = design_inputs(1, 100_000, seed=5)
    draws = sched.ubar[:, 0, 0]
    assert np.all(draws >= 0)
    se = np.sqrt(0.02 / len(draws))
    assert abs(draws.mean() - 0.1) <= 3 * se


def test_design_inputs_wishart_matrix_psd():
    sched = design_inputs(3, 200, seed=6)
    for U in sched.ubar:
        assert np.min(np.linalg.eigvalsh(U)) >= -1e-12


def test_design_inputs_rejects_bad_args():
    with pytest.raises(ValueError):
        design_inputs(0, 4)
    with pytest.raises(ValueError):
        design_inputs(1, 4, mean_law="cauchy")
    with pytest.raises(ValueError):
        design_inputs(1, 4, wishart_scale=-1.0)


# --- empirical moments ------------------------------------------------------


def test_single_noiseless_rollout_moments_exact(zero_init):
    s = make_system(BENCH_A, BENCH_B, ZeroNoise())
    sched = design_inputs(1, 4, seed=48, input_law="deterministic")
    rollouts = simulate_rollouts(s, sched, zero_init, 1, seed=0)
    em = empirical_moments(rollouts)
    mu = propagate_first(BENCH_A, BENCH_B, sched, np.zeros(2))
    assert np.allclose(em.mu, mu, atol=1e-14)


def test_mirrored_rollouts_cancel_mean_not_second_moment(bench_schedule):
    x = np.linspace(1.0, 10.0, (bench_schedule.ell + 1) * 2).reshape(-1, 2)
    states = np.stack([x, -x])
    inputs = np.zeros((2, bench_schedule.ell, 1))
    rollouts = RolloutSet(states=states, inputs=inputs, schedule=bench_schedule, seed=0)
    em = empirical_moments(rollouts)
    assert np.all(em.mu == 0)
    assert np.all(np.abs(em.x_t[1:]) > 0)


def test_empirical_mean_within_three_se(bench_system, bench_schedule, zero_init):
    n_r = 100_000
    rollouts = simulate_rollouts(bench_system, bench_schedule, zero_init, n_r, seed=31)
    em = empirical_moments(rollouts)
    mu = propagate_first(BENCH_A, BENCH_B, bench_schedule, np.zeros(2))
    for t in range(bench_schedule.ell + 1):
        se = rollouts.states[:, t, :].std(axis=0, ddof=1) / np.sqrt(n_r)
        assert np.all(np.abs(em.mu[t] - mu[t]) <= 3 * se + 1e-12)


def test_empirical_moments_rejects_empty(bench_schedule):
    rollouts = RolloutSet(
        states=np.zeros((0, 5, 2)), inputs=np.zeros((0, 4, 1)), schedule=bench_schedule, seed=0
    )
    with pytest.raises(ValueError):
        empirical_moments(rollouts)


# --- the two least-squares solves -------------------------------------------


def test_oracle_moments_recover_exactly(bench_system, bench_schedule):
    tr = propagate_second(bench_system, bench_schedule, np.zeros(2))
    A_hat, B_hat, diag = estimate_nominal(tr)
    assert np.linalg.norm(np.hstack([A_hat, B_hat]) - np.hstack([BENCH_A, BENCH_B]), 2) <= 1e-10
    assert not diag["used_pinv_z"]
    sa, sb, diag_d = estimate_covariance(tr, A_hat, B_hat)
    ld = lift(bench_system)
    err = np.linalg.norm(np.hstack([sa, sb]) - np.hstack([ld.sigma_a_tilde, ld.sigma_b_tilde]), 2)
    assert err <= 1e-10
    assert not diag_d["used_pinv_d"]


def test_zero_noise_any_nr_exact_recovery(zero_init):
    # deterministic inputs: noiseless rollouts equal their means, so the
    # averaged moments are exact and both solves recover the truth
    s = make_system(BENCH_A, BENCH_B, ZeroNoise())
    sched = design_inputs(1, 4, seed=48, input_law="deterministic")
    from multinoise.moment_oracle import assemble_population, check_excitation

    reg, _ = assemble_population(s, sched, np.zeros(2))
    assert check_excitation(reg, 2, 1).pass_d
    for n_r in (1, 3):
        res = mals(s, sched, zero_init, n_r, seed=2)
        assert res.errors["err_AB"] <= 1e-9
        assert res.errors["err_Sigma"] <= 1e-8


def test_zero_noise_covariance_estimate_shrinks(zero_init):
    # with stochastic inputs the only estimation noise is input sampling;
    # the covariance estimate still tends to zero as rollouts accumulate
    s = make_system(BENCH_A, BENCH_B, ZeroNoise())
    sched = design_inputs(1, 4, seed=48)
    med = {}
    for n_r in (1000, 100_000):
        runs = [mals(s, sched, zero_init, n_r, seed=300 + r).errors["err_Sigma"] for r in range(5)]
        med[n_r] = np.median(runs)
    assert med[100_000] < med[1000]
    assert med[100_000] <= 0.1


def test_benchmark_relative_error_at_1e5(bench_system, bench_schedule, zero_init):
    res = mals(bench_system, bench_schedule, zero_init, 100_000, seed=90000)
    assert res.errors["err_Sigma_norm"] <= 0.15
    assert res.errors["err_AB_norm"] <= 0.05


def test_error_shrinks_by_roughly_sqrt_nr(bench_system, bench_schedule, zero_init):
    errs = {}
    for n_r in (100, 10_000):
        runs = [
            mals(bench_system, bench_schedule, zero_init, n_r, seed=500 + r).errors["err_AB"]
            for r in range(8)
        ]
        errs[n_r] = np.median(runs)
    ratio = errs[100] / errs[10_000]
    assert 3.0 <= ratio <= 35.0  # nominal rate sqrt(100) = 10


def test_rollout_ingestion_bitwise_identical(bench_system, bench_schedule, zero_init):
    rollouts = simulate_rollouts(bench_system, bench_schedule, zero_init, 500, seed=7)
    direct = mals(bench_system, bench_schedule, zero_init, 500, seed=7)
    via_set = mals(rollouts, truth=bench_system)
    assert np.array_equal(direct.A_hat, via_set.A_hat)
    assert np.array_equal(direct.sigma_a_tilde_hat, via_set.sigma_a_tilde_hat)
    via_json = mals(RolloutSet.from_json(rollouts.to_json()), truth=bench_system)
    assert np.array_equal(direct.A_hat, via_json.A_hat)
    assert np.array_equal(direct.sigma_b_tilde_hat, via_json.sigma_b_tilde_hat)


def test_rollout_permutation_invariance(bench_system, bench_schedule, zero_init):
    rollouts = simulate_rollouts(bench_system, bench_schedule, zero_init, 400, seed=8)
    perm = np.random.default_rng(0).permutation(400)
    shuffled = RolloutSet(
        states=rollouts.states[perm],
        inputs=rollouts.inputs[perm],
        schedule=rollouts.schedule,
        seed=rollouts.seed,
    )
    a = mals(rollouts, truth=bench_system)
    b = mals(shuffled, truth=bench_system)
    assert np.allclose(a.nominal(), b.nominal(), atol=1e-12)
    assert np.allclose(a.covariance(), b.covariance(), atol=1e-10)


def test_pseudoinverse_fallback_recorded():
    s = make_system(BENCH_A, BENCH_B, CovarianceNoise(BENCH_SIGMA_A, BENCH_SIGMA_B))
    sched = InputSchedule(nu=np.zeros((4, 1)), ubar=np.zeros((4, 1, 1)), law="deterministic")
    res = mals(s, sched, FixedInitial(np.zeros(2)), 50, seed=1)
    assert res.diagnostics["used_pinv_z"]
    assert res.diagnostics["used_pinv_d"]
    assert res.diagnostics["lambda_min_zz"] <= 1e-10 * max(res.diagnostics["lambda_max_zz"], 0.0)
    assert np.all(np.isfinite(res.nominal()))


def test_estimation_result_json(bench_system, bench_schedule, zero_init):
    res = mals(bench_system, bench_schedule, zero_init, 200, seed=4)
    d = json.loads(res.to_json())
    assert set(d) == {
        "A_hat",
        "B_hat",
        "SigmaA_tilde_hat",
        "SigmaB_tilde_hat",
        "diagnostics",
        "errors",
    }
    assert np.array(d["A_hat"]).shape == (2, 2)
    assert np.array(d["SigmaA_tilde_hat"]).shape == (3, 3)
    assert "lambda_min_zz" in d["diagnostics"]
