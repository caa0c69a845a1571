import numpy as np
import pytest

from deepridge import theory
from deepridge.theory import (ConsistencyError, RiskScenario, TheoryParams,
                              ensemble_risk, flat_optima, flat_risk,
                              hetero_penalty_solution, monte_carlo_risk,
                              mp_stieltjes, mp_stieltjes_deriv, nu_family,
                              optimal_alpha, optimal_lambda, risk_curves,
                              sub_model_risk, xi, xi_deriv)


# --- resolvent trace (Marcenko-Pastur) ---------------------------------------

def test_golden_ratio_fixed_point():
    m = mp_stieltjes(1.0, 1.0)
    assert abs(m - 2.0 / (1.0 + np.sqrt(5.0))) < 1e-14
    assert abs(m - 1.0 / (1.0 + m)) < 1e-12


def test_stieltjes_against_mc_trace():
    # oracle: average normalized resolvent trace over random designs
    rng = np.random.default_rng(0)
    for lam, c in ((1.0, 1.0), (0.5, 2.0), (2.0, 0.5)):
        n = 400
        p = int(c * n)
        traces = []
        for _ in range(3):
            x = rng.standard_normal((n, p))
            mu = np.linalg.eigvalsh(x.T @ x / n)
            traces.append(np.mean(1.0 / (lam + mu)))
        assert abs(mp_stieltjes(lam, c) - np.mean(traces)) < 0.02


def test_stieltjes_limits():
    for lam in (0.3, 1.0, 7.0):
        assert abs(mp_stieltjes(lam, 1e-9) - 1.0 / (1.0 + lam)) < 1e-6
    for c in (0.2, 1.0, 5.0):
        assert abs(1e8 * mp_stieltjes(1e8, c) - 1.0) < 1e-5


def test_stieltjes_quadratic_residual_everywhere():
    for lam in np.geomspace(1e-3, 1e4, 30):
        for c in np.geomspace(0.05, 20.0, 30):
            m = mp_stieltjes(lam, c)
            resid = c * lam * m * m + ((1 - c) + lam) * m - 1.0
            assert abs(resid) < 1e-9


def test_deriv_matches_finite_differences():
    # the reported derivative is in the spectral argument: -d m / d lam
    for lam in (0.05, 1.0, 30.0):
        for c in (0.3, 1.0, 4.0):
            h = 1e-6 * lam
            fd = -(mp_stieltjes(lam + h, c) - mp_stieltjes(lam - h, c)) / (2 * h)
            an = mp_stieltjes_deriv(lam, c)
            assert abs(an - fd) < 1e-5 * abs(fd)


def test_deriv_low_complexity_limit():
    for lam in (0.5, 2.0):
        assert abs(mp_stieltjes_deriv(lam, 1e-9)
                   - 1.0 / (1.0 + lam) ** 2) < 1e-6


def test_deriv_positive_sign_sweep():
    for lam in np.geomspace(0.01, 100.0, 20):
        for c in np.geomspace(0.1, 10.0, 20):
            assert mp_stieltjes_deriv(lam, c) > 0


def test_positivity_validation():
    with pytest.raises(ValueError):
        mp_stieltjes(-1.0, 1.0)
    with pytest.raises(ValueError):
        mp_stieltjes(1.0, 0.0)
    with pytest.raises(ValueError):
        mp_stieltjes_deriv(0.0, 1.0)


# --- xi and the nu family ----------------------------------------------------

def test_xi_value_and_consistency():
    val = xi(1.0, 1.0)
    assert abs(val - 0.6180340) < 1e-6
    m = mp_stieltjes(1.0, 1.0)
    assert abs(val - (1 - m) / (1 - 1 + m)) < 1e-12


def test_xi_consistency_sweep():
    for lam in np.geomspace(1e-3, 1e4, 25):
        for c in np.geomspace(0.05, 20.0, 25):
            v = xi(lam, c)   # raises ConsistencyError on disagreement
            alt = (1 - lam * mp_stieltjes(lam, c)) / \
                (1 / c - 1 + lam * mp_stieltjes(lam, c))
            assert abs(v - alt) <= 1e-10 * max(1.0, abs(v))


def test_xi_limits():
    assert xi(1.0, 1e-9) < 1e-8
    lam = 1e7
    for c in (0.5, 3.0):
        assert abs(xi(lam, c) - c / lam) < 1e-2 * (c / lam)


def test_xi_deriv_negative():
    for lam in (0.1, 1.0, 50.0):
        for c in (0.2, 1.0, 8.0):
            assert xi_deriv(lam, c) < 0


def test_nu_values():
    nu, nu_prime, nu_hat = nu_family(1.0, 1.0)
    assert abs(nu - 0.3819660) < 1e-6
    assert nu > 0 and nu_prime < 0 and nu_hat > 0


def test_nu_sign_pattern_sweep():
    for lam in np.geomspace(1e-3, 1e4, 25):
        for c in np.geomspace(0.05, 20.0, 25):
            nu, nu_prime, nu_hat = nu_family(lam, c)
            assert nu > 0 and nu_prime < 0 and nu_hat > 0


def test_nu_against_mc_trace():
    # oracle: nu is the limit of p^-1 tr(S (lam I + S)^-1) for S = X'X/n
    rng = np.random.default_rng(1)
    for lam, c in ((0.05, 0.5), (1.0, 1.0), (0.5, 2.0)):
        n = 600
        p = int(c * n)
        vals = []
        for _ in range(3):
            x = rng.standard_normal((n, p))
            mu = np.linalg.eigvalsh(x.T @ x / n)
            vals.append(np.mean(mu / (lam + mu)))
        nu = nu_family(lam, c)[0]
        assert abs(nu - np.mean(vals)) < 0.02


# --- closed-form risks -------------------------------------------------------

def params_k3():
    return TheoryParams(c=(1.0, 1.0, 1.0), b=(0.5, 1.0, 1.5))


def test_sub_model_risk_alpha_zero():
    p = params_k3()
    for k in range(3):
        assert sub_model_risk(0.0, 2.0, k, p) == pytest.approx(p.b[k])


def test_optimal_lambda_closed_forms():
    single = TheoryParams(c=(1.0,), b=(1.0,))
    assert optimal_lambda(single, 0) == pytest.approx(1.0)
    two = TheoryParams(c=(0.5, 2.0), b=(1.0, 1.0))
    assert optimal_lambda(two, 0) == pytest.approx(2 * 0.5)
    assert optimal_lambda(two, 1) == pytest.approx(2 * 2.0)


def test_lambda_star_is_grid_minimum():
    p = params_k3()
    for k in range(3):
        lam_star = optimal_lambda(p, k)
        at_star = sub_model_risk(1.0, lam_star, k, p)
        for f in (0.5, 2.0):
            assert at_star <= sub_model_risk(1.0, f * lam_star, k, p)


def test_alpha_star_is_one_at_lambda_star():
    p = params_k3()
    for k in range(3):
        assert abs(optimal_alpha(optimal_lambda(p, k), p, k) - 1.0) < 1e-8


def test_consistent_estimation_limit():
    p = TheoryParams(c=(1e-6,), b=(1.0,))
    assert sub_model_risk(1.0, 1e-6, 0, p) < 1e-3


def test_ensemble_risk_reductions():
    p = params_k3()
    lams = [optimal_lambda(p, k) for k in range(3)]
    total = ensemble_risk((1.0, 1.0, 1.0), lams, p)
    parts = sum(sub_model_risk(1.0, lams[k], k, p) for k in range(3))
    assert total == pytest.approx(parts)
    single = TheoryParams(c=(1.0,), b=(1.0,))
    assert ensemble_risk((1.0,), (2.0,), single) == pytest.approx(
        sub_model_risk(1.0, 2.0, 0, single))
    # permuting the groups leaves the total invariant
    perm = TheoryParams(c=(1.0, 1.0, 1.0), b=(1.5, 0.5, 1.0))
    lams_perm = [optimal_lambda(perm, k) for k in range(3)]
    assert ensemble_risk((1,) * 3, lams_perm, perm) == pytest.approx(total)


def test_flat_risk_and_optima():
    p = params_k3()
    assert flat_risk(0.0, 1.0, p) == pytest.approx(p.b_bar)
    two = TheoryParams(c=(1.0, 1.0), b=(1.0, 1.0))
    lambda_bar, a_bar = flat_optima(two)
    assert lambda_bar == pytest.approx(2 * 1.0 / 2.0)
    assert abs(a_bar - 1.0) < 1e-8
    # lambda_bar minimizes the unit-scale flat risk on a local grid
    at = flat_risk(1.0, lambda_bar, two)
    for f in (0.5, 2.0):
        assert at <= flat_risk(1.0, f * lambda_bar, two)


def test_flat_requires_equal_aspects():
    p = TheoryParams(c=(1.0, 2.0), b=(1.0, 1.0))
    with pytest.raises(ValueError):
        flat_risk(1.0, 1.0, p)


# --- risk curves -------------------------------------------------------------

def test_risk_curves_single_group_coincide():
    # with one group the three estimators are the same problem
    p = TheoryParams(c=(1.0,), b=(2.0,))
    table = risk_curves(p, np.geomspace(0.1, 10, 7))
    np.testing.assert_allclose(table[:, 1], table[:, 2], rtol=1e-10)
    np.testing.assert_allclose(table[:, 2], table[:, 3], rtol=1e-10)


def test_risk_curves_crossover_exists():
    p = theory.default_curve_params()
    table = risk_curves(p, np.geomspace(0.1, 10, 25))
    flat, subopt = table[:, 1], table[:, 3]
    assert subopt[-1] < flat[-1]          # ensemble wins at high complexity
    assert np.any(subopt > flat)          # and can lose at low complexity


def test_risk_curves_optimal_below_suboptimal():
    p = theory.default_curve_params()
    table = risk_curves(p, np.geomspace(0.1, 10, 25))
    assert np.all(table[:, 2] <= table[:, 3] + 1e-10)


def test_risk_curves_vanish_at_zero_complexity():
    p = theory.default_curve_params()
    table = risk_curves(p, [1e-7])
    assert np.all(table[0, 1:] < 1e-3)


# --- heterogeneous penalties -------------------------------------------------

def flat_group():
    return TheoryParams(c=(3.0,), b=(3.0,))


def test_hetero_penalty_single_point_reduces_to_scale():
    p = flat_group()
    for lam in (0.5, 1.0, 10.0):
        sol = hetero_penalty_solution(p, (lam,))
        _, a_bar = flat_optima(p, lam)
        assert abs(sol.weights[0] - a_bar) < 1e-8
        # and the risk equals the optimally scaled single-penalty risk
        assert sol.optimal_risk == pytest.approx(flat_risk(a_bar, lam, p))


def test_hetero_penalty_feasibility_bound():
    p = flat_group()
    grid = (0.1, 1.0, 5.1, 20.1, 100.1, 1000.0)
    sol = hetero_penalty_solution(p, grid)
    singles = [flat_risk(flat_optima(p, lam)[1], lam, p) for lam in grid]
    assert sol.optimal_risk <= min(singles) + 1e-10


def test_hetero_penalty_dominates_best_member():
    p = flat_group()
    grid = (0.1, 1.0, 10.1, 100.1)
    sol = hetero_penalty_solution(p, grid)
    quad = sol.gamma_vec @ sol.weights
    best_single = max(sol.gamma_vec[i] ** 2 / sol.gram[i, i]
                      for i in range(len(grid)))
    assert quad >= best_single - 1e-12
    assert np.allclose(sol.gram, sol.gram.T)


def test_hetero_penalty_near_equal_pairs_use_limit_form():
    p = flat_group()
    lam = 1.0
    sol = hetero_penalty_solution(p, (lam, lam * (1 + 1e-8), 10.0))
    # the near-equal off-diagonal entry equals the analytic diagonal limit
    assert np.isfinite(sol.gram).all()
    assert abs(sol.gram[0, 1] - sol.gram[0, 0]) < 1e-6 * abs(sol.gram[0, 0])


def test_risk_report_coherent_with_components():
    p = params_k3()
    rep = theory.risk_report(p)
    assert rep.flat_risk == pytest.approx(
        flat_risk(1.0, rep.lambda_bar, p))
    assert rep.ensemble_optimal_risk == pytest.approx(
        ensemble_risk((1.0,) * 3, rep.lambda_star, p))
    assert all(abs(optimal_alpha(rep.lambda_bar, p, k) - rep.alpha_star[k])
               < 1e-12 for k in range(3))
    assert abs(rep.a_bar - 1.0) < 1e-8   # evaluated at its own lambda_bar


def test_hetero_penalty_duplicate_grid_rejected():
    with pytest.raises(ValueError, match="positions 1 and 3"):
        hetero_penalty_solution(flat_group(), (0.1, 1.0, 5.0, 1.0))


def test_hetero_penalty_requires_single_group():
    with pytest.raises(ValueError):
        hetero_penalty_solution(params_k3(), (0.1, 1.0))


# --- Monte Carlo oracle ------------------------------------------------------

def test_mc_zero_estimator_concentrates_on_total_signal():
    scenario = RiskScenario(n=100, p=(150, 150), b=(0.5, 1.5))
    (res,) = monte_carlo_risk(scenario, [("zero",)], replications=10, seed=3)
    assert abs(res.risk - 2.0) < max(3 * res.stderr, 0.1)


def test_mc_total_shrinkage_limit():
    scenario = RiskScenario(n=100, p=(200,), b=(1.2,))
    (res,) = monte_carlo_risk(scenario, [("flat", 1e8, 1.0)],
                              replications=6, seed=4)
    assert abs(res.risk - 1.2) < max(3 * res.stderr, 0.1)


def test_mc_matches_theory_mid_size():
    n = 200
    params = TheoryParams(c=(1.0, 1.0), b=(0.8, 1.2))
    scenario = RiskScenario(n=n, p=(n, n), b=params.b)
    lams = [optimal_lambda(params, k) for k in range(2)]
    results = monte_carlo_risk(
        scenario,
        [("submodel", 0, lams[0], 1.0),
         ("ensemble", lams, (1.0, 1.0)),
         ("flat", flat_optima(params)[0], 1.0)],
        replications=12, seed=9)
    expected = [
        sub_model_risk(1.0, lams[0], 0, params),
        ensemble_risk((1.0, 1.0), lams, params),
        flat_risk(1.0, flat_optima(params)[0], params),
    ]
    for res, exp in zip(results, expected):
        assert abs(res.risk - exp) < max(4 * res.stderr, 0.08 * exp)


def test_mc_reproducible_and_thread_invariant():
    scenario = RiskScenario(n=50, p=(60,), b=(1.0,))
    ests = [("flat", 1.0, 1.0), ("zero",)]
    a = monte_carlo_risk(scenario, ests, replications=6, seed=7)
    b = monte_carlo_risk(scenario, ests, replications=6, seed=7)
    c = monte_carlo_risk(scenario, ests, replications=6, seed=7, n_threads=4)
    assert [r.risk for r in a] == [r.risk for r in b] == [r.risk for r in c]


def test_mc_resource_guard():
    with pytest.raises(ValueError, match="resource"):
        RiskScenario(n=100_000, p=(100_000,), b=(1.0,))


def test_mc_rejects_unknown_estimator():
    scenario = RiskScenario(n=20, p=(10,), b=(1.0,))
    with pytest.raises(ValueError, match="unknown estimator"):
        monte_carlo_risk(scenario, [("wat",)], replications=2, seed=0)


def test_params_validation():
    with pytest.raises(ValueError):
        TheoryParams(c=(), b=())
    with pytest.raises(ValueError):
        TheoryParams(c=(1.0,), b=(1.0, 2.0))
    with pytest.raises(ValueError):
        TheoryParams(c=(-1.0,), b=(1.0,))
    p = params_k3()
    assert p.n_groups == 3
    assert p.b_bar == pytest.approx(3.0)


def test_csv_writers(tmp_path):
    table = risk_curves(TheoryParams(c=(1.0,), b=(1.0,)), [0.5, 1.0])
    path = tmp_path / "curves.csv"
    theory.write_risk_curves_csv(table, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "c,flat,ensemble_optimal,ensemble_suboptimal"
    assert len(lines) == 3

    scenario = RiskScenario(n=30, p=(20,), b=(1.0,))
    results = monte_carlo_risk(scenario, [("zero",)], replications=3, seed=0)
    mc_path = tmp_path / "mc.csv"
    theory.write_monte_carlo_csv(results, mc_path, scenario_label="toy")
    lines = mc_path.read_text().strip().splitlines()
    assert lines[0] == "scenario,estimator,risk,stderr"
    assert lines[1].startswith("toy,zero,")
