import numpy as np
import pytest
from scipy.special import expit
from scipy.stats import norm

import oracles
from coxthin.errors import ParameterError, SamplingError
from coxthin.gp import CholeskyState, Kernel, mvn_logpdf
from coxthin.pattern import Domain, MarkedPattern, make_rng
from coxthin.sgcp import (
    AugmentedState,
    MoveProbs,
    SgcpParams,
    bdm_log_ratio,
    bdm_step,
    log_conditional_density_unnorm,
    log_joint_density,
    sample_conditional_bdm,
    sample_conditional_flawed_goncalves,
    sample_conditional_flawed_rao,
    simulate_sgcp,
    verify_appendix_b,
)
from coxthin.sgcp.bdm import initial_state
from coxthin.stats import batch_means_se, poisson_gof, two_sample_chi2

@pytest.fixture
def params(unit):
    return SgcpParams(3.0, Kernel(2.0), unit)

def _marked(dom, locs, marks):
    return MarkedPattern(np.asarray(locs, float).reshape(-1, 2), dom, marks=np.asarray(marks, float).reshape(-1, 1))

def test_params_validation(unit):
    with pytest.raises(ParameterError):
        SgcpParams(0.0, Kernel(1.0), unit)

def test_tiny_lambda_gives_empty(rng, unit):
    params = SgcpParams(1e-9, Kernel(2.0), unit)
    assert all(len(simulate_sgcp(rng, params)[1]) == 0 for _ in range(1000))

def test_huge_mean_keeps_everything(rng, unit):
    params = SgcpParams(20.0, Kernel(2.0, variance=1e-12), unit, mean=20.0)
    for _ in range(50):
        thinned, observed = simulate_sgcp(rng, params)
        assert len(thinned) == 0
    assert len(observed) > 0

def test_simulation_reproducible(params):
    a = simulate_sgcp(make_rng(9), params)
    b = simulate_sgcp(make_rng(9), params)
    assert a[0] == b[0] and a[1] == b[1]

def test_thinning_matches_grid_cox_small(unit):
    # a quick version of the acceptance-scale comparison
    report = verify_appendix_b(make_rng(4), SgcpParams(5.0, Kernel(2.0), unit), 4000, grid_res=32)
    assert report["count_test"]["p_value"] > 0.01
    assert all(t["p_value"] > 0.01 for t in report["pair_tests"])

def test_grid_comparison_independent_of_process_count(unit, monkeypatch):
    params = SgcpParams(5.0, Kernel(2.0), unit)
    reports = []
    for workers in ("1", "2"):
        monkeypatch.setenv("COXTHIN_THREADS", workers)
        reports.append(verify_appendix_b(make_rng(9), params, 4500, grid_res=16))
    assert reports[1]["workers"] == 2
    for key in ("mean_count", "count_test", "pair_tests"):
        assert reports[0][key] == reports[1][key]

def test_joint_density_both_empty(params, unit):
    empty = MarkedPattern.empty(unit, n_marks=1)
    assert log_joint_density(AugmentedState.build(empty, empty, params), params) == -params.lam_volume

def test_joint_density_single_observed(params, unit):
    g = 0.7
    state = AugmentedState.build(MarkedPattern.empty(unit, n_marks=1), _marked(unit, [[0.3, 0.6]], [g]), params)
    jitter = params.kernel.default_jitter
    expected = -params.lam_volume + np.log(params.lam) + norm.logpdf(g, 0, np.sqrt(1 + jitter)) + np.log(expit(g))
    assert log_joint_density(state, params) == pytest.approx(expected, abs=1e-12)

def test_swap_identity(rng, params, unit):
    for _ in range(20):
        n0, n1 = int(rng.integers(0, 4)), int(rng.integers(1, 4))
        locs, g = unit.uniform(rng, n0 + n1), rng.normal(0, 2, n0 + n1)
        thinned, observed = _marked(unit, locs[:n0], g[:n0]), _marked(unit, locs[n0:], g[n0:])
        before = log_joint_density(AugmentedState.build(thinned, observed, params), params)
        moved = MarkedPattern.concat([thinned, observed.select([0])])
        after = log_joint_density(AugmentedState.build(moved, observed.select(np.arange(1, n1)), params), params)
        gs = g[n0]
        expected = np.log((1 - expit(gs)) / expit(gs)) + np.log(n1 / (n0 + 1))
        assert after - before == pytest.approx(expected, abs=1e-10)

def test_conditional_with_no_thinned(params, unit, rng):
    obs = _marked(unit, unit.uniform(rng, 3), rng.normal(size=3))
    chol = CholeskyState.build(params.kernel, obs.locations)
    got = log_conditional_density_unnorm(MarkedPattern.empty(unit, n_marks=1), obs, params)
    assert got == pytest.approx(mvn_logpdf(obs.marks[:, 0], 0.0, chol), abs=1e-12)

def test_conditional_adding_negative_mark(params, unit, rng):
    obs = _marked(unit, unit.uniform(rng, 2), rng.normal(size=2))
    empty = MarkedPattern.empty(unit, n_marks=1)
    loc = np.array([0.42, 0.58])
    added = _marked(unit, [loc], [-20.0])
    diff = (log_conditional_density_unnorm(added, obs, params)
            - log_conditional_density_unnorm(empty, obs, params))
    cond = oracles.conditional_logpdf(params.kernel, params.kernel.default_jitter, obs.locations, obs.marks,
                                      np.zeros(1), loc, -20.0)
    assert diff == pytest.approx(np.log(params.lam) + cond, abs=1e-8)

def test_conditional_tracks_joint_differences(rng, params, unit):
    for _ in range(100):
        n1 = int(rng.integers(0, 4))
        obs = _marked(unit, unit.uniform(rng, n1), rng.normal(size=n1))
        pats = []
        for _ in range(2):
            n0 = int(rng.integers(0, 4))
            pats.append(_marked(unit, unit.uniform(rng, n0), rng.normal(size=n0)))
        dc = (log_conditional_density_unnorm(pats[0], obs, params)
              - log_conditional_density_unnorm(pats[1], obs, params))
        dj = (log_joint_density(AugmentedState.build(pats[0], obs, params), params)
              - log_joint_density(AugmentedState.build(pats[1], obs, params), params))
        assert abs(dc - dj) < 1e-10

def test_birth_ratio_example():
    assert np.exp(bdm_log_ratio("birth", 4, 10.0, MoveProbs(), log_w_new=np.log(0.5))) == pytest.approx(1.0)

def test_move_probs_validation():
    with pytest.raises(ParameterError):
        MoveProbs(0.5, 0.0, 0.5)
    with pytest.raises(ParameterError):
        MoveProbs(0.5, 0.5, 0.5)

def test_detailed_balance_sgcp():
    assert np.abs(oracles.sgcp_detailed_balance_gaps(make_rng(17), 200)).max() < 1e-8

def test_detailed_balance_catches_missing_factor(monkeypatch):
    real = oracles.bdm_log_ratio

    def wrong(kind, n0, *a, **kw):
        out = real(kind, n0, *a, **kw)
        return out + np.log(n0 + 1) if kind == "birth" else out

    monkeypatch.setattr(oracles, "bdm_log_ratio", wrong)
    assert np.abs(oracles.sgcp_detailed_balance_gaps(make_rng(17), 100)).max() > 1e-2

def test_death_and_move_rejected_when_empty(params, unit):
    state = initial_state(MarkedPattern.empty(unit, n_marks=1), params)
    rng = make_rng(1)
    for _ in range(50):
        assert bdm_step(rng, state, params, move_probs=(0.0, 0.0, 1.0)).n0 == 0

def test_bdm_step_keeps_factor_consistent(rng, params, unit):
    obs = _marked(unit, unit.uniform(rng, 3), rng.normal(size=3))
    state = initial_state(obs, params)
    for _ in range(200):
        state = bdm_step(rng, state, params)
        fresh = AugmentedState.build(state.thinned, state.observed, params)
        assert np.allclose(state.chol.factor, fresh.chol.factor, atol=1e-8)

def test_small_lambda_chain_empties(unit):
    params = SgcpParams(1e-3, Kernel(2.0), unit)
    init = _marked(unit, [[0.1, 0.1], [0.5, 0.5], [0.9, 0.2]], [0.0, 1.0, -1.0])
    counts = sample_conditional_bdm(make_rng(3), MarkedPattern.empty(unit, n_marks=1), params, 500, 10,
                                    init=init, n_burn=50, counts_only=True)
    assert np.mean(np.array(counts) == 0) > 0.99

def test_chain_started_at_truth_has_no_drift(unit):
    rng = make_rng(8)
    params = SgcpParams(20.0, Kernel(3.0), unit)
    thinned, observed = simulate_sgcp(rng, params)
    draws = sample_conditional_bdm(rng, observed, params, 1000, 10, init=thinned)
    logd = np.array([log_conditional_density_unnorm(t, observed, params) for t in draws])
    half = len(logd) // 2
    a, b = logd[:half], logd[half:]
    se = np.hypot(batch_means_se(a, 20), batch_means_se(b, 20))
    assert abs(a.mean() - b.mean()) < 4 * se

def test_bdm_reproducible(params, unit):
    obs = MarkedPattern.empty(unit, n_marks=1)
    a = sample_conditional_bdm(make_rng(2), obs, params, 50, 5, counts_only=True)
    b = sample_conditional_bdm(make_rng(2), obs, params, 50, 5, counts_only=True)
    assert a == b

def test_rao_empty_observed_matches_thinned_marginal(params, unit):
    rng = make_rng(21)
    empty = MarkedPattern.empty(unit, n_marks=1)
    rao = [len(sample_conditional_flawed_rao(rng, empty, params)) for _ in range(20000)]
    marg = [len(simulate_sgcp(rng, params)[0]) for _ in range(20000)]
    assert two_sample_chi2(rao, marg)["p_value"] > 0.01
    p_empty = np.mean(np.array(rao) == 0)
    se = np.sqrt(p_empty * (1 - p_empty) / len(rao))
    assert p_empty - np.exp(-params.lam_volume / 2) > 3 * se

def test_rao_reproducible(params, unit, rng):
    obs = _marked(unit, unit.uniform(rng, 2), [0.5, -0.5])
    assert (sample_conditional_flawed_rao(make_rng(5), obs, params)
            == sample_conditional_flawed_rao(make_rng(5), obs, params))

def test_goncalves_count_is_poisson_lambda(params, unit, rng):
    obs = _marked(unit, unit.uniform(rng, 2), [-1.0, 0.5])
    gen = make_rng(6)
    counts = [len(sample_conditional_flawed_goncalves(gen, obs, params)) for _ in range(3000)]
    assert poisson_gof(counts, params.lam)["p_value"] > 0.01
    assert (sample_conditional_flawed_goncalves(make_rng(5), obs, params)
            == sample_conditional_flawed_goncalves(make_rng(5), obs, params))

def test_goncalves_guards(params):
    wide = SgcpParams(3.0, Kernel(2.0), Domain((0, 0), (2, 1)))
    with pytest.raises(ParameterError):
        sample_conditional_flawed_goncalves(make_rng(1), MarkedPattern.empty(wide.dom, n_marks=1), wide)
    big = SgcpParams(200.0, Kernel(2.0), params.dom, mean=8.0)
    with pytest.raises(SamplingError):
        sample_conditional_flawed_goncalves(make_rng(1), MarkedPattern.empty(big.dom, n_marks=1), big, max_iter=5)

def test_tiny_lambda_samplers_empty(unit):
    params = SgcpParams(1e-9, Kernel(2.0), unit)
    empty = MarkedPattern.empty(unit, n_marks=1)
    rng = make_rng(0)
    assert all(len(sample_conditional_flawed_rao(rng, empty, params)) == 0 for _ in range(200))
    assert all(len(sample_conditional_flawed_goncalves(rng, empty, params)) == 0 for _ in range(200))
