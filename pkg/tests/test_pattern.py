import numpy as np
import pytest
from scipy.special import gammaln
from scipy.stats import poisson

from coxthin.errors import ContractViolationError, DomainError, ParameterError, StructureError
from coxthin.pattern import (
    Domain,
    MarkedPattern,
    PointPattern,
    log_fpp_density,
    log_ppp_density,
    make_rng,
    sample_homogeneous_ppp,
    sample_nonhom_ppp_by_thinning,
    spawn_rngs,
)
from coxthin.stats import poisson_gof, two_sample_chi2


def test_domain_geometry():
    dom = Domain((0.0, -1.0), (2.0, 1.0))
    assert dom.d == 2 and dom.volume == 4.0
    assert dom.diameter == pytest.approx(np.sqrt(8))
    assert dom.contains([[1.0, 0.0], [2.5, 0.0]]).tolist() == [True, False]
    cells, vol = dom.midpoint_grid(4)
    assert cells.shape == (16, 2) and vol == 0.25
    assert cells[1, 0] > cells[0, 0] and cells[1, 1] == cells[0, 1]


@pytest.mark.parametrize("lo,hi", [((0, 0), (0, 1)), ((0,), (np.inf,)), ((0, 0, 0), (1, 1, 1))])
def test_domain_rejects_bad_bounds(lo, hi):
    with pytest.raises(ParameterError):
        Domain(lo, hi)


def test_point_pattern_validation(unit):
    with pytest.raises(DomainError):
        PointPattern([[0.5, 1.5]], unit)
    with pytest.raises(ParameterError):
        PointPattern([[0.1, 0.1], [0.1, 0.1]], unit)
    assert len(PointPattern(np.zeros((0, 2)), unit)) == 0


def test_marked_pattern_validation(unit):
    with pytest.raises(ParameterError):
        MarkedPattern([[0.1, 0.1], [0.2, 0.2]], unit, times=[0.3, 0.3])
    with pytest.raises(StructureError):
        MarkedPattern([[0.1, 0.1]], unit, marks=np.zeros((2, 1)))
    with pytest.raises(StructureError):
        MarkedPattern([[0.1, 0.1]], unit, colours=[-1])
    pat = MarkedPattern([[0.1, 0.1], [0.2, 0.3]], unit, marks=[1.0, 2.0], colours=[0, 1])
    assert pat.n_marks == 1
    assert pat.select(pat.colours == 1) == MarkedPattern([[0.2, 0.3]], unit, marks=[2.0], colours=[1])
    assert MarkedPattern.concat([pat.select([0]), pat.select([1])]) == pat


def test_rng_streams_reproducible():
    assert make_rng(3).random() == make_rng(3).random()
    a, b = spawn_rngs(3, 2)
    assert a.random() != b.random()
    assert spawn_rngs(3, 2)[1].random() == spawn_rngs(3, 2)[1].random()


def test_homogeneous_moments(rng, unit):
    counts = np.array([len(sample_homogeneous_ppp(rng, unit, 2.0)) for _ in range(20000)])
    assert counts.mean() == pytest.approx(2.0, abs=4 * np.sqrt(2 / 20000))
    assert counts.var() == pytest.approx(2.0, rel=0.05)
    wide = Domain((0, 0), (2, 1))
    counts = np.array([len(sample_homogeneous_ppp(rng, wide, 5.0)) for _ in range(5000)])
    assert counts.mean() == pytest.approx(10.0, abs=4 * np.sqrt(10 / 5000))


def test_homogeneous_count_law_chi_square(unit):
    rng = make_rng(11)
    counts = np.array([len(sample_homogeneous_ppp(rng, unit, 3.0)) for _ in range(10**5)])
    assert poisson_gof(counts, 3.0)["p_value"] > 0.01


def test_homogeneous_rejects_bad_lambda(rng, unit):
    for lam in (0.0, -1.0, np.nan):
        with pytest.raises(ParameterError):
            sample_homogeneous_ppp(rng, unit, lam)


def test_thinning_degenerate_intensities(rng, unit):
    full = [len(sample_nonhom_ppp_by_thinning(rng, unit, 4.0, lambda x: np.full(len(x), 4.0)))
            for _ in range(20000)]
    direct = [len(sample_homogeneous_ppp(rng, unit, 4.0)) for _ in range(20000)]
    assert two_sample_chi2(full, direct)["p_value"] > 0.01
    assert all(len(sample_nonhom_ppp_by_thinning(rng, unit, 4.0, lambda x: np.zeros(len(x)))) == 0
               for _ in range(200))


def test_thinning_contract_violation(rng, unit):
    with pytest.raises(ContractViolationError):
        for _ in range(100):
            sample_nonhom_ppp_by_thinning(rng, unit, 1.0, lambda x: np.full(len(x), 2.0))


def _inversion_sampler(rng, lam):
    # PPP(lam * s) on [0, 1]: Poisson(lam / 2) points with CDF s^2.
    n = rng.poisson(lam / 2)
    return np.sqrt(rng.random(n))


def test_linear_intensity_matches_inversion():
    rng = make_rng(5)
    dom = Domain.unit_interval()
    lam, reps = 6.0, 20000
    thin = [sample_nonhom_ppp_by_thinning(rng, dom, lam, lambda x: lam * x[:, 0]).points[:, 0]
            for _ in range(reps)]
    inv = [_inversion_sampler(rng, lam) for _ in range(reps)]
    counts = np.array([len(x) for x in thin])
    assert counts.mean() == pytest.approx(3.0, abs=4 * np.sqrt(3 / reps))
    assert two_sample_chi2(counts, [len(x) for x in inv])["p_value"] > 0.01
    pooled_thin = np.concatenate(thin)
    pooled_inv = np.concatenate(inv)
    bins = np.linspace(0, 1, 11)
    assert two_sample_chi2(np.digitize(pooled_thin, bins), np.digitize(pooled_inv, bins))["p_value"] > 0.01


def test_ppp_density_closed_forms(unit):
    empty = PointPattern(np.zeros((0, 2)), unit)
    assert log_ppp_density(empty, unit, np.log(4.0)) == pytest.approx(-4.0)
    one = PointPattern([[0.3, 0.4]], unit)
    assert log_ppp_density(one, unit, np.log(3.0)) == pytest.approx(np.log(3) - 3)
    two = PointPattern([[0.3, 0.4], [0.7, 0.1]], unit)
    assert log_ppp_density(two, unit, np.log(2.0)) == pytest.approx(2 * np.log(2) - 2 - np.log(2))


def test_ppp_density_callable_and_domain_error(unit):
    pts = PointPattern([[0.25, 0.5], [0.75, 0.5]], unit)
    # log intensity log(2 + x); integral over the unit square is 2.5
    val = log_ppp_density(pts, unit, lambda x: np.log(2 + x[:, 0]))
    assert val == pytest.approx(-2.5 - np.log(2) + np.log(2.25) + np.log(2.75), abs=1e-9)
    with pytest.raises(DomainError):
        log_ppp_density(np.array([[1.5, 0.5]]), unit, 0.0)


def test_fpp_density_agrees_with_ppp(rng, unit):
    lam = 3.7
    for n in range(6):
        pat = PointPattern(unit.uniform(rng, n), unit)
        fpp = log_fpp_density(pat, lambda k: poisson.pmf(k, lam * unit.volume),
                              lambda p: -len(p) * np.log(unit.volume))
        assert fpp == pytest.approx(log_ppp_density(pat, unit, np.log(lam)), abs=1e-12)


def test_fpp_density_edge_cases(rng, unit):
    assert log_fpp_density(PointPattern(np.zeros((0, 2)), unit), lambda n: 0.25, lambda p: 0.0) == np.log(0.25)
    assert log_fpp_density(PointPattern([[0.1, 0.2]], unit), lambda n: 0.0, lambda p: 0.0) == -np.inf
    pts = unit.uniform(rng, 5)

    def scatter(p):  # symmetric but non-uniform
        x = p.points
        return float(np.sum(np.log(2 * x[:, 0])))

    a = log_fpp_density(PointPattern(pts, unit), lambda n: 0.1, scatter)
    b = log_fpp_density(PointPattern(pts[::-1], unit), lambda n: 0.1, scatter)
    assert a == b


def test_remark_convention_differs_by_factorial(rng, unit):
    # Under the alternative measure with 1/n! folded in, the density is n! p_n pi_n;
    # both conventions must assign the same probability to a count event.
    lam = 2.5
    pat = PointPattern(unit.uniform(rng, 3), unit)
    ours = log_ppp_density(pat, unit, np.log(lam))
    alt = gammaln(4) + ours
    assert alt == pytest.approx(-lam + 3 * np.log(lam), abs=1e-12)
