import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from coxthin import io
from coxthin.colouring import log_multinomial
from coxthin.gp import CholeskyState, Kernel, chol_extend, chol_remove
from coxthin.matern3 import DiscShadow, GaussianShadow, combined_shadow_h, disc_union_area, timed_pattern
from coxthin.mtsgcp.model import log_sigma, sigma
from coxthin.pattern import Domain, MarkedPattern

UNIT = Domain.unit_square()
coords = st.floats(0.0, 1.0, allow_nan=False)
points = st.lists(st.tuples(coords, coords), min_size=1, max_size=12, unique=True).map(np.array)
logits = arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 4)),
                elements=st.floats(-700, 700, allow_nan=False))


@given(logits)
def test_sigma_is_a_probability_vector(g):
    s = sigma(g)
    assert np.all(s >= 0) and np.allclose(s.sum(axis=-1), 1.0)
    assert np.all(log_sigma(g) <= 0)


@given(st.lists(st.integers(0, 8), min_size=2, max_size=5))
def test_multinomial_term_symmetric_and_nonnegative(counts):
    assert log_multinomial(counts) >= -1e-12
    assert np.isclose(log_multinomial(counts), log_multinomial(counts[::-1]))


@settings(max_examples=40, suppress_health_check=[HealthCheck.too_slow])
@given(points, st.lists(st.integers(0, 11), max_size=6), st.floats(0.5, 8.0))
def test_downdates_track_fresh_factor(pts, removals, rho):
    dists = np.linalg.norm(pts[:, None] - pts[None], axis=-1) + np.eye(len(pts))
    if dists.min() < 1e-3:
        return
    k = Kernel(rho)
    state = CholeskyState.empty(k, 2)
    for x in pts:
        state = chol_extend(state, x)
    for r in removals:
        if state.n == 0:
            break
        state = chol_remove(state, r % state.n)
    fresh = CholeskyState.build(k, state.locations)
    assert np.allclose(state.factor, fresh.factor, atol=1e-7)


@given(points, st.floats(0.0, 0.7))
def test_disc_union_bounds(centres, R):
    area = disc_union_area(centres, R, UNIT)
    single = max(disc_union_area(c[None], R, UNIT) for c in centres)
    assert single - 1e-12 <= area <= min(1.0, len(centres) * np.pi * R**2) + 1e-12


@given(points, st.floats(0.01, 1.0), st.floats(0.01, 0.5), st.floats(0.0, 1.0))
def test_combined_shadow_grows_with_more_observed(centres, kappa, ell, t):
    times = np.linspace(0.0, 0.9, len(centres))
    sh = GaussianShadow(kappa, ell)
    query = np.array([[0.5, 0.5], [0.1, 0.9]])
    full = combined_shadow_h(query, [t, t], timed_pattern(centres, times, UNIT), sh)
    fewer = combined_shadow_h(query, [t, t], timed_pattern(centres[:-1], times[:-1], UNIT), sh) \
        if len(centres) > 1 else np.zeros(2)
    assert np.all((0 <= full) & (full <= 1)) and np.all(full >= fewer - 1e-15)


@settings(max_examples=30, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(points, st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False))
def test_pattern_csv_roundtrip(tmp_path_factory, pts, scale):
    marks = np.linspace(-1, 1, len(pts)) * scale
    pat = MarkedPattern(pts, UNIT, marks=marks)
    path = io.write_pattern_csv(tmp_path_factory.mktemp("rt") / "p.csv", pat)
    assert io.read_pattern_csv(path, UNIT) == pat
