"""Matern type III thinning on ``S x [0, 1]``.

A point ``(s, t)`` is thinned by an earlier kept point ``(s*, t*)`` with
probability ``H = 1(t > t*) K(s; s*)``: a disc indicator for the classical
hard-core rule, or a Gaussian bump for the probabilistic variant.  Given the
observed (kept) points, the thinned points form a PPP with intensity
``lam * h`` where ``h = 1 - prod(1 - H)`` over observed points.

Timed patterns are :class:`~coxthin.pattern.MarkedPattern` objects with
``times`` set; labelled patterns additionally carry ``colours`` (0 thinned,
1 observed).  Edge effects are not corrected: points near the boundary are
shadowed only by observed points inside the domain.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import gammaln

from .errors import ParameterError, StructureError
from .pattern import Domain, MarkedPattern, _thin

TimedPattern = MarkedPattern

DEFAULT_QUAD_RES = 256


@dataclass(frozen=True)
class DiscShadow:
    """Deterministic shadow: everything strictly closer than ``R``."""

    R: float

    def __post_init__(self):
        if not (np.isfinite(self.R) and self.R >= 0):
            raise ParameterError(f"shadow radius must be non-negative, got {self.R}")

    def kernel(self, dist: np.ndarray) -> np.ndarray:
        return (dist < self.R).astype(float)


@dataclass(frozen=True)
class GaussianShadow:
    """Probabilistic shadow ``kappa * exp(-r^2 / (2 ell^2))``."""

    kappa: float
    ell: float

    def __post_init__(self):
        if not 0 < self.kappa <= 1:
            raise ParameterError(f"kappa must lie in (0, 1], got {self.kappa}")
        if not (np.isfinite(self.ell) and self.ell > 0):
            raise ParameterError(f"ell must be positive, got {self.ell}")

    def kernel(self, dist: np.ndarray) -> np.ndarray:
        return self.kappa * np.exp(-0.5 * (np.asarray(dist) / self.ell) ** 2)


Shadow = Union[DiscShadow, GaussianShadow]


def timed_pattern(locations, times, dom: Domain, colours=None) -> TimedPattern:
    """Validated timed pattern; tied time stamps are rejected."""
    return MarkedPattern(locations, dom, times=times, colours=colours)


def _require_times(pattern: TimedPattern, name: str = "pattern"):
    if pattern.times is None:
        raise StructureError(f"{name} has no time stamps")


def shadow_matrix(sh: Shadow, s, t, s_star, t_star) -> np.ndarray:
    """``H[i, j] = 1(t_i > t*_j) K(|s_i - s*_j|)`` for arrays of points."""
    s = np.atleast_2d(np.asarray(s, dtype=float))
    s_star = np.atleast_2d(np.asarray(s_star, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    t_star = np.atleast_1d(np.asarray(t_star, dtype=float))
    if len(s) == 0 or len(s_star) == 0:
        return np.zeros((len(s), len(s_star)))
    return (t[:, None] > t_star[None, :]) * sh.kernel(cdist(s, s_star))


def shadow_eval(sh: Shadow, s, t: float, s_star, t_star: float) -> float:
    """Probability that ``(s*, t*)`` shadows ``(s, t)``."""
    s = np.asarray(s, dtype=float).reshape(1, -1)
    s_star = np.asarray(s_star, dtype=float).reshape(1, -1)
    return float(shadow_matrix(sh, s, [t], s_star, [t_star])[0, 0])


def _one_minus_prod(H: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return -np.expm1(np.sum(np.log1p(-H), axis=1))


def combined_shadow_h(s, t, observed: TimedPattern, sh: Shadow) -> np.ndarray:
    """``h(s, t) = 1 - prod_j (1 - H(s, t, s_j, t_j))`` over observed points, vectorised in ``(s, t)``."""
    _require_times(observed, "observed")
    s = np.asarray(s, dtype=float).reshape(-1, observed.domain.d)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return np.clip(_one_minus_prod(shadow_matrix(sh, s, t, observed.locations, observed.times)), 0.0, 1.0)


def simulate_matern3(rng: np.random.Generator, dom: Domain, lam: float, sh: Shadow) -> tuple[TimedPattern, TimedPattern]:
    """Base PPP(lam) on ``S x [0, 1]``, then label points in time order.

    A point is thinned if any earlier kept point casts its shadow on it; for
    probabilistic shadows each earlier kept point gets its own Bernoulli draw.
    """
    if not (np.isfinite(lam) and lam > 0):
        raise ParameterError(f"lambda must be positive, got {lam}")
    n = rng.poisson(lam * dom.volume)
    locs = dom.uniform(rng, n)
    times = np.sort(rng.random(n))
    kept = np.zeros(n, dtype=bool)
    for i in range(n):
        prev = np.flatnonzero(kept[:i])
        if len(prev) == 0:
            kept[i] = True
            continue
        probs = sh.kernel(np.linalg.norm(locs[prev] - locs[i], axis=1))
        kept[i] = not np.any(rng.random(len(prev)) < probs)
    thinned = MarkedPattern._trusted(locs[~kept], dom, times=times[~kept])
    observed = MarkedPattern._trusted(locs[kept], dom, times=times[kept])
    return thinned, observed


def labelled(thinned: TimedPattern, observed: TimedPattern) -> TimedPattern:
    """Merge into one pattern with colours 0 (thinned) and 1 (observed)."""
    _require_times(thinned, "thinned")
    _require_times(observed, "observed")
    return MarkedPattern(np.vstack([thinned.locations, observed.locations]), observed.domain,
                         times=np.concatenate([thinned.times, observed.times]),
                         colours=np.r_[np.zeros(len(thinned), int), np.ones(len(observed), int)])


def log_label_scatter(pattern: TimedPattern, sh: Shadow) -> float:
    """Log probability of the labels given locations and times, evaluated in any point order.

    Point ``i`` survives with probability ``q_i = prod_j (1 - H_ij)^{c_j}``; the
    result is ``sum_i c_i log q_i + (1 - c_i) log(1 - q_i)``.
    """
    _require_times(pattern)
    if pattern.colours is None:
        raise StructureError("pattern has no labels")
    c = pattern.colours.astype(bool)
    if np.any(pattern.colours > 1):
        raise StructureError("labels must be 0 (thinned) or 1 (observed)")
    H = shadow_matrix(sh, pattern.locations, pattern.times, pattern.locations, pattern.times)
    with np.errstate(divide="ignore"):
        log_q = np.sum(np.log1p(-H[:, c]), axis=1)
        log_1mq = np.log(-np.expm1(log_q))
    return float(np.sum(np.where(c, log_q, log_1mq)))


def log_joint_density_m3(thinned: TimedPattern, observed: TimedPattern, dom: Domain, lam: float,
                         sh: Shadow) -> float:
    """``-lam|S| + (n0 + n1) log lam - log n0! - log n1! + sum log h(thinned) + sum log(1 - h(observed))``."""
    n0, n1 = len(thinned), len(observed)
    _require_times(thinned, "thinned")
    _require_times(observed, "observed")
    out = -lam * dom.volume + (n0 + n1) * np.log(lam) - gammaln(n0 + 1) - gammaln(n1 + 1)
    with np.errstate(divide="ignore"):
        if n0:
            out += np.sum(np.log(combined_shadow_h(thinned.locations, thinned.times, observed, sh)))
        if n1:
            out += np.sum(np.log1p(-combined_shadow_h(observed.locations, observed.times, observed, sh)))
    return float(out)


# integral of h over S x [0, 1] ---------------------------------------------------

def _interval_union_length(centres: np.ndarray, R: float, lo: float, hi: float) -> float:
    a = np.clip(np.sort(centres) - R, lo, hi)
    b = np.clip(np.sort(centres) + R, lo, hi)
    total, cur_a, cur_b = 0.0, None, None
    for x, y in zip(a, b):
        if cur_b is None or x > cur_b:
            if cur_b is not None:
                total += cur_b - cur_a
            cur_a, cur_b = x, y
        else:
            cur_b = max(cur_b, y)
    if cur_b is not None:
        total += cur_b - cur_a
    return float(total)


def _circle_line_params(p0, p1, c, R):
    """Parameters ``u in (0, 1)`` where segment ``p0 + u (p1 - p0)`` crosses the circle."""
    d = p1 - p0
    f = p0 - c
    a, b, cc = d @ d, 2 * f @ d, f @ f - R * R
    disc = b * b - 4 * a * cc
    if disc <= 0:
        return []
    sq = np.sqrt(disc)
    return [u for u in ((-b - sq) / (2 * a), (-b + sq) / (2 * a)) if 0 < u < 1]


def disc_union_area(centres: np.ndarray, R: float, dom: Domain) -> float:
    """Exact area of the union of radius-``R`` discs intersected with a rectangle.

    Uses Green's theorem: the boundary of the region is made of circle arcs
    lying inside the rectangle and outside every other disc, plus rectangle
    edge pieces lying inside some disc.
    """
    if R <= 0 or len(centres) == 0:
        return 0.0
    centres = np.unique(np.asarray(centres, dtype=float), axis=0)
    lo, hi = np.asarray(dom.lower, float), np.asarray(dom.upper, float)
    corners = [np.array([lo[0], lo[1]]), np.array([hi[0], lo[1]]),
               np.array([hi[0], hi[1]]), np.array([lo[0], hi[1]])]
    twice_area = 0.0

    def inside_any(pt, skip=-1):
        d2 = np.sum((centres - pt) ** 2, axis=1)
        if skip >= 0:
            d2[skip] = np.inf
        return bool(np.any(d2 < R * R))

    for i, c in enumerate(centres):
        cuts = [0.0, 2 * np.pi]
        for j, other in enumerate(centres):
            if j == i:
                continue
            dist = np.linalg.norm(other - c)
            if dist >= 2 * R or dist == 0:
                continue
            base = np.arctan2(other[1] - c[1], other[0] - c[0])
            half = np.arccos(dist / (2 * R))
            cuts += [(base - half) % (2 * np.pi), (base + half) % (2 * np.pi)]
        for k in range(2):
            for bound in (lo[k], hi[k]):
                if abs(bound - c[k]) < R:
                    off = (bound - c[k]) / R
                    ang = np.arccos(off) if k == 0 else np.arcsin(off)
                    pair = (ang, -ang) if k == 0 else (ang, np.pi - ang)
                    cuts += [a % (2 * np.pi) for a in pair]
        cuts = np.unique(cuts)
        for a0, a1 in zip(cuts[:-1], cuts[1:]):
            mid = 0.5 * (a0 + a1)
            pt = c + R * np.array([np.cos(mid), np.sin(mid)])
            if np.any(pt < lo) or np.any(pt > hi) or inside_any(pt, skip=i):
                continue
            twice_area += (R * R * (a1 - a0) + R * c[0] * (np.sin(a1) - np.sin(a0))
                           - R * c[1] * (np.cos(a1) - np.cos(a0)))

    for e in range(4):
        p0, p1 = corners[e], corners[(e + 1) % 4]
        us = [0.0, 1.0]
        for c in centres:
            us += _circle_line_params(p0, p1, c, R)
        us = np.unique(us)
        for u0, u1 in zip(us[:-1], us[1:]):
            mid = p0 + 0.5 * (u0 + u1) * (p1 - p0)
            if inside_any(mid):
                q0, q1 = p0 + u0 * (p1 - p0), p0 + u1 * (p1 - p0)
                twice_area += q0[0] * q1[1] - q1[0] * q0[1]
    return 0.5 * twice_area


def _shadow_areas(observed: TimedPattern, dom: Domain, sh: Shadow, res: int) -> np.ndarray:
    """Spatial integral of ``h`` on each time slab; entry ``k`` uses the ``k`` earliest observed points."""
    order = np.argsort(observed.times)
    locs = observed.locations[order]
    n = len(locs)
    areas = np.zeros(n + 1)
    if isinstance(sh, DiscShadow):
        for k in range(1, n + 1):
            if dom.d == 1:
                areas[k] = _interval_union_length(locs[:k, 0], sh.R, dom.lower[0], dom.upper[0])
            else:
                areas[k] = disc_union_area(locs[:k], sh.R, dom)
        return areas
    cells, cell_vol = dom.midpoint_grid(res)
    survive = np.ones(len(cells))
    for k in range(1, n + 1):
        survive *= 1.0 - sh.kernel(np.linalg.norm(cells - locs[k - 1], axis=1))
        areas[k] = cell_vol * float(np.sum(1.0 - survive))
    return areas


def integrate_shadow(observed: TimedPattern, dom: Domain, sh: Shadow, res: int = DEFAULT_QUAD_RES) -> float:
    """``int_S int_0^1 h(s, t) dt ds``.

    ``h`` is piecewise constant in time between sorted observed times, so the
    time integral is exact.  Disc shadows use exact union areas; other kernels
    use a ``res``-per-axis midpoint rule in space.
    """
    _require_times(observed, "observed")
    if len(observed) == 0:
        return 0.0
    t = np.sort(observed.times)
    widths = np.diff(np.r_[t, 1.0])          # slab after the k-th observed time
    areas = _shadow_areas(observed, dom, sh, res)
    return float(np.sum(widths * areas[1:]))


def log_marginal_density_m3(observed: TimedPattern, dom: Domain, lam: float, sh: Shadow, *,
                            res: int = DEFAULT_QUAD_RES, integral: float | None = None) -> float:
    """``-lam (|S| - int h) + n1 log lam - log n1! + sum log(1 - h(observed))``."""
    n1 = len(observed)
    if integral is None:
        integral = integrate_shadow(observed, dom, sh, res)
    out = -lam * (dom.volume - integral) + n1 * np.log(lam) - gammaln(n1 + 1)
    if n1:
        with np.errstate(divide="ignore"):
            out += np.sum(np.log1p(-combined_shadow_h(observed.locations, observed.times, observed, sh)))
    return float(out)


def log_conditional_ppp_density_m3(thinned: TimedPattern, observed: TimedPattern, dom: Domain, lam: float,
                                   sh: Shadow, *, res: int = DEFAULT_QUAD_RES,
                                   integral: float | None = None) -> float:
    """Log density of ``PPP(lam * h)`` on ``S x [0, 1]`` at the thinned pattern."""
    n0 = len(thinned)
    if integral is None:
        integral = integrate_shadow(observed, dom, sh, res)
    out = -lam * integral - gammaln(n0 + 1)
    if n0:
        with np.errstate(divide="ignore"):
            out += np.sum(np.log(lam * combined_shadow_h(thinned.locations, thinned.times, observed, sh)))
    return float(out)


def sample_conditional_thinned_m3(rng: np.random.Generator, observed: TimedPattern, dom: Domain, lam: float,
                                  sh: Shadow) -> TimedPattern:
    """Exact draw of the thinned points given the observed ones: PPP(lam) on ``S x [0, 1]`` thinned by ``h``."""
    _require_times(observed, "observed")
    n = rng.poisson(lam * dom.volume)
    proposals = np.column_stack([dom.uniform(rng, n), rng.random(n)])
    d = dom.d
    keep = _thin(rng, proposals, lam,
                 lambda x: lam * combined_shadow_h(x[:, :d], x[:, d], observed, sh))
    return MarkedPattern._trusted(proposals[keep, :d], dom, times=proposals[keep, d])


def min_pairwise_distance(points: np.ndarray) -> float:
    if len(points) < 2:
        return np.inf
    d = cdist(points, points)
    d[np.diag_indices_from(d)] = np.inf
    return float(d.min())


def density_chain_residual(rng: np.random.Generator, dom: Domain, lam: float, sh: Shadow,
                           res: int = DEFAULT_QUAD_RES) -> float:
    """``log_joint - log_marginal - log PPP(lam h)`` at a simulated observed set and a conditional draw."""
    _, observed = simulate_matern3(rng, dom, lam, sh)
    thinned = sample_conditional_thinned_m3(rng, observed, dom, lam, sh)
    integral = integrate_shadow(observed, dom, sh, res)
    return (log_joint_density_m3(thinned, observed, dom, lam, sh)
            - log_marginal_density_m3(observed, dom, lam, sh, integral=integral)
            - log_conditional_ppp_density_m3(thinned, observed, dom, lam, sh, integral=integral))


def full_shadow_instance(dom: Domain, area: float) -> tuple[TimedPattern, DiscShadow]:
    """One observed point at time 0 in the middle of ``dom`` whose disc shadow has the given area."""
    R = float(np.sqrt(area / np.pi))
    centre = 0.5 * (np.asarray(dom.lower) + np.asarray(dom.upper))
    if np.any(centre - R < np.asarray(dom.lower)) or np.any(centre + R > np.asarray(dom.upper)):
        raise ParameterError("requested shadow does not fit inside the domain")
    return timed_pattern(centre[None, :], [0.0], dom), DiscShadow(R)


def verify_matern3(rng: np.random.Generator, *, lam: float = 20.0, R: float = 0.1,
                   gaussian: GaussianShadow | None = None, n_configs: int = 100, n_hardcore: int = 10**4,
                   n_conditional: int = 10**5, cond_lam: float = 10.0, cond_area: float = 0.3,
                   dom: Domain | None = None) -> dict:
    """Density chain identity, hard-core property and conditional count law on the unit square by default."""
    from .stats import poisson_gof

    dom = Domain.unit_square() if dom is None else dom
    gaussian = GaussianShadow(0.8, 0.05) if gaussian is None else gaussian
    residuals = {
        "disc": [density_chain_residual(rng, dom, lam, DiscShadow(R)) for _ in range(n_configs)],
        "gaussian": [density_chain_residual(rng, dom, lam, gaussian) for _ in range(n_configs)],
    }
    violations = 0
    for _ in range(n_hardcore):
        _, observed = simulate_matern3(rng, dom, lam, DiscShadow(R))
        violations += min_pairwise_distance(observed.locations) < R
    conditional = None
    if n_conditional:
        observed, sh = full_shadow_instance(dom, cond_area)
        counts = np.array([len(sample_conditional_thinned_m3(rng, observed, dom, cond_lam, sh))
                           for _ in range(n_conditional)])
        conditional = {"mean": float(counts.mean()), "target_mean": cond_lam * cond_area,
                       **poisson_gof(counts, cond_lam * cond_area)}
    max_res = {k: float(np.max(np.abs(v), initial=0.0)) for k, v in residuals.items()}
    chain_ok = all(v < 1e-10 for v in max_res.values())
    return {
        "density_chain_max_abs": max_res,
        "density_chain_ok": chain_ok,
        "hardcore_runs": n_hardcore,
        "hardcore_violations": int(violations),
        "conditional_counts": conditional,
        "passed": bool(chain_ok and violations == 0 and (conditional is None or conditional["p_value"] > 0.01)),
    }
