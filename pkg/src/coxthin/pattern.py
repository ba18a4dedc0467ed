"""Rectangular domains, point-pattern containers, Poisson samplers and densities.

All densities are taken against the counting-scattering measure: a pattern of
``n`` points has density ``p_n * pi_n(x_1, ..., x_n)`` with respect to
``sum_n Lebesgue(S^n)``.  For a Poisson process of intensity ``lam(.)`` this is

    exp(-int lam) / n! * prod_i lam(x_i)

and the ``1/n!`` is always applied explicitly.
"""
from __future__ import annotations

import os

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import ContractViolationError, DomainError, ParameterError, StructureError

__all__ = [
    "Domain",
    "PointPattern",
    "MarkedPattern",
    "make_rng",
    "spawn_rngs",
    "sample_homogeneous_ppp",
    "sample_nonhom_ppp_by_thinning",
    "log_ppp_density",
    "log_fpp_density",
]


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator (Philox) for a 64-bit seed."""
    return np.random.Generator(np.random.Philox(int(seed)))


def max_workers(n_jobs: int) -> int:
    """Process count for ``n_jobs`` independent jobs, capped by ``COXTHIN_THREADS``."""
    cap = os.environ.get("COXTHIN_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(n_jobs, limit))


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """``n`` statistically independent Philox streams derived from one seed."""
    children = np.random.SeedSequence(int(seed)).spawn(n)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box ``[lower, upper]`` in one or two dimensions."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if len(lo) != len(hi) or len(lo) not in (1, 2):
            raise ParameterError(f"domain must be 1D or 2D, got bounds {lo}, {hi}")
        if not all(np.isfinite(lo + hi)):
            raise ParameterError("domain bounds must be finite")
        if any(u <= l for l, u in zip(lo, hi)):
            raise ParameterError(f"upper bounds must exceed lower bounds: {lo}, {hi}")

    @classmethod
    def unit_square(cls) -> "Domain":
        return cls((0.0, 0.0), (1.0, 1.0))

    @classmethod
    def unit_interval(cls) -> "Domain":
        return cls((0.0,), (1.0,))

    @property
    def d(self) -> int:
        return len(self.lower)

    @property
    def sides(self) -> np.ndarray:
        return np.asarray(self.upper) - np.asarray(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    @property
    def diameter(self) -> float:
        return float(np.sqrt(np.sum(self.sides**2)))

    def contains(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, self.d)
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    def uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return lo + (hi - lo) * rng.random((n, self.d))

    def midpoint_grid(self, res: int) -> tuple[np.ndarray, float]:
        """Cell centres of a ``res``-per-axis grid (x varies fastest) and the cell volume."""
        axes = [l + (np.arange(res) + 0.5) * (u - l) / res for l, u in zip(self.lower, self.upper)]
        if self.d == 1:
            cells = axes[0][:, None]
        else:
            yy, xx = np.meshgrid(axes[1], axes[0], indexing="ij")
            cells = np.column_stack([xx.ravel(), yy.ravel()])
        return cells, self.volume / res**self.d


def _as_points(points, d: int) -> np.ndarray:
    arr = np.array(points, dtype=float)
    if arr.size == 0:
        return np.zeros((0, d))
    return arr.reshape(-1, d)


def _frozen(arr: np.ndarray | None) -> np.ndarray | None:
    if arr is not None:
        arr.setflags(write=False)
    return arr


def _check_inside(points: np.ndarray, domain: Domain):
    inside = domain.contains(points)
    if not np.all(inside):
        bad = int(np.flatnonzero(~inside)[0])
        raise DomainError(f"point {bad} at {points[bad].tolist()} lies outside {domain}")


@dataclass(frozen=True, eq=False)
class PointPattern:
    """Finite set of distinct locations inside a domain (stored as an ``(n, d)`` array)."""

    points: np.ndarray
    domain: Domain

    def __post_init__(self):
        pts = _as_points(self.points, self.domain.d)
        _check_inside(pts, self.domain)
        if len(pts) > 1 and len(np.unique(pts, axis=0)) != len(pts):
            raise ParameterError("duplicate locations are not allowed in a PointPattern")
        object.__setattr__(self, "points", _frozen(pts))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def n(self) -> int:
        return len(self.points)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PointPattern)
            and self.domain == other.domain
            and np.array_equal(self.points, other.points)
        )


@dataclass(frozen=True, eq=False)
class MarkedPattern:
    """Locations with optional time stamps, real-vector marks and integer colours.

    Optional fields are either present for every point or absent (``None``).
    Times, when present, must be strictly distinct.  Unlike :class:`PointPattern`,
    repeated locations are permitted; the discretised colouring oracle needs them.
    """

    locations: np.ndarray
    domain: Domain
    times: np.ndarray | None = None
    marks: np.ndarray | None = None
    colours: np.ndarray | None = None

    def __post_init__(self):
        loc = _as_points(self.locations, self.domain.d)
        n = len(loc)
        _check_inside(loc, self.domain)
        times = marks = colours = None
        if self.times is not None:
            times = np.asarray(self.times, dtype=float).reshape(-1)
            if len(times) != n:
                raise StructureError(f"{len(times)} times for {n} points")
            if np.any((times < 0) | (times > 1)):
                raise DomainError("times must lie in [0, 1]")
            if len(np.unique(times)) != n:
                raise ParameterError("time stamps must be strictly distinct")
        if self.marks is not None:
            marks = np.asarray(self.marks, dtype=float)
            if marks.ndim == 1:
                marks = marks[:, None]
            if marks.ndim != 2 or len(marks) != n:
                raise StructureError(f"{len(marks)} mark rows for {n} points")
        if self.colours is not None:
            colours = np.asarray(self.colours).reshape(-1)
            if len(colours) != n:
                raise StructureError(f"{len(colours)} colours for {n} points")
            if n and (not np.issubdtype(colours.dtype, np.integer) or colours.min() < 0):
                raise StructureError("colours must be non-negative integers")
            colours = colours.astype(np.int64)
        object.__setattr__(self, "locations", _frozen(loc))
        object.__setattr__(self, "times", _frozen(times))
        object.__setattr__(self, "marks", _frozen(marks))
        object.__setattr__(self, "colours", _frozen(colours))

    @classmethod
    def _trusted(cls, locations, domain, times=None, marks=None, colours=None) -> "MarkedPattern":
        # Internal fast path for samplers whose outputs are valid by construction.
        obj = object.__new__(cls)
        object.__setattr__(obj, "locations", _frozen(np.asarray(locations, dtype=float).reshape(-1, domain.d)))
        object.__setattr__(obj, "domain", domain)
        object.__setattr__(obj, "times", _frozen(None if times is None else np.asarray(times, dtype=float)))
        object.__setattr__(obj, "marks", _frozen(None if marks is None else np.asarray(marks, dtype=float)))
        object.__setattr__(obj, "colours", _frozen(None if colours is None else np.asarray(colours, dtype=np.int64)))
        return obj

    @classmethod
    def empty(cls, domain: Domain, *, n_marks: int | None = None, timed: bool = False,
              coloured: bool = False) -> "MarkedPattern":
        return cls._trusted(
            np.zeros((0, domain.d)),
            domain,
            times=np.zeros(0) if timed else None,
            marks=np.zeros((0, n_marks)) if n_marks else None,
            colours=np.zeros(0, dtype=np.int64) if coloured else None,
        )

    def __len__(self) -> int:
        return len(self.locations)

    @property
    def n(self) -> int:
        return len(self.locations)

    @property
    def n_marks(self) -> int:
        return 0 if self.marks is None else self.marks.shape[1]

    def select(self, index) -> "MarkedPattern":
        """Sub-pattern at an integer index array or boolean mask."""
        idx = np.asarray(index)
        pick = (lambda a: None if a is None else a[idx])
        return MarkedPattern._trusted(self.locations[idx], self.domain, pick(self.times),
                                      pick(self.marks), pick(self.colours))

    def replace(self, **fields) -> "MarkedPattern":
        kw = dict(locations=self.locations, domain=self.domain, times=self.times,
                  marks=self.marks, colours=self.colours)
        kw.update(fields)
        return MarkedPattern(**kw)

    def to_point_pattern(self) -> PointPattern:
        return PointPattern(self.locations, self.domain)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MarkedPattern) or self.domain != other.domain:
            return False
        for name in ("locations", "times", "marks", "colours"):
            a, b = getattr(self, name), getattr(other, name)
            if (a is None) != (b is None) or (a is not None and not np.array_equal(a, b)):
                return False
        return True

    @staticmethod
    def concat(parts: Sequence["MarkedPattern"]) -> "MarkedPattern":
        if not parts:
            raise StructureError("concat needs at least one pattern")
        domain = parts[0].domain

        def stack(name, axis_shape):
            vals = [getattr(p, name) for p in parts]
            if all(v is None for v in vals):
                return None
            if any(v is None for v in vals):
                raise StructureError(f"field {name!r} present in some patterns only")
            return np.concatenate(vals, axis=0) if axis_shape else np.concatenate(vals)

        return MarkedPattern(
            np.concatenate([p.locations for p in parts], axis=0),
            domain,
            times=stack("times", False),
            marks=stack("marks", True),
            colours=stack("colours", False),
        )


def _check_positive(name: str, value: float):
    if not np.isfinite(value) or value <= 0:
        raise ParameterError(f"{name} must be a positive finite number, got {value}")


def sample_homogeneous_ppp(rng: np.random.Generator, dom: Domain, lam: float) -> PointPattern:
    """Poisson(lam * |S|) points scattered uniformly on ``dom``."""
    _check_positive("lambda", lam)
    n = rng.poisson(lam * dom.volume)
    return PointPattern(dom.uniform(rng, n), dom)


def _thin(rng, proposals: np.ndarray, lambda_max: float, intensity: Callable) -> np.ndarray:
    if len(proposals) == 0:
        return np.zeros(len(proposals), dtype=bool)
    values = np.asarray(intensity(proposals), dtype=float).reshape(-1)
    if np.any(values > lambda_max) or np.any(values < 0) or not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero((values > lambda_max) | (values < 0) | ~np.isfinite(values))[0])
        raise ContractViolationError(
            f"intensity {values[bad]} at {proposals[bad].tolist()} is outside [0, {lambda_max}]"
        )
    return rng.random(len(proposals)) * lambda_max < values


def sample_nonhom_ppp_by_thinning(rng: np.random.Generator, dom: Domain, lambda_max: float,
                                  intensity: Callable[[np.ndarray], np.ndarray]) -> PointPattern:
    """Lewis-Shedler thinning of a homogeneous PPP(lambda_max).

    ``intensity`` maps an ``(m, d)`` array of locations to ``m`` values in
    ``[0, lambda_max]``; every proposed point is kept independently with
    probability ``intensity(x) / lambda_max``.
    """
    _check_positive("lambda_max", lambda_max)
    base = sample_homogeneous_ppp(rng, dom, lambda_max).points
    keep = _thin(rng, base, lambda_max, intensity)
    return PointPattern(base[keep], dom)


def _locations_of(pattern, d: int) -> np.ndarray:
    if isinstance(pattern, PointPattern):
        return pattern.points
    if isinstance(pattern, MarkedPattern):
        return pattern.locations
    return _as_points(pattern, d)


def log_ppp_density(pattern, dom: Domain, log_intensity, *, grid_res: int = 256,
                    integral: float | None = None) -> float:
    """Log density of ``PPP(exp(log_intensity))`` at ``pattern`` (counting-scattering measure).

    ``log_intensity`` is either a constant or a vectorised callable.  For a
    callable, ``int lam`` is computed by the midpoint rule on a ``grid_res``
    grid unless ``integral`` is supplied.
    """
    pts = _locations_of(pattern, dom.d)
    _check_inside(pts, dom)
    n = len(pts)
    if callable(log_intensity):
        if integral is None:
            cells, cell_vol = dom.midpoint_grid(grid_res)
            integral = float(np.sum(np.exp(log_intensity(cells))) * cell_vol)
        point_terms = float(np.sum(log_intensity(pts))) if n else 0.0
    else:
        log_c = float(log_intensity)
        if integral is None:
            integral = float(np.exp(log_c) * dom.volume)
        point_terms = n * log_c
    return -integral - float(gammaln(n + 1)) + point_terms


def log_fpp_density(pattern, count_pmf: Callable[[int], float],
                    log_scatter: Callable[[object], float]) -> float:
    """``log p_n + log pi_n(pattern)`` for a finite point process given by counts and scattering."""
    n = len(pattern)
    p = float(count_pmf(n))
    if p <= 0:
        return -np.inf
    if n == 0:
        return float(np.log(p))
    return float(np.log(p) + log_scatter(pattern))
