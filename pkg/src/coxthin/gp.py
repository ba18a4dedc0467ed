"""Gaussian-process machinery: kernels, LMC covariances, incremental Cholesky factors.

Multivariate (LMC) covariance matrices use a point-major layout: entry
``i * p + k`` is channel ``k`` at point ``i``.  A :class:`CholeskyState` always
factors ``Sigma(locations) + jitter * I`` in that layout, with ``p = 1`` for a
scalar kernel.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.fft
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist

from .errors import ParameterError, StructureError
from .pattern import Domain, MarkedPattern, PointPattern

log = logging.getLogger(__name__)

__all__ = [
    "Kernel",
    "LMCParams",
    "CholeskyState",
    "cov_matrix",
    "lmc_cov_matrix",
    "chol_extend",
    "chol_remove",
    "conditional_gaussian",
    "mvn_logpdf",
    "GridFieldSampler",
]

JITTER_SCALE = 1e-8
LOG_2PI = float(np.log(2 * np.pi))


def _pts(points) -> np.ndarray:
    if isinstance(points, PointPattern):
        return points.points
    if isinstance(points, MarkedPattern):
        return points.locations
    arr = np.asarray(points, dtype=float)
    return arr[:, None] if arr.ndim == 1 else arr


@dataclass(frozen=True)
class Kernel:
    """Exponential covariance ``variance * exp(-rho * r)``."""

    rho: float
    variance: float = 1.0
    kind: str = "exponential"

    def __post_init__(self):
        if self.kind != "exponential":
            raise ParameterError(f"unsupported kernel kind {self.kind!r}")
        if not (np.isfinite(self.rho) and self.rho > 0):
            raise ParameterError(f"kernel range must be positive, got {self.rho}")
        if not (np.isfinite(self.variance) and self.variance > 0):
            raise ParameterError(f"kernel variance must be positive, got {self.variance}")

    p = 1

    def __call__(self, r):
        return self.variance * np.exp(-self.rho * np.asarray(r, dtype=float))

    @property
    def default_jitter(self) -> float:
        return JITTER_SCALE * self.variance

    def cross_cov(self, x1, x2) -> np.ndarray:
        x1, x2 = _pts(x1), _pts(x2)
        if len(x1) == 0 or len(x2) == 0:
            return np.zeros((len(x1), len(x2)))
        return self(cdist(x1, x2))


@dataclass(frozen=True, eq=False)
class LMCParams:
    """Linear model of coregionalization ``g(s) = A w(s) + mu`` with ``w_j ~ GP(0, exp(-rho_j r))``."""

    A: np.ndarray
    rho: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        rho = np.atleast_1d(np.asarray(self.rho, dtype=float))
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        p = A.shape[0]
        if A.shape != (p, p) or rho.shape != (p,) or mu.shape != (p,):
            raise ParameterError(f"inconsistent LMC shapes A{A.shape} rho{rho.shape} mu{mu.shape}")
        if abs(np.linalg.det(A)) <= 1e-10:
            raise ParameterError("coregionalization matrix A must be full rank (|det A| > 1e-10)")
        if np.any(~np.isfinite(rho)) or np.any(rho <= 0):
            raise ParameterError(f"ranges must be positive, got {rho}")
        for name, v in (("A", A), ("rho", rho), ("mu", mu)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def p(self) -> int:
        return self.A.shape[0]

    @property
    def AAt(self) -> np.ndarray:
        return self.A @ self.A.T

    @property
    def default_jitter(self) -> float:
        return JITTER_SCALE * float(np.max(np.diag(self.AAt)))

    def cross_cov(self, x1, x2) -> np.ndarray:
        x1, x2 = _pts(x1), _pts(x2)
        p = self.p
        if len(x1) == 0 or len(x2) == 0:
            return np.zeros((len(x1) * p, len(x2) * p))
        decay = np.exp(-cdist(x1, x2)[:, :, None] * self.rho)  # (n1, n2, p)
        blocks = np.einsum("km,lm,ijm->ikjl", self.A, self.A, decay)
        return blocks.reshape(len(x1) * p, len(x2) * p)

    def pair_cov(self, r: float) -> np.ndarray:
        """Cross-covariance ``Cov(g(s), g(t))`` for ``|s - t| = r``."""
        return (self.A * np.exp(-self.rho * r)) @ self.A.T

    def __eq__(self, other):
        return (isinstance(other, LMCParams) and np.array_equal(self.A, other.A)
                and np.array_equal(self.rho, other.rho) and np.array_equal(self.mu, other.mu))


CovModel = Union[Kernel, LMCParams]


def cov_matrix(kernel: Kernel, pts) -> np.ndarray:
    """``Sigma_ij = C(|x_i - x_j|)`` for the scalar kernel (no jitter)."""
    x = _pts(pts)
    return kernel.cross_cov(x, x)


def lmc_cov_matrix(params: LMCParams, pts) -> np.ndarray:
    """Point-major ``(n p, n p)`` covariance of the LMC field at ``pts`` (no jitter)."""
    x = _pts(pts)
    return params.cross_cov(x, x)


def _factor(model: CovModel, x: np.ndarray, jitter: float) -> np.ndarray:
    n = len(x) * model.p
    if n == 0:
        return np.zeros((0, 0))
    cov = model.cross_cov(x, x)
    cov[np.diag_indices(n)] += jitter
    return cholesky(cov, lower=True, check_finite=False)


@dataclass(frozen=True, eq=False)
class CholeskyState:
    """Lower factor of ``Sigma(locations) + jitter * I`` for a kernel or LMC model.

    Treated as an immutable snapshot: updates return new states.
    """

    locations: np.ndarray
    factor: np.ndarray
    model: CovModel
    jitter: float

    @classmethod
    def build(cls, model: CovModel, locations, jitter: float | None = None) -> "CholeskyState":
        """From-scratch factorization; raises ``LinAlgError`` if not positive definite."""
        x = _pts(locations).copy()
        jit = model.default_jitter if jitter is None else float(jitter)
        return cls(x, _factor(model, x, jit), model, jit)

    @classmethod
    def empty(cls, model: CovModel, d: int, jitter: float | None = None) -> "CholeskyState":
        return cls.build(model, np.zeros((0, d)), jitter)

    @property
    def n(self) -> int:
        return len(self.locations)

    @property
    def p(self) -> int:
        return self.model.p

    @property
    def dim(self) -> int:
        return self.factor.shape[0]

    def covariance(self) -> np.ndarray:
        """``Sigma + jitter * I`` reconstructed from the factor."""
        return self.factor @ self.factor.T

    def log_det(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.factor))))

    def solve(self, b: np.ndarray) -> np.ndarray:
        """``(Sigma + jitter I)^{-1} b``."""
        return cho_solve((self.factor, True), b, check_finite=False)


def chol_extend(state: CholeskyState, new_point) -> CholeskyState:
    """Append one location (``p`` rows) in O(n^2)."""
    x_new = np.asarray(new_point, dtype=float).reshape(1, -1)
    if state.n and x_new.shape[1] != state.locations.shape[1]:
        raise StructureError("new point dimension does not match the state")
    model, p, L = state.model, state.p, state.factor
    locations = np.vstack([state.locations.reshape(-1, x_new.shape[1]), x_new])
    c_new = model.cross_cov(x_new, x_new)
    c_new[np.diag_indices(p)] += state.jitter
    if state.n == 0:
        try:
            return CholeskyState(locations, cholesky(c_new, lower=True, check_finite=False),
                                 model, state.jitter)
        except LinAlgError:
            pass
    else:
        b = solve_triangular(L, model.cross_cov(state.locations, x_new), lower=True, check_finite=False)
        schur = c_new - b.T @ b
        try:
            l_new = cholesky(schur, lower=True, check_finite=False)
            m = state.dim
            out = np.zeros((m + p, m + p))
            out[:m, :m] = L
            out[m:, :m] = b.T
            out[m:, m:] = l_new
            return CholeskyState(locations, out, model, state.jitter)
        except LinAlgError:
            pass
    log.warning("incremental Cholesky extension lost positive definiteness; refactorizing %d points",
                len(locations))
    return CholeskyState.build(model, locations, state.jitter)


def _rank_one_update(L: np.ndarray, x: np.ndarray) -> None:
    """In place: ``L L^T + x x^T`` -> ``L' L'^T`` (``L`` lower triangular)."""
    x = x.copy()
    n = len(x)
    for k in range(n):
        lkk = L[k, k]
        r = np.hypot(lkk, x[k])
        c, s = r / lkk, x[k] / lkk
        L[k, k] = r
        if k + 1 < n:
            L[k + 1:, k] = (L[k + 1:, k] + s * x[k + 1:]) / c
            x[k + 1:] = c * x[k + 1:] - s * L[k + 1:, k]


def chol_remove(state: CholeskyState, index: int) -> CholeskyState:
    """Drop location ``index`` (its ``p`` rows); the trailing block gets a rank-``p`` update."""
    n, p = state.n, state.p
    if not 0 <= index < n:
        raise IndexError(f"index {index} out of range for {n} locations")
    locations = np.delete(state.locations, index, axis=0)
    a, b = index * p, (index + 1) * p
    L = state.factor
    keep = np.r_[0:a, b:state.dim]
    out = L[np.ix_(keep, keep)].copy()
    tail = out[a:, a:]
    if tail.size:
        for col in range(p):
            _rank_one_update(tail, L[b:, a + col])
        if not np.all(np.isfinite(tail)) or np.any(np.diag(tail) <= 0):
            log.warning("Cholesky downdate became unstable; refactorizing %d points", len(locations))
            return CholeskyState.build(state.model, locations, state.jitter)
        out[a:, a:] = tail
    return CholeskyState(locations, out, state.model, state.jitter)


def conditional_gaussian(state: CholeskyState, known_values, new_points, *, mean_known=0.0,
                         mean_new=0.0, include_jitter: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and covariance of the field at ``new_points`` given values at ``state.locations``.

    Values and means are point-major flat vectors.  With ``include_jitter`` the
    new points carry the same diagonal jitter as the factored matrix, so that
    the result is an exact conditional of the jittered joint Gaussian.
    """
    x_new = _pts(new_points)
    y = np.asarray(known_values, dtype=float).reshape(-1)
    if len(y) != state.dim:
        raise StructureError(f"{len(y)} known values for a state of dimension {state.dim}")
    model = state.model
    prior_cov = model.cross_cov(x_new, x_new)
    if include_jitter:
        prior_cov[np.diag_indices_from(prior_cov)] += state.jitter
    m_new = np.broadcast_to(np.asarray(mean_new, dtype=float), (len(prior_cov),)).copy()
    if state.n == 0:
        return m_new, prior_cov
    m_known = np.broadcast_to(np.asarray(mean_known, dtype=float), y.shape)
    b = solve_triangular(state.factor, model.cross_cov(state.locations, x_new), lower=True,
                         check_finite=False)
    alpha = solve_triangular(state.factor, y - m_known, lower=True, check_finite=False)
    return m_new + b.T @ alpha, prior_cov - b.T @ b


def mvn_logpdf(values, mean, chol: CholeskyState) -> float:
    """``log N(values | mean, Sigma + jitter I)`` using the stored factor."""
    v = np.asarray(values, dtype=float).reshape(-1)
    if len(v) != chol.dim:
        raise StructureError(f"{len(v)} values for a factor of dimension {chol.dim}")
    if chol.dim == 0:
        return 0.0
    resid = v - np.broadcast_to(np.asarray(mean, dtype=float), v.shape)
    z = solve_triangular(chol.factor, resid, lower=True, check_finite=False)
    return float(-0.5 * z @ z - 0.5 * chol.log_det() - 0.5 * chol.dim * LOG_2PI)


class GridFieldSampler:
    """Stationary field on a regular midpoint grid by circulant embedding.

    Negative embedding eigenvalues (the 2D exponential kernel yields small
    ones) are clipped to zero; the clipped share of the spectrum is reported
    in ``clipped_fraction``.  Samples have shape ``(size, res, res)`` indexed
    ``[..., iy, ix]`` in 2D and ``(size, res)`` in 1D.
    """

    def __init__(self, kernel: Kernel, dom: Domain, res: int, pad: int = 2):
        self.kernel, self.dom, self.res, self.pad = kernel, dom, int(res), int(pad)
        h = dom.sides / self.res
        m = self.pad * self.res
        lag = np.minimum(np.arange(m), m - np.arange(m))
        if dom.d == 1:
            c = kernel(lag * h[0])
            eig = scipy.fft.fft(c).real
        else:
            # axis 0 is y, axis 1 is x
            r = np.sqrt((lag[:, None] * h[1]) ** 2 + (lag[None, :] * h[0]) ** 2)
            eig = scipy.fft.fft2(kernel(r)).real
        neg = eig < 0
        self.clipped_fraction = float(-eig[neg].sum() / np.abs(eig).sum())
        self.min_eig_ratio = float(eig.min() / eig.max())
        eig[neg] = 0.0
        self._scale = np.sqrt(eig / eig.size)
        self.cells, self.cell_volume = dom.midpoint_grid(self.res)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        shape = self._scale.shape
        n_pairs = (size + 1) // 2
        # real and imaginary parts give two independent fields per transform
        z = rng.standard_normal((n_pairs, *shape, 2)).view(np.complex128)[..., 0]
        z *= self._scale
        if self.dom.d == 1:
            y = scipy.fft.fft(z, axis=-1, overwrite_x=True)[:, : self.res]
        else:
            # only the leading res x res corner is needed: transform columns, drop rows, then transform rows
            y = scipy.fft.fft(z, axis=-2, overwrite_x=True)[:, : self.res]
            y = scipy.fft.fft(y, axis=-1, overwrite_x=True)[:, :, : self.res]
        return np.concatenate([y.real, y.imag], axis=0)[:size]
