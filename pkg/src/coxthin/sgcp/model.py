"""Sigmoidal Gaussian Cox process: exact simulation and joint/conditional densities."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, gammaln

from ..errors import ParameterError, StructureError
from ..gp import CholeskyState, Kernel, mvn_logpdf
from ..pattern import Domain, MarkedPattern, sample_homogeneous_ppp


def log_expit(g):
    return -np.logaddexp(0.0, -np.asarray(g, dtype=float))


def log1m_expit(g):
    """``log(1 - expit(g))`` without cancellation."""
    return -np.logaddexp(0.0, np.asarray(g, dtype=float))


@dataclass(frozen=True)
class SgcpParams:
    """Base intensity ``lam``, GP kernel and domain.

    ``mean`` is a constant GP mean (zero in the standard model); non-zero
    values are only used to force degenerate test cases.
    """

    lam: float
    kernel: Kernel
    dom: Domain
    mean: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ParameterError(f"lambda must be positive, got {self.lam}")

    @property
    def lam_volume(self) -> float:
        return self.lam * self.dom.volume


@dataclass(frozen=True, eq=False)
class AugmentedState:
    """Thinned and observed patterns with GP marks plus a factor over all their locations.

    ``chol.locations`` is the observed locations followed by the thinned
    locations, each in pattern order.
    """

    thinned: MarkedPattern
    observed: MarkedPattern
    chol: CholeskyState

    @classmethod
    def build(cls, thinned: MarkedPattern, observed: MarkedPattern, params: SgcpParams) -> "AugmentedState":
        for name, pat in (("thinned", thinned), ("observed", observed)):
            if pat.marks is None or pat.n_marks != 1:
                raise StructureError(f"{name} pattern needs one GP mark per point")
        locs = np.vstack([observed.locations, thinned.locations])
        return cls(thinned, observed, CholeskyState.build(params.kernel, locs))

    @property
    def values(self) -> np.ndarray:
        """GP values in factor order (observed, then thinned)."""
        return np.concatenate([self.observed.marks[:, 0], self.thinned.marks[:, 0]])

    @property
    def n0(self) -> int:
        return len(self.thinned)

    @property
    def n1(self) -> int:
        return len(self.observed)


def _marks(pattern: MarkedPattern) -> np.ndarray:
    if pattern.marks is None:
        raise StructureError("pattern carries no GP marks")
    return pattern.marks[:, 0]


def simulate_sgcp(rng: np.random.Generator, params: SgcpParams) -> tuple[MarkedPattern, MarkedPattern]:
    """Thinning construction: PPP(lam), GP values at its points, keep with probability expit(g)."""
    base = sample_homogeneous_ppp(rng, params.dom, params.lam).points
    n = len(base)
    if n:
        chol = CholeskyState.build(params.kernel, base)
        g = params.mean + chol.factor @ rng.standard_normal(n)
        keep = rng.random(n) < expit(g)
    else:
        g = np.zeros(0)
        keep = np.zeros(0, dtype=bool)
    dom = params.dom
    thinned = MarkedPattern._trusted(base[~keep], dom, marks=g[~keep, None])
    observed = MarkedPattern._trusted(base[keep], dom, marks=g[keep, None])
    return thinned, observed


def log_joint_density(state: AugmentedState, params: SgcpParams) -> float:
    """Log joint density of thinned and observed marked patterns.

    ``exp(-lam|S|) lam^(n0+n1) / (n0! n1!) * N(g | mean, Sigma) * prod(1 - expit(g0)) * prod expit(g1)``
    """
    n0, n1 = state.n0, state.n1
    g0, g1 = _marks(state.thinned), _marks(state.observed)
    out = -params.lam_volume - gammaln(n0 + 1) - gammaln(n1 + 1)
    if n0 + n1:
        out += (n0 + n1) * np.log(params.lam)
        out += mvn_logpdf(state.values, params.mean, state.chol)
    return float(out + np.sum(log1m_expit(g0)) + np.sum(log_expit(g1)))


def log_conditional_density_unnorm(thinned: MarkedPattern, observed: MarkedPattern,
                                   params: SgcpParams) -> float:
    """Unnormalised log density of the thinned marked pattern given the observed one.

    ``lam^n0 / n0! * N(g0, g1 | mean, Sigma(x0, x1)) * prod(1 - expit(g0))``
    """
    g0, g1 = _marks(thinned), _marks(observed)
    n0 = len(g0)
    locs = np.vstack([observed.locations, thinned.locations])
    chol = CholeskyState.build(params.kernel, locs)
    out = n0 * np.log(params.lam) - gammaln(n0 + 1)
    if len(locs):
        out += mvn_logpdf(np.concatenate([g1, g0]), params.mean, chol)
    return float(out + np.sum(log1m_expit(g0)))
