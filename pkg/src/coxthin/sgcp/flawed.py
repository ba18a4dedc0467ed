"""Two published conditional samplers that target the wrong law.

Both are kept as reference implementations so that the discrepancy against
the birth-death-move chain can be measured.  Do not use them for inference.
"""
from __future__ import annotations

import numpy as np
from scipy.special import expit

from ..errors import ParameterError, SamplingError
from ..gp import CholeskyState, conditional_gaussian
from ..pattern import MarkedPattern, sample_homogeneous_ppp
from .model import SgcpParams, _marks, log1m_expit

GONCALVES_MAX_ITER = 10**6


def _conditional_marks(rng, params: SgcpParams, observed: MarkedPattern, new_locs: np.ndarray) -> np.ndarray:
    """Joint draw of GP values at ``new_locs`` given the observed values."""
    chol = CholeskyState.build(params.kernel, observed.locations)
    m, cov = conditional_gaussian(chol, _marks(observed), new_locs,
                                  mean_known=params.mean, mean_new=params.mean)
    return m + np.linalg.cholesky(cov) @ rng.standard_normal(len(new_locs))


def sample_conditional_flawed_rao(rng: np.random.Generator, observed: MarkedPattern,
                                  params: SgcpParams) -> MarkedPattern:
    """WRONG LAW: fresh PPP(lam), GP values given the observed ones, keep each with probability ``1 - expit(g)``.

    With nothing observed this reproduces the unconditional thinned process,
    which is not the thinned process given an empty observation.
    """
    base = sample_homogeneous_ppp(rng, params.dom, params.lam).points
    if len(base) == 0:
        return MarkedPattern.empty(params.dom, n_marks=1)
    g = _conditional_marks(rng, params, observed, base)
    keep = rng.random(len(base)) < 1.0 - expit(g)
    return MarkedPattern._trusted(base[keep], params.dom, marks=g[keep, None])


def sample_conditional_flawed_goncalves(rng: np.random.Generator, observed: MarkedPattern,
                                        params: SgcpParams, max_iter: int = GONCALVES_MAX_ITER) -> MarkedPattern:
    """WRONG LAW: thinned count drawn as Poisson(lam), then locations by rejection.

    The scatter step targets ``N(g0, g1) * prod(1 - expit(g0))`` using uniform
    locations and conditional GP values as the envelope (bound 1).  Only
    unit-area domains are accepted.
    """
    if abs(params.dom.volume - 1.0) > 1e-12:
        raise ParameterError(f"this sampler is defined on unit-area domains only (|S| = {params.dom.volume})")
    n0 = int(rng.poisson(params.lam))
    if n0 == 0:
        return MarkedPattern.empty(params.dom, n_marks=1)
    for _ in range(max_iter):
        locs = params.dom.uniform(rng, n0)
        g = _conditional_marks(rng, params, observed, locs)
        if np.log(rng.random()) < np.sum(log1m_expit(g)):
            return MarkedPattern._trusted(locs, params.dom, marks=g[:, None])
    raise SamplingError(f"rejection sampler exceeded {max_iter} iterations for n0={n0}")
