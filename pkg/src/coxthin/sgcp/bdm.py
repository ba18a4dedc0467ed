"""Birth-death-move Metropolis-Hastings for thinned points given observed ones.

The kernel is written once against a generic "thin weight" so that the
univariate model (weight ``1 - expit(g)``) and the multitype model (weight
``sigma_0(g)``) share it.  Proposals:

* birth: uniform location, mark from the GP conditional given every current value;
* death: uniformly chosen thinned point;
* move: Gaussian random walk on one thinned location, fresh mark from the
  conditional given all other values.  Because the mark is drawn from its exact
  conditional, the Gaussian factors cancel and only the weight ratio remains.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import ParameterError
from ..gp import CholeskyState, chol_extend, chol_remove, conditional_gaussian
from ..pattern import Domain, MarkedPattern
from .model import AugmentedState, SgcpParams, log1m_expit

LogWeight = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class MoveProbs:
    birth: float = 1 / 3
    death: float = 1 / 3
    move: float = 1 / 3

    def __post_init__(self):
        probs = np.array([self.birth, self.death, self.move])
        if np.any(probs < 0) or abs(probs.sum() - 1) > 1e-12:
            raise ParameterError(f"move probabilities must be non-negative and sum to 1, got {probs}")
        if (self.birth > 0) != (self.death > 0):
            raise ParameterError("birth and death must both be enabled or both disabled")

    @classmethod
    def coerce(cls, probs) -> "MoveProbs":
        if probs is None:
            return cls()
        return probs if isinstance(probs, cls) else cls(*probs)

    def as_array(self) -> np.ndarray:
        return np.array([self.birth, self.death, self.move])


@dataclass(frozen=True, eq=False)
class ThinnedLatent:
    """Working state of the kernel: one factor over fixed then thinned locations.

    ``values`` has shape ``(n, p)``; rows ``[:n_fixed]`` belong to the fixed
    (observed) points and are never touched.
    """

    chol: CholeskyState
    values: np.ndarray
    n_fixed: int

    @property
    def n0(self) -> int:
        return self.chol.n - self.n_fixed

    @property
    def thinned_locations(self) -> np.ndarray:
        return self.chol.locations[self.n_fixed:]

    @property
    def thinned_values(self) -> np.ndarray:
        return self.values[self.n_fixed:]


def bdm_log_ratio(kind: str, n0: int, lam_volume: float, probs: MoveProbs, *,
                  log_w_new: float = 0.0, log_w_old: float = 0.0) -> float:
    """Log Metropolis-Hastings ratio of a proposal made from a state with ``n0`` thinned points."""
    if kind == "birth":
        return (np.log(lam_volume) + log_w_new - np.log(n0 + 1)
                + np.log(probs.death) - np.log(probs.birth))
    if kind == "death":
        return (np.log(n0) - np.log(lam_volume) - log_w_old
                + np.log(probs.birth) - np.log(probs.death))
    if kind == "move":
        return log_w_new - log_w_old
    raise ValueError(f"unknown proposal kind {kind!r}")


def _draw_conditional(rng, chol: CholeskyState, values: np.ndarray,
                      loc: np.ndarray, mean: np.ndarray) -> np.ndarray:
    p = len(mean)
    m, cov = conditional_gaussian(chol, values.reshape(-1), loc[None, :],
                                  mean_known=np.tile(mean, chol.n), mean_new=mean)
    z = rng.standard_normal(p)
    if p == 1:
        return m + np.sqrt(max(cov[0, 0], 0.0)) * z
    return m + np.linalg.cholesky(cov) @ z


def bdm_kernel(rng: np.random.Generator, latent: ThinnedLatent, lam: float, dom: Domain,
               log_weight: LogWeight, mean: np.ndarray, probs: MoveProbs,
               move_scale: float) -> tuple[ThinnedLatent, str, bool]:
    """One proposal plus accept/reject; returns ``(state, kind, accepted)``."""
    kind = ("birth", "death", "move")[rng.choice(3, p=probs.as_array())]
    n0, nf = latent.n0, latent.n_fixed
    lam_volume = lam * dom.volume

    if kind == "birth":
        loc = dom.uniform(rng, 1)[0]
        g = _draw_conditional(rng, latent.chol, latent.values, loc, mean)
        log_r = bdm_log_ratio(kind, n0, lam_volume, probs, log_w_new=float(log_weight(g[None, :])[0]))
        if np.log(rng.random()) < log_r:
            return ThinnedLatent(chol_extend(latent.chol, loc), np.vstack([latent.values, g]), nf), kind, True
        return latent, kind, False

    if n0 == 0:
        return latent, kind, False
    j = nf + int(rng.integers(n0))
    g_old = latent.values[j]

    if kind == "death":
        log_r = bdm_log_ratio(kind, n0, lam_volume, probs, log_w_old=float(log_weight(g_old[None, :])[0]))
        if np.log(rng.random()) < log_r:
            return ThinnedLatent(chol_remove(latent.chol, j), np.delete(latent.values, j, axis=0), nf), kind, True
        return latent, kind, False

    loc = latent.chol.locations[j] + move_scale * rng.standard_normal(dom.d)
    if not dom.contains(loc[None, :])[0]:
        return latent, kind, False
    chol_minus = chol_remove(latent.chol, j)
    values_minus = np.delete(latent.values, j, axis=0)
    g = _draw_conditional(rng, chol_minus, values_minus, loc, mean)
    log_r = bdm_log_ratio(kind, n0, lam_volume, probs,
                          log_w_new=float(log_weight(g[None, :])[0]),
                          log_w_old=float(log_weight(g_old[None, :])[0]))
    if np.log(rng.random()) < log_r:
        return ThinnedLatent(chol_extend(chol_minus, loc), np.vstack([values_minus, g]), nf), kind, True
    return latent, kind, False


def _sgcp_weight(values: np.ndarray) -> np.ndarray:
    return log1m_expit(values[:, 0])


def latent_from_state(state: AugmentedState) -> ThinnedLatent:
    return ThinnedLatent(state.chol, state.values[:, None].copy(), state.n1)


def state_from_latent(latent: ThinnedLatent, observed: MarkedPattern, dom: Domain) -> AugmentedState:
    thinned = MarkedPattern._trusted(latent.thinned_locations.copy(), dom,
                                     marks=latent.thinned_values.copy())
    return AugmentedState(thinned, observed, latent.chol)


def default_move_scale(dom: Domain) -> float:
    return 0.1 * dom.diameter


def bdm_step(rng: np.random.Generator, state: AugmentedState, params: SgcpParams,
             move_probs=None, move_scale: float | None = None) -> AugmentedState:
    """A single birth, death or move proposal targeting thinned | observed."""
    probs = MoveProbs.coerce(move_probs)
    scale = default_move_scale(params.dom) if move_scale is None else move_scale
    latent, _, _ = bdm_kernel(rng, latent_from_state(state), params.lam, params.dom,
                              _sgcp_weight, np.array([params.mean]), probs, scale)
    return state_from_latent(latent, state.observed, params.dom)


def initial_state(observed: MarkedPattern, params: SgcpParams,
                  thinned: MarkedPattern | None = None) -> AugmentedState:
    if thinned is None:
        thinned = MarkedPattern.empty(params.dom, n_marks=1)
    return AugmentedState.build(thinned, observed, params)


def sample_conditional_bdm(rng: np.random.Generator, observed: MarkedPattern, params: SgcpParams,
                           n_sweeps: int, n_steps_per_sweep: int, *, move_probs=None,
                           move_scale: float | None = None, init: MarkedPattern | None = None,
                           n_burn: int = 0, counts_only: bool = False) -> list:
    """Run the chain and return the thinned pattern after every post-burn sweep.

    With ``counts_only`` the list holds thinned counts instead of patterns,
    which keeps long forensic runs light.
    """
    probs = MoveProbs.coerce(move_probs)
    scale = default_move_scale(params.dom) if move_scale is None else move_scale
    latent = latent_from_state(initial_state(observed, params, init))
    mean = np.array([params.mean])
    out = []
    for sweep in range(n_burn + n_sweeps):
        for _ in range(n_steps_per_sweep):
            latent, _, _ = bdm_kernel(rng, latent, params.lam, params.dom, _sgcp_weight, mean, probs, scale)
        if sweep >= n_burn:
            if counts_only:
                out.append(latent.n0)
            else:
                out.append(MarkedPattern._trusted(latent.thinned_locations.copy(), params.dom,
                                                  marks=latent.thinned_values.copy()))
    return out
