"""Gibbs sampler for the multitype SGCP.

One sweep updates, in order: the thinned points (birth-death-move), all GP
values (HMC in whitened coordinates), the coregionalization matrix and the
ranges (random-walk Metropolis), then ``lam`` and ``mu`` from their conjugate
conditionals.  ``A`` is kept lower triangular with a positive diagonal.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, solve_triangular

from ..errors import ParameterError, StructureError
from ..gp import CholeskyState, LMCParams, mvn_logpdf
from ..pattern import Domain, MarkedPattern, PointPattern
from ..sgcp.bdm import MoveProbs, ThinnedLatent, bdm_kernel, default_move_scale
from .model import GibbsState, log_joint_density_mt, log_sigma, sigma

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Priors:
    """``lam ~ Gamma(a_lam, rate b_lam)``, ``A_ij ~ N(0, s_A^2)`` (half-normal on the diagonal),
    ``rho_j ~ Gamma(a_rho, rate b_rho)``, ``mu_j ~ N(m_mu, s_mu^2)``."""

    a_lam: float = 0.1
    b_lam: float = 0.1
    s_A: float = 1.0
    a_rho: float = 1.0
    b_rho: float = 1.0
    m_mu: float = 0.0
    s_mu: float = 3.0

    def __post_init__(self):
        for name in ("a_lam", "b_lam", "s_A", "a_rho", "b_rho", "s_mu"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"prior hyperparameter {name} must be positive")

    @classmethod
    def default(cls, dom: Domain) -> "Priors":
        # rate scaled so that rho * diameter ~ Gamma(1, 1)
        return cls(b_rho=dom.diameter)

    def sample(self, rng: np.random.Generator, p: int) -> tuple[float, LMCParams]:
        lam = rng.gamma(self.a_lam, 1.0 / self.b_lam)
        A = np.tril(rng.normal(0.0, self.s_A, (p, p)))
        A[np.diag_indices(p)] = np.abs(A[np.diag_indices(p)])
        rho = rng.gamma(self.a_rho, 1.0 / self.b_rho, p)
        mu = rng.normal(self.m_mu, self.s_mu, p)
        return float(lam), LMCParams(A, rho, mu)

    def log_prior_A(self, A: np.ndarray) -> float:
        return float(-0.5 * np.sum(np.tril(A) ** 2) / self.s_A**2)

    def log_prior_rho(self, rho: np.ndarray) -> float:
        return float(np.sum((self.a_rho - 1) * np.log(rho) - self.b_rho * rho))


@dataclass(frozen=True)
class Controls:
    """Sampler tuning.  ``bdm_steps=None`` means ``max(20, n0)`` per sweep."""

    bdm_steps: int | None = None
    move_probs: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    move_scale: float | None = None
    hmc_eps: float = 0.05
    hmc_steps: int = 10
    tune_eps: bool = True
    target_accept: tuple[float, float] = (0.6, 0.8)
    rw_A: float = 0.1
    rw_log_rho: float = 0.1
    store_latent: bool = False
    grid_res: int | None = None


@dataclass
class SweepInfo:
    hmc_accept_prob: float = 1.0
    hmc_accepted: bool = True
    A_accepted: bool = False
    A_whitened_accepted: bool = False
    rho_accepted: bool = False
    rho_whitened_accepted: bool = False
    bdm_accepted: int = 0
    bdm_steps: int = 0


# GP-value target --------------------------------------------------------------

def _one_hot(colours: np.ndarray, p: int) -> np.ndarray:
    out = np.zeros((len(colours), p + 1))
    out[np.arange(len(colours)), colours] = 1.0
    return out[:, 1:]


def log_lik_g(values: np.ndarray, colours: np.ndarray) -> float:
    return float(np.sum(log_sigma(values)[np.arange(len(colours)), colours]))


def grad_log_lik_g(values: np.ndarray, colours: np.ndarray) -> np.ndarray:
    return _one_hot(colours, values.shape[1]) - sigma(values)[:, 1:]


def log_target_g(state: GibbsState, values: np.ndarray) -> float:
    """Log full conditional of the GP values up to a constant."""
    n = state.n_total
    return mvn_logpdf(values.reshape(-1), np.tile(state.lmc.mu, n), state.chol) + log_lik_g(values, state.colours)


def grad_log_target_g(state: GibbsState, values: np.ndarray) -> np.ndarray:
    """``-Sigma^{-1}(g - mu) + (e_colour - sigma_{1..p}(g))`` row by row."""
    n, p = values.shape
    prior = -state.chol.solve((values - state.lmc.mu).reshape(-1)).reshape(n, p)
    return prior + grad_log_lik_g(values, state.colours)


def hmc_update(rng: np.random.Generator, state: GibbsState, eps: float, n_steps: int) -> tuple[GibbsState, float, bool]:
    """Leapfrog HMC on whitened values ``v`` with ``g = mu + L v``."""
    n, p = state.n_total, state.p
    if n == 0:
        return state, 1.0, True
    L = state.chol.factor
    mu_t = np.tile(state.lmc.mu, n)
    colours = state.colours
    v0 = solve_triangular(L, state.values.reshape(-1) - mu_t, lower=True, check_finite=False)

    def energy(v):
        return 0.5 * v @ v - log_lik_g((mu_t + L @ v).reshape(n, p), colours)

    def grad(v):
        return v - L.T @ grad_log_lik_g((mu_t + L @ v).reshape(n, p), colours).reshape(-1)

    r0 = rng.standard_normal(n * p)
    v, r = v0.copy(), r0 - 0.5 * eps * grad(v0)
    for i in range(n_steps):
        v = v + eps * r
        if i < n_steps - 1:
            r = r - eps * grad(v)
    r = r - 0.5 * eps * grad(v)
    log_ratio = (energy(v0) - energy(v)) + 0.5 * (r0 @ r0 - r @ r)
    accept_prob = float(np.exp(min(0.0, log_ratio))) if np.isfinite(log_ratio) else 0.0
    if np.log(rng.random()) < log_ratio:
        if np.array_equal(v, v0):
            return state, accept_prob, True
        return state.replace(values=(mu_t + L @ v).reshape(n, p)), accept_prob, True
    return state, accept_prob, False


# hyperparameters ------------------------------------------------------------

def _gaussian_loglik(state: GibbsState, lmc: LMCParams) -> tuple[float, CholeskyState]:
    chol = CholeskyState.build(lmc, state.chol.locations)
    n = state.n_total
    return mvn_logpdf(state.values.reshape(-1), np.tile(lmc.mu, n), chol), chol


def _mh_lmc(rng, state: GibbsState, proposal: LMCParams, log_extra: float) -> tuple[GibbsState, bool]:
    """Accept/reject a new LMC given fixed GP values; ``log_extra`` holds prior and Jacobian terms."""
    try:
        ll_new, chol_new = _gaussian_loglik(state, proposal)
    except LinAlgError:
        log.info("Cholesky failed for proposed LMC parameters; proposal rejected")
        return state, False
    ll_old = mvn_logpdf(state.values.reshape(-1), np.tile(state.lmc.mu, state.n_total), state.chol)
    if np.log(rng.random()) < ll_new - ll_old + log_extra:
        return state.replace(lmc=proposal, chol=chol_new), True
    return state, False


def _mh_lmc_whitened(rng, state: GibbsState, proposal: LMCParams, log_extra: float) -> tuple[GibbsState, bool]:
    """Accept/reject a new LMC holding the whitened values ``v = L^{-1}(g - mu)`` fixed.

    ``g`` moves with the proposal, so only the type likelihood enters the
    ratio.  This escapes the funnel near small ``A`` entries where the update
    at fixed ``g`` barely moves.
    """
    n = state.n_total
    try:
        chol_new = CholeskyState.build(proposal, state.chol.locations)
    except LinAlgError:
        log.info("Cholesky failed for proposed LMC parameters; proposal rejected")
        return state, False
    if n == 0:
        values = state.values
        log_ratio = log_extra
    else:
        v = solve_triangular(state.chol.factor, (state.values - state.lmc.mu).reshape(-1), lower=True,
                             check_finite=False)
        values = (chol_new.factor @ v).reshape(n, state.p) + proposal.mu
        log_ratio = log_lik_g(values, state.colours) - log_lik_g(state.values, state.colours) + log_extra
    if np.log(rng.random()) < log_ratio:
        return state.replace(lmc=proposal, chol=chol_new, values=values), True
    return state, False


def update_A(rng, state: GibbsState, priors: Priors, scale: float,
             whitened: bool = False) -> tuple[GibbsState, bool]:
    p = state.p
    A = state.lmc.A
    off = np.tril_indices(p, -1)
    diag = np.diag_indices(p)
    A_new = np.zeros_like(A)
    A_new[off] = A[off] + scale * rng.standard_normal(len(off[0]))
    step = scale * rng.standard_normal(p)
    A_new[diag] = A[diag] * np.exp(step)
    try:
        proposal = LMCParams(A_new, state.lmc.rho, state.lmc.mu)
    except ParameterError:
        return state, False
    log_extra = priors.log_prior_A(A_new) - priors.log_prior_A(A) + float(step.sum())
    return (_mh_lmc_whitened if whitened else _mh_lmc)(rng, state, proposal, log_extra)


def update_rho(rng, state: GibbsState, priors: Priors, scale: float,
               whitened: bool = False) -> tuple[GibbsState, bool]:
    rho = state.lmc.rho
    step = scale * rng.standard_normal(len(rho))
    rho_new = rho * np.exp(step)
    try:
        proposal = LMCParams(state.lmc.A, rho_new, state.lmc.mu)
    except ParameterError:
        return state, False
    log_extra = priors.log_prior_rho(rho_new) - priors.log_prior_rho(rho) + float(step.sum())
    return (_mh_lmc_whitened if whitened else _mh_lmc)(rng, state, proposal, log_extra)


def lam_conditional(priors: Priors, n_total: int, volume: float) -> tuple[float, float]:
    """Shape and rate of the Gamma full conditional of ``lam``."""
    return priors.a_lam + n_total, priors.b_lam + volume


def update_lam(rng, state: GibbsState, priors: Priors) -> GibbsState:
    shape, rate = lam_conditional(priors, state.n_total, state.dom.volume)
    return state.replace(lam=float(rng.gamma(shape, 1.0 / rate)))


def mu_conditional(state: GibbsState, priors: Priors) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of the Gaussian full conditional of ``mu``."""
    n, p = state.n_total, state.p
    prior_prec = np.eye(p) / priors.s_mu**2
    if n == 0:
        return np.full(p, priors.m_mu), np.linalg.inv(prior_prec)
    M = np.tile(np.eye(p), (n, 1))
    # g = M mu + A w, so mu enters the Gaussian likelihood linearly
    sinv_M = state.chol.solve(M)
    prec = M.T @ sinv_M + prior_prec
    rhs = sinv_M.T @ state.values.reshape(-1) + prior_prec @ np.full(p, priors.m_mu)
    cov = np.linalg.inv(prec)
    cov = 0.5 * (cov + cov.T)
    return cov @ rhs, cov


def update_mu(rng, state: GibbsState, priors: Priors) -> GibbsState:
    mean, cov = mu_conditional(state, priors)
    mu = mean + np.linalg.cholesky(cov) @ rng.standard_normal(state.p)
    return state.replace(lmc=LMCParams(state.lmc.A, state.lmc.rho, mu))


# thinned points -------------------------------------------------------------

def _thin_weight(values: np.ndarray) -> np.ndarray:
    return log_sigma(values)[:, 0]


def update_thinned(rng, state: GibbsState, controls: Controls) -> tuple[GibbsState, int, int]:
    n_steps = controls.bdm_steps if controls.bdm_steps is not None else max(20, state.n0)
    probs = MoveProbs.coerce(controls.move_probs)
    scale = default_move_scale(state.dom) if controls.move_scale is None else controls.move_scale
    latent = ThinnedLatent(state.chol, state.values, state.n_obs)
    accepted = 0
    for _ in range(n_steps):
        latent, _, ok = bdm_kernel(rng, latent, state.lam, state.dom, _thin_weight, state.lmc.mu, probs, scale)
        accepted += ok
    return state.replace(chol=latent.chol, values=latent.values), accepted, n_steps


def gibbs_sweep(rng: np.random.Generator, state: GibbsState, priors: Priors, controls: Controls,
                eps: float | None = None) -> tuple[GibbsState, SweepInfo]:
    info = SweepInfo()
    state, info.bdm_accepted, info.bdm_steps = update_thinned(rng, state, controls)
    state, info.hmc_accept_prob, info.hmc_accepted = hmc_update(
        rng, state, controls.hmc_eps if eps is None else eps, controls.hmc_steps)
    state, info.A_accepted = update_A(rng, state, priors, controls.rw_A)
    state, info.A_whitened_accepted = update_A(rng, state, priors, controls.rw_A, whitened=True)
    state, info.rho_accepted = update_rho(rng, state, priors, controls.rw_log_rho)
    state, info.rho_whitened_accepted = update_rho(rng, state, priors, controls.rw_log_rho, whitened=True)
    state = update_lam(rng, state, priors)
    state = update_mu(rng, state, priors)
    return state, info


def gibbs_step(rng: np.random.Generator, state: GibbsState, priors: Priors, controls: Controls) -> GibbsState:
    """One full sweep over every block of the posterior."""
    return gibbs_sweep(rng, state, priors, controls)[0]


# driver ---------------------------------------------------------------------

@dataclass
class Trace:
    records: list[dict] = field(default_factory=list)
    latent: list[dict] | None = None
    intensity: np.ndarray | None = None
    dom: Domain | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def column(self, key: str) -> np.ndarray:
        return np.array([r[key] for r in self.records])


def _record(it: int, state: GibbsState, info: SweepInfo, eps: float) -> dict:
    lmc = state.lmc
    return {
        "iteration": it,
        "lam": state.lam,
        "A": lmc.A.tolist(),
        "AAt": lmc.AAt.tolist(),
        "rho": lmc.rho.tolist(),
        "mu": lmc.mu.tolist(),
        "n0": state.n0,
        "n_obs": state.n_obs,
        "log_joint": log_joint_density_mt(state),
        "hmc_accept_prob": info.hmc_accept_prob,
        "hmc_eps": eps,
    }


def latent_snapshot(state: GibbsState) -> dict:
    return {
        "locations": state.chol.locations.copy(),
        "values": state.values.copy(),
        "colours": state.colours,
        "lam": state.lam,
        "lmc": state.lmc,
    }


def _as_observed(data, dom: Domain, p: int | None) -> list[np.ndarray]:
    pats = getattr(data, "patterns", data)
    out = []
    for pat in pats:
        if isinstance(pat, PointPattern):
            out.append(pat.points)
        elif isinstance(pat, MarkedPattern):
            out.append(pat.locations)
        else:
            out.append(np.asarray(pat, dtype=float).reshape(-1, dom.d))
    if not out:
        raise StructureError("need at least one type of observed points")
    if p is not None and len(out) != p:
        raise StructureError(f"{len(out)} observed types for p={p}")
    return out


def initial_gibbs_state(data, dom: Domain, priors: Priors, init: LMCParams | None = None,
                        lam: float | None = None) -> GibbsState:
    """Empty thinned set, GP values at the prior mean, ``A = I`` and prior-mean ranges unless given."""
    locs = _as_observed(data, dom, None if init is None else init.p)
    p = len(locs)
    if init is None:
        init = LMCParams(np.eye(p), np.full(p, priors.a_rho / priors.b_rho), np.full(p, priors.m_mu))
    n_obs = sum(len(x) for x in locs)
    lam = (n_obs + 1) / dom.volume if lam is None else lam
    observed = [MarkedPattern(x, dom, marks=np.tile(init.mu, (len(x), 1))) for x in locs]
    thinned = MarkedPattern.empty(dom, n_marks=p)
    return GibbsState.build(thinned, observed, lam, init, dom)


def fit(rng: np.random.Generator, data, priors: Priors, controls: Controls, n_iter: int, n_burn: int = 0,
        dom: Domain | None = None, init: GibbsState | None = None, progress=None) -> Trace:
    """Run ``n_burn`` warm-up sweeps then keep ``n_iter`` sweeps.

    During warm-up the HMC step size is nudged towards the target acceptance
    window when ``controls.tune_eps`` is set; it is frozen afterwards.
    """
    from .intensity import IntensityAccumulator

    if init is None:
        dom = dom if dom is not None else getattr(data, "domain", None)
        if dom is None:
            raise StructureError("a domain is required when no initial state is given")
        state = initial_gibbs_state(data, dom, priors)
    else:
        state = init
    trace = Trace(latent=[] if controls.store_latent else None, dom=state.dom,
                  meta={"priors": asdict(priors), "controls": asdict(controls), "n_iter": n_iter,
                        "n_burn": n_burn})
    acc = IntensityAccumulator(state.dom, controls.grid_res, state.p) if controls.grid_res else None
    eps = controls.hmc_eps
    lo, hi = controls.target_accept
    mid = 0.5 * (lo + hi)
    for it in range(n_burn + n_iter):
        state, info = gibbs_sweep(rng, state, priors, controls, eps)
        if it < n_burn:
            if controls.tune_eps and state.n_total:
                eps *= float(np.exp(0.1 * (info.hmc_accept_prob - mid)))
            continue
        trace.records.append(_record(it - n_burn, state, info, eps))
        if trace.latent is not None:
            trace.latent.append(latent_snapshot(state))
        if acc is not None:
            acc.add(rng, state.chol, state.values, state.lam, state.lmc)
        if progress is not None:
            progress(it - n_burn, state)
    if acc is not None:
        trace.intensity = acc.mean()
    return trace
