"""Joint-distribution check of the Gibbs sampler.

Marginal-conditional draws: hyperparameters from the prior, then a forward
simulation.  Successive-conditional draws: a chain that alternates an exact
re-simulation of (thinned, observed, GP values) given the hyperparameters
with Gibbs sweeps given the observed points.  Both target the same joint law,
so summaries of the two streams must agree.
"""
from __future__ import annotations

import time

import numpy as np

from ..pattern import Domain
from ..stats import batch_means_se, iid_se, z_test
from .gibbs import Controls, Priors, gibbs_sweep
from .model import GibbsState, MtsgcpParams, simulate_mtsgcp

STATISTICS = ("lam", "n_total", "AAt_11")


def tight_priors() -> Priors:
    """Priors that keep point counts small enough for a fast joint test."""
    return Priors(a_lam=100.0, b_lam=10.0, s_A=0.5, a_rho=20.0, b_rho=10.0, m_mu=0.0, s_mu=0.5)


def geweke_controls() -> Controls:
    """Fixed step sizes; wide hyperparameter steps since ~10 points barely constrain ``A`` and ``rho``."""
    return Controls(hmc_eps=0.1, tune_eps=False, bdm_steps=20, rw_A=0.5, rw_log_rho=0.5)


def _stats(lam: float, n_total: int, AAt: np.ndarray) -> tuple[float, float, float]:
    return float(lam), float(n_total), float(AAt[0, 0])


def forward_draws(rng: np.random.Generator, priors: Priors, dom: Domain, p: int, n: int) -> np.ndarray:
    out = np.empty((n, len(STATISTICS)))
    for i in range(n):
        lam, lmc = priors.sample(rng, p)
        thinned, observed = simulate_mtsgcp(rng, MtsgcpParams(lam, lmc, dom))
        out[i] = _stats(lam, len(thinned) + sum(len(o) for o in observed), lmc.AAt)
    return out


def successive_draws(rng: np.random.Generator, priors: Priors, controls: Controls, dom: Domain, p: int,
                     n: int, n_between: int = 1) -> np.ndarray:
    lam, lmc = priors.sample(rng, p)
    out = np.empty((n, len(STATISTICS)))
    for i in range(n):
        thinned, observed = simulate_mtsgcp(rng, MtsgcpParams(lam, lmc, dom))
        state = GibbsState.build(thinned, observed, lam, lmc, dom)
        for _ in range(n_between):
            state, _ = gibbs_sweep(rng, state, priors, controls)
        lam, lmc = state.lam, state.lmc
        out[i] = _stats(lam, state.n_total, lmc.AAt)
    return out


def geweke_test(rng: np.random.Generator, n_samples: int = 5000, p: int = 2, dom: Domain | None = None,
                priors: Priors | None = None, controls: Controls | None = None, n_between: int = 1,
                alpha: float = 0.005) -> dict:
    """Compare means of ``lam``, total count and ``(A A^T)_11`` between the two simulators."""
    t0 = time.perf_counter()
    dom = Domain.unit_square() if dom is None else dom
    priors = tight_priors() if priors is None else priors
    controls = geweke_controls() if controls is None else controls
    fwd = forward_draws(rng, priors, dom, p, n_samples)
    chain = successive_draws(rng, priors, controls, dom, p, n_samples, n_between)
    tests = {}
    for j, name in enumerate(STATISTICS):
        res = z_test(float(chain[:, j].mean()), batch_means_se(chain[:, j]),
                     float(fwd[:, j].mean()), iid_se(fwd[:, j]))
        tests[name] = {"forward_mean": float(fwd[:, j].mean()), "chain_mean": float(chain[:, j].mean()), **res,
                       "passed": bool(res["p_value"] > alpha)}
    return {
        "n_samples": n_samples,
        "p": p,
        "alpha": alpha,
        "tests": tests,
        "passed": all(t["passed"] for t in tests.values()),
        "seconds": time.perf_counter() - t0,
    }
