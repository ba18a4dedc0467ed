"""Monte Carlo (cross) pair correlation functions of the multitype SGCP.

For a stationary LMC field, ``gamma_kl(r) = E[sigma_k(s) sigma_l(t)] / (E sigma_k E sigma_l)``
with ``|s - t| = r``.  It depends on ``(A, rho, mu)`` only; the base intensity
cancels, so it is not an argument here.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..gp import LMCParams
from ..pattern import spawn_rngs
from .model import sigma


def _lmc_of(draw) -> LMCParams:
    if isinstance(draw, LMCParams):
        return draw
    if hasattr(draw, "lmc"):
        return draw.lmc
    A, rho, mu = draw
    return LMCParams(A, rho, mu)


def type_pairs(p: int) -> list[tuple[int, int]]:
    """Pairs ``(k, l)`` with ``1 <= k <= l <= p``."""
    return [(k, l) for k in range(1, p + 1) for l in range(k, p + 1)]


def pcf_single(lmc: LMCParams, r: float, z1: np.ndarray, z2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Estimate and delta-method standard error of every ``gamma_kl(r)`` from fixed normals.

    ``z1, z2`` are ``(n, p)`` standard normals; the latent pair is
    ``w_s = z1``, ``w_t = e z1 + sqrt(1 - e^2) z2`` with ``e = exp(-rho r)``.
    Returns ``(p, p)`` arrays over types ``1..p``.
    """
    e = np.exp(-lmc.rho * r)
    w_s = z1
    w_t = e * z1 + np.sqrt(1.0 - e**2) * z2
    s_s = sigma(w_s @ lmc.A.T + lmc.mu)[:, 1:]
    s_t = sigma(w_t @ lmc.A.T + lmc.mu)[:, 1:]
    n, p = s_s.shape
    m_i = 0.5 * (s_s + s_t)                       # pooled marginal per draw
    num_i = 0.5 * (s_s[:, :, None] * s_t[:, None, :] + s_t[:, :, None] * s_s[:, None, :])
    M = m_i.mean(axis=0)
    N = num_i.mean(axis=0)
    gamma = N / np.outer(M, M)
    # delta method on (N_kl, M_k, M_l)
    infl = (num_i / np.outer(M, M)
            - gamma * m_i[:, :, None] / M[None, :, None]
            - gamma * m_i[:, None, :] / M[None, None, :])
    se = infl.std(axis=0, ddof=1) / np.sqrt(n)
    return gamma, se


@dataclass
class PcfResult:
    r: np.ndarray
    pairs: list[tuple[int, int]]
    draws: np.ndarray      # (n_draws, n_r, n_pairs)
    se: np.ndarray         # (n_draws, n_r, n_pairs)

    @property
    def mean(self) -> np.ndarray:
        return self.draws.mean(axis=0)

    def band(self, level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
        q = (1 - level) / 2
        return np.quantile(self.draws, q, axis=0), np.quantile(self.draws, 1 - q, axis=0)

    def table(self) -> list[dict]:
        lo, hi = self.band()
        mean = self.mean
        return [
            {"r": float(r), "pair": f"{k}-{l}", "mean": float(mean[i, j]),
             "lo95": float(lo[i, j]), "hi95": float(hi[i, j])}
            for j, (k, l) in enumerate(self.pairs)
            for i, r in enumerate(self.r)
        ]


def pcf(params_draws: Sequence, r_values, n_mc: int = 10**5, seed: int = 0) -> PcfResult:
    """Pair correlation curves for every posterior draw of ``(A, rho, mu)``.

    Draw ``i`` uses its own stream derived from ``seed``, and the same normals
    are reused across all ``r``, so curves are smooth in ``r``.
    """
    r_values = np.atleast_1d(np.asarray(r_values, dtype=float))
    if np.any(r_values <= 0):
        raise ValueError("separations must be positive")
    lmcs = [_lmc_of(d) for d in params_draws]
    p = lmcs[0].p if lmcs else 1
    pairs = type_pairs(p)
    idx = [(k - 1, l - 1) for k, l in pairs]
    out = np.empty((len(lmcs), len(r_values), len(pairs)))
    se = np.empty_like(out)
    for d, (lmc, rng) in enumerate(zip(lmcs, spawn_rngs(seed, len(lmcs)))):
        z1 = rng.standard_normal((n_mc, p))
        z2 = rng.standard_normal((n_mc, p))
        for i, r in enumerate(r_values):
            g, s = pcf_single(lmc, r, z1, z2)
            out[d, i] = [g[a, b] for a, b in idx]
            se[d, i] = [s[a, b] for a, b in idx]
    return PcfResult(r_values, pairs, out, se)
