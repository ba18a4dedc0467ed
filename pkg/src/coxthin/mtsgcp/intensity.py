"""Posterior mean intensity surfaces ``lam * sigma_j`` on a pixel grid.

Each kept iteration contributes one draw of the field at every pixel centre,
taken from that pixel's marginal conditional given the GP values at the
current points.  Pixels are drawn independently: only per-pixel means are
reported, and those depend on the marginals alone.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

from ..errors import SizeError, StructureError
from ..gp import CholeskyState, LMCParams
from ..pattern import Domain
from .model import sigma

MAX_GRID_RES = 512


def _check_res(res: int):
    if res > MAX_GRID_RES:
        raise SizeError(f"grid resolution {res} exceeds the limit of {MAX_GRID_RES}")
    if res < 1:
        raise SizeError("grid resolution must be positive")


def pixel_draws(rng: np.random.Generator, chol: CholeskyState, values: np.ndarray, lmc: LMCParams,
                cells: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """One draw of the ``p`` GP channels at each cell from its marginal conditional; shape ``(G, p)``."""
    p, G = lmc.p, len(cells)
    prior = lmc.AAt + chol.jitter * np.eye(p)
    out = np.empty((G, p))
    n = chol.n
    alpha = None
    if n:
        alpha = solve_triangular(chol.factor, values.reshape(-1) - np.tile(lmc.mu, n), lower=True,
                                 check_finite=False)
    for start in range(0, G, chunk):
        sl = slice(start, min(start + chunk, G))
        m = len(cells[sl])
        mean = np.tile(lmc.mu, (m, 1))
        cov = np.broadcast_to(prior, (m, p, p)).copy()
        if n:
            B = solve_triangular(chol.factor, lmc.cross_cov(chol.locations, cells[sl]), lower=True,
                                 check_finite=False).reshape(n * p, m, p)
            mean += np.einsum("imk,i->mk", B, alpha)
            cov -= np.einsum("imk,iml->mkl", B, B)
        # clip tiny negative eigenvalues left by cancellation at pixels sitting on data points
        w, V = np.linalg.eigh(cov)
        root = V * np.sqrt(np.clip(w, 0.0, None))[:, None, :]
        out[sl] = mean + np.einsum("mkl,ml->mk", root, rng.standard_normal((m, p)))
    return out


class IntensityAccumulator:
    """Running mean of ``lam * sigma_j`` over kept iterations, ``j = 1..p``."""

    def __init__(self, dom: Domain, res: int, p: int):
        _check_res(res)
        self.dom, self.res, self.p = dom, res, p
        self.cells, _ = dom.midpoint_grid(res)
        self.total = np.zeros((len(self.cells), p))
        self.count = 0

    def add(self, rng, chol: CholeskyState, values: np.ndarray, lam: float, lmc: LMCParams):
        g = pixel_draws(rng, chol, values, lmc, self.cells)
        self.total += lam * sigma(g)[:, 1:]
        self.count += 1

    def mean(self) -> np.ndarray:
        """Shape ``(p, res, res)`` indexed ``[j, iy, ix]`` in 2D, ``(p, res)`` in 1D."""
        if self.count == 0:
            raise StructureError("no iterations accumulated")
        avg = (self.total / self.count).T
        shape = (self.p,) + (self.res,) * self.dom.d
        return avg.reshape(shape)


def posterior_intensity_grid(rng: np.random.Generator, trace, grid_res: int) -> np.ndarray:
    """Per-type posterior mean intensity from a trace that stored latent states."""
    _check_res(grid_res)
    if not trace.latent:
        raise StructureError("trace holds no latent states; fit with store_latent=True")
    p = trace.latent[0]["lmc"].p
    acc = IntensityAccumulator(trace.dom, grid_res, p)
    for snap in trace.latent:
        chol = CholeskyState.build(snap["lmc"], snap["locations"])
        acc.add(rng, chol, snap["values"], snap["lam"], snap["lmc"])
    return acc.mean()
