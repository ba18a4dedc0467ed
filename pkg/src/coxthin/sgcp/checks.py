"""Monte Carlo experiments: thinning construction vs grid Cox oracle, and sampler forensics."""
from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy.special import expit

from ..gp import GridFieldSampler
from ..pattern import MarkedPattern, max_workers
from ..stats import batch_means_se, iid_se, pair_counts, poisson_gof, two_sample_chi2, z_test
from .bdm import sample_conditional_bdm
from .flawed import sample_conditional_flawed_goncalves, sample_conditional_flawed_rao
from .model import SgcpParams, simulate_sgcp

DEFAULT_RADII = (0.05, 0.1, 0.2)


class GridCoxOracle:
    """Direct Cox simulation: GP on a midpoint grid, then PPP with piecewise-constant intensity."""

    def __init__(self, params: SgcpParams, res: int, pad: int = 2, batch: int = 4):
        # small batches keep the padded transforms in cache
        self.params = params
        self.fields = GridFieldSampler(params.kernel, params.dom, res, pad)
        self.batch = batch

    def _batches(self, rng, n):
        done = 0
        while done < n:
            size = min(self.batch, n - done)
            g = self.fields.sample(rng, size).reshape(size, -1)
            g += self.params.mean
            yield expit(g, out=g)
            done += size

    def integrals(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``int expit(g)`` over the domain for ``n`` independent fields."""
        out = [p.sum(axis=1) * self.fields.cell_volume for p in self._batches(rng, n)]
        return np.concatenate(out) if out else np.zeros(0)

    def sample(self, rng: np.random.Generator, n: int, with_points: bool = True):
        """Returns observed counts and, optionally, the list of point arrays."""
        lam, h = self.params.lam, self.fields.dom.sides / self.fields.res
        counts, points = [], []
        for probs in self._batches(rng, n):
            mass = probs.sum(axis=1)
            k = rng.poisson(lam * self.fields.cell_volume * mass)
            counts.append(k)
            if not with_points:
                continue
            cum = np.cumsum(probs, axis=1)
            for row, ki in enumerate(k):
                cells = np.searchsorted(cum[row], rng.random(ki) * cum[row, -1], side="right")
                cells = np.minimum(cells, cum.shape[1] - 1)
                jitter = (rng.random((ki, h.size)) - 0.5) * h
                points.append(self.fields.cells[cells] + jitter)
        counts = np.concatenate(counts) if counts else np.zeros(0, dtype=np.int64)
        return (counts, points) if with_points else counts


CHUNK = 2000


def _appendix_b_chunk(job):
    """Both simulators for one chunk of replicates on the chunk's own stream."""
    params, grid_res, rng, n, radii, with_pairs = job
    alg_counts = np.empty(n, dtype=np.int64)
    alg_pairs = np.empty((n, len(radii)), dtype=np.int64)
    for i in range(n):
        _, observed = simulate_sgcp(rng, params)
        alg_counts[i] = len(observed)
        if with_pairs:
            alg_pairs[i] = pair_counts(observed.locations, radii)
    oracle = GridCoxOracle(params, grid_res)
    if not with_pairs:
        return alg_counts, alg_pairs, oracle.sample(rng, n, with_points=False), None
    grid_counts, grid_points = oracle.sample(rng, n, with_points=True)
    grid_pairs = np.array([pair_counts(p, radii) for p in grid_points]).reshape(n, len(radii))
    return alg_counts, alg_pairs, grid_counts, grid_pairs


def verify_appendix_b(rng: np.random.Generator, params: SgcpParams, n_reps: int, grid_res: int = 128,
                      radii=DEFAULT_RADII, with_pairs: bool = True) -> dict:
    """Compare the observed pattern of the thinning construction against a grid Cox oracle.

    Tests the count law and, with ``with_pairs``, pair counts at each radius
    (an unnormalised Ripley-K summary).  Replicates run in fixed chunks with
    spawned streams, in parallel up to ``COXTHIN_THREADS`` processes; the
    result does not depend on the number of processes.
    """
    t0 = time.perf_counter()
    sizes = [min(CHUNK, n_reps - k) for k in range(0, n_reps, CHUNK)]
    jobs = [(params, grid_res, r, n, tuple(radii), with_pairs) for r, n in zip(rng.spawn(len(sizes)), sizes)]
    workers = max_workers(len(jobs))
    if workers == 1:
        parts = [_appendix_b_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_appendix_b_chunk, jobs))
    alg_counts, alg_pairs, grid_counts, grid_pairs = (
        np.concatenate([p[k] for p in parts]) if parts and parts[0][k] is not None else None for k in range(4))
    report = {
        "n_reps": n_reps,
        "grid_res": grid_res,
        "workers": workers,
        "clipped_spectrum_fraction": GridFieldSampler(params.kernel, params.dom, grid_res).clipped_fraction,
        "mean_count": {"thinning": float(alg_counts.mean()), "grid": float(grid_counts.mean())},
        "count_test": two_sample_chi2(alg_counts, grid_counts),
    }
    if with_pairs:
        report["pair_tests"] = [
            {"radius": float(r), **two_sample_chi2(alg_pairs[:, j], grid_pairs[:, j])}
            for j, r in enumerate(radii)
        ]
    report["seconds"] = time.perf_counter() - t0
    return report


def appendix_c_identities(rng: np.random.Generator, params: SgcpParams, n_reps: int,
                          grid_res: int = 64) -> dict:
    """Estimates of ``E[-lam int expit g]`` and ``E[exp(-lam int expit g)]`` with their targets."""
    oracle = GridCoxOracle(params, grid_res)
    lam_int = params.lam * oracle.integrals(rng, n_reps)
    half = params.lam_volume / 2
    neg = -lam_int
    expo = np.exp(-lam_int)
    mean_neg, se_neg = float(neg.mean()), iid_se(neg)
    mean_exp, se_exp = float(expo.mean()), iid_se(expo)
    return {
        "lam_volume": params.lam_volume,
        "n_reps": n_reps,
        "grid_res": grid_res,
        "neg_integral": {"estimate": mean_neg, "se": se_neg, "target": -half,
                         "z": (mean_neg + half) / se_neg},
        "exp_integral": {"estimate": mean_exp, "se": se_exp, "bound": float(np.exp(-half)),
                         "excess_in_se": (mean_exp - np.exp(-half)) / se_exp},
    }


def verify_appendix_c(rng: np.random.Generator, params: SgcpParams, n_reps: int, grid_res: int = 64,
                      n_sweeps: int = 0, **sampler_kw) -> dict:
    """Symmetry identity, Jensen bound and, if ``n_sweeps > 0``, the empty-given-empty comparison."""
    report = appendix_c_identities(rng, params, n_reps, grid_res)
    if n_sweeps:
        report["empty_given_empty"] = compare_samplers(rng, params, n_bdm_sweeps=n_sweeps,
                                                       n_iid=n_reps, **sampler_kw)["empty_probability"]
    return report


def compare_samplers(rng: np.random.Generator, params: SgcpParams, observed: MarkedPattern | None = None,
                     n_bdm_sweeps: int = 10**5, n_iid: int = 10**5, n_burn: int = 1000,
                     steps_per_sweep: int = 10, include_goncalves: bool = True) -> dict:
    """Birth-death-move chain against the two flawed samplers (and the prior thinned law when nothing is observed)."""
    t0 = time.perf_counter()
    if observed is None:
        observed = MarkedPattern.empty(params.dom, n_marks=1)
    bdm = np.asarray(sample_conditional_bdm(rng, observed, params, n_bdm_sweeps, steps_per_sweep,
                                            n_burn=n_burn, counts_only=True))
    rao = np.array([len(sample_conditional_flawed_rao(rng, observed, params)) for _ in range(n_iid)])

    p_bdm, se_bdm = float(np.mean(bdm == 0)), batch_means_se(bdm == 0)
    p_rao, se_rao = float(np.mean(rao == 0)), iid_se(rao == 0)
    z = z_test(p_bdm, se_bdm, p_rao, se_rao)
    report = {
        "lam_volume": params.lam_volume,
        "n_observed": len(observed),
        "empty_probability": {
            "bdm": p_bdm, "bdm_se": se_bdm, "rao": p_rao, "rao_se": se_rao,
            "difference_in_se": (p_rao - p_bdm) / z["se"],
            "bdm_below_rao": bool(p_rao - p_bdm > 3 * z["se"]),
        },
        "mean_count": {"bdm": float(bdm.mean()), "rao": float(rao.mean())},
    }
    if len(observed) == 0:
        marginal = np.array([len(simulate_sgcp(rng, params)[0]) for _ in range(n_iid)])
        report["rao_vs_thinned_marginal"] = two_sample_chi2(rao, marginal)
        report["mean_count"]["thinned_marginal"] = float(marginal.mean())
    if include_goncalves:
        gon = np.array([len(sample_conditional_flawed_goncalves(rng, observed, params)) for _ in range(n_iid)])
        report["goncalves_vs_poisson"] = poisson_gof(gon, params.lam)
        report["goncalves_vs_bdm"] = two_sample_chi2(gon, bdm)
        report["mean_count"]["goncalves"] = float(gon.mean())
    report["seconds"] = time.perf_counter() - t0
    return report
