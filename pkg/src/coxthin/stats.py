"""Small statistical helpers used by the verification experiments."""
from __future__ import annotations

import numpy as np
from scipy import stats
from scipy.spatial.distance import pdist


def _merge_columns(table: np.ndarray, min_expected: float) -> np.ndarray:
    """Merge adjacent columns left to right until every expected cell count reaches ``min_expected``."""
    row_share = table.sum(axis=1) / table.sum()
    merged, acc = [], np.zeros(table.shape[0])
    for col in table.T:
        acc = acc + col
        if acc.sum() * row_share.min() >= min_expected:
            merged.append(acc)
            acc = np.zeros(table.shape[0])
    if acc.sum() > 0:
        if merged:
            merged[-1] = merged[-1] + acc
        else:
            merged.append(acc)
    return np.array(merged).T


def two_sample_chi2(a, b, min_expected: float = 5.0) -> dict:
    """Chi-square homogeneity test for two samples of integer-valued outcomes."""
    a, b = np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64)
    values = np.union1d(a, b)
    table = np.vstack([
        np.bincount(np.searchsorted(values, a), minlength=len(values)),
        np.bincount(np.searchsorted(values, b), minlength=len(values)),
    ]).astype(float)
    merged = _merge_columns(table, min_expected)
    if merged.shape[1] < 2:
        return {"statistic": 0.0, "dof": 0, "p_value": 1.0, "bins": int(merged.shape[1])}
    stat, p, dof, _ = stats.chi2_contingency(merged, correction=False)
    return {"statistic": float(stat), "dof": int(dof), "p_value": float(p), "bins": int(merged.shape[1])}


def poisson_gof(counts, mean: float, min_expected: float = 5.0) -> dict:
    """Chi-square goodness of fit of integer counts against Poisson(``mean``), upper tail lumped."""
    counts = np.asarray(counts, dtype=np.int64)
    n = len(counts)
    k_max = max(int(counts.max(initial=0)), int(stats.poisson.ppf(1 - 1e-12, mean)))
    observed = np.bincount(counts, minlength=k_max + 1).astype(float)
    expected = n * stats.poisson.pmf(np.arange(k_max + 1), mean)
    expected[-1] += n * stats.poisson.sf(k_max, mean)
    # merge from both tails inward into bins with enough expected mass
    bins_obs, bins_exp, acc_o, acc_e = [], [], 0.0, 0.0
    for o, e in zip(observed, expected):
        acc_o, acc_e = acc_o + o, acc_e + e
        if acc_e >= min_expected:
            bins_obs.append(acc_o)
            bins_exp.append(acc_e)
            acc_o = acc_e = 0.0
    if bins_obs:
        bins_obs[-1] += acc_o
        bins_exp[-1] += acc_e
    if len(bins_obs) < 2:
        return {"statistic": 0.0, "dof": 0, "p_value": 1.0, "bins": len(bins_obs)}
    stat, p = stats.chisquare(bins_obs, bins_exp)
    return {"statistic": float(stat), "dof": len(bins_obs) - 1, "p_value": float(p), "bins": len(bins_obs)}


def batch_means_se(x, n_batches: int = 50) -> float:
    """Standard error of the mean of a (possibly autocorrelated) chain by non-overlapping batch means."""
    x = np.asarray(x, dtype=float)
    size = len(x) // n_batches
    if size < 1:
        raise ValueError(f"need at least {n_batches} samples, got {len(x)}")
    means = x[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(n_batches))


def iid_se(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(x.std(ddof=1) / np.sqrt(len(x)))


def z_test(mean_a: float, se_a: float, mean_b: float, se_b: float) -> dict:
    """Two-sided z-test for equality of two independent estimates."""
    se = float(np.hypot(se_a, se_b))
    z = (mean_a - mean_b) / se if se > 0 else 0.0
    return {"z": float(z), "se": se, "p_value": float(2 * stats.norm.sf(abs(z)))}


def pair_counts(points: np.ndarray, radii) -> np.ndarray:
    """Number of unordered point pairs closer than each radius."""
    radii = np.asarray(radii, dtype=float)
    if len(points) < 2:
        return np.zeros(len(radii), dtype=np.int64)
    d = pdist(points)
    return (d[:, None] < radii[None, :]).sum(axis=0)
