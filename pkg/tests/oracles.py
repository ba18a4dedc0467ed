"""Independent oracles shared by unit and acceptance tests."""
import numpy as np
from scipy.special import gammaln
from scipy.stats import multivariate_normal, norm

from coxthin.gp import Kernel, LMCParams
from coxthin.mtsgcp.model import GibbsState, log_joint_density_mt, log_sigma
from coxthin.pattern import Domain, MarkedPattern
from coxthin.sgcp.bdm import MoveProbs, bdm_log_ratio
from coxthin.sgcp.model import SgcpParams, log1m_expit, log_conditional_density_unnorm


def conditional_logpdf(model, jitter, known_locs, known_vals, mean, loc, g):
    """log N(g | conditional given known values) from a full jittered covariance and an explicit inverse."""
    p = model.p
    locs = np.vstack([known_locs.reshape(-1, 2), loc[None, :]])
    full = model.cross_cov(locs, locs) + jitter * np.eye(len(locs) * p)
    mu = np.tile(mean, len(locs))
    k = len(known_locs) * p
    if k == 0:
        return multivariate_normal(mu, full).logpdf(g)
    s11, s12, s22 = full[:k, :k], full[:k, k:], full[k:, k:]
    inv = np.linalg.inv(s11)
    m = mu[k:] + s12.T @ inv @ (known_vals.reshape(-1) - mu[:k])
    c = s22 - s12.T @ inv @ s12
    return multivariate_normal(m, c).logpdf(np.atleast_1d(g))


class _Target:
    """Labelled conditional target of the thinned points plus the pieces the proposals need."""

    def __init__(self, log_pi, model, jitter, mean, log_w, lam, dom, fixed_locs, fixed_vals):
        self.log_pi, self.model, self.jitter, self.mean = log_pi, model, jitter, mean
        self.log_w, self.lam, self.dom = log_w, lam, dom
        self.fixed_locs, self.fixed_vals = fixed_locs, fixed_vals

    def labelled(self, locs, vals):
        return self.log_pi(locs, vals) + gammaln(len(locs) + 1)

    def cond(self, locs, vals, loc, g):
        known_l = np.vstack([self.fixed_locs, locs])
        known_v = np.vstack([self.fixed_vals, vals])
        return conditional_logpdf(self.model, self.jitter, known_l, known_v, self.mean, loc, g)


def _gap(rng, t: _Target, probs: MoveProbs, scale: float, locs, vals, kind):
    n0 = len(locs)
    lv = t.lam * t.dom.volume
    ratio = lambda k, n, **w: min(0.0, bdm_log_ratio(k, n, lv, probs, **w))
    p = vals.shape[1]
    if kind == "birth":
        loc, g = t.dom.uniform(rng, 1)[0], rng.normal(0, 1.5, p)
        locs2, vals2 = np.vstack([locs, loc]), np.vstack([vals, g])
        lhs = (t.labelled(locs, vals) + np.log(probs.birth) - np.log(t.dom.volume)
               + t.cond(locs, vals, loc, g) + ratio("birth", n0, log_w_new=t.log_w(g)))
        rhs = (t.labelled(locs2, vals2) + np.log(probs.death) - np.log(n0 + 1)
               + ratio("death", n0 + 1, log_w_old=t.log_w(g)))
        return lhs - rhs
    j = int(rng.integers(n0))
    rest_l, rest_v = np.delete(locs, j, 0), np.delete(vals, j, 0)
    if kind == "death":
        lhs = (t.labelled(locs, vals) + np.log(probs.death) - np.log(n0)
               + ratio("death", n0, log_w_old=t.log_w(vals[j])))
        rhs = (t.labelled(rest_l, rest_v) + np.log(probs.birth) - np.log(t.dom.volume)
               + t.cond(rest_l, rest_v, locs[j], vals[j]) + ratio("birth", n0 - 1, log_w_new=t.log_w(vals[j])))
        return lhs - rhs
    while True:
        loc = locs[j] + scale * rng.standard_normal(2)
        if t.dom.contains(loc[None])[0]:
            break
    g = rng.normal(0, 1.5, p)
    locs2, vals2 = np.vstack([rest_l, loc]), np.vstack([rest_v, g])
    step = lambda a, b: float(norm.logpdf(b - a, scale=scale).sum())
    lhs = (t.labelled(locs, vals) + np.log(probs.move) - np.log(n0) + step(locs[j], loc)
           + t.cond(rest_l, rest_v, loc, g) + ratio("move", n0, log_w_new=t.log_w(g), log_w_old=t.log_w(vals[j])))
    rhs = (t.labelled(locs2, vals2) + np.log(probs.move) - np.log(n0) + step(loc, locs[j])
           + t.cond(rest_l, rest_v, locs[j], vals[j])
           + ratio("move", n0, log_w_new=t.log_w(vals[j]), log_w_old=t.log_w(g)))
    return lhs - rhs


def _random_probs(rng):
    w = rng.dirichlet([2, 2, 2])
    return MoveProbs(*w)


def sgcp_detailed_balance_gaps(rng, n_pairs):
    """Log-scale gaps of pi(x) q(x->x') a(x->x') vs the reverse for random univariate states."""
    dom = Domain.unit_square()
    gaps = []
    for _ in range(n_pairs):
        params = SgcpParams(rng.uniform(0.5, 10), Kernel(rng.uniform(0.5, 6), rng.uniform(0.5, 2)), dom,
                            rng.normal(0, 0.5))
        n1, n0 = int(rng.integers(0, 4)), int(rng.integers(0, 6))
        obs_l, obs_v = dom.uniform(rng, n1), rng.normal(0, 1.5, (n1, 1))
        observed = MarkedPattern(obs_l, dom, marks=obs_v)

        def log_pi(locs, vals):
            return log_conditional_density_unnorm(MarkedPattern(locs, dom, marks=vals), observed, params)

        t = _Target(log_pi, params.kernel, params.kernel.default_jitter, np.array([params.mean]),
                    lambda g: float(log1m_expit(g[0])), params.lam, dom, obs_l, obs_v)
        kind = "birth" if n0 == 0 else ("birth", "death", "move")[int(rng.integers(3))]
        gaps.append(_gap(rng, t, _random_probs(rng), rng.uniform(0.02, 0.3),
                         dom.uniform(rng, n0), rng.normal(0, 1.5, (n0, 1)), kind))
    return np.array(gaps)


def mt_detailed_balance_gaps(rng, n_pairs, p=2):
    """Same identity for the multitype thinned-point update (weight sigma_0)."""
    dom = Domain.unit_square()
    gaps = []
    for _ in range(n_pairs):
        A = np.tril(rng.normal(size=(p, p)))
        A[np.diag_indices(p)] = rng.uniform(0.5, 1.5, p)
        lmc = LMCParams(A, rng.uniform(1, 6, p), rng.normal(0, 0.5, p))
        lam = rng.uniform(1, 10)
        counts = rng.integers(0, 3, size=p)
        observed = [MarkedPattern(dom.uniform(rng, c), dom, marks=rng.normal(0, 1.5, (c, p))) for c in counts]
        obs_l = np.vstack([o.locations for o in observed])
        obs_v = np.vstack([o.marks for o in observed])

        def log_pi(locs, vals):
            thinned = MarkedPattern(locs, dom, marks=vals.reshape(-1, p))
            return log_joint_density_mt(GibbsState.build(thinned, observed, lam, lmc, dom))

        t = _Target(log_pi, lmc, lmc.default_jitter, lmc.mu, lambda g: float(log_sigma(g)[0]),
                    lam, dom, obs_l, obs_v)
        n0 = int(rng.integers(0, 5))
        kind = "birth" if n0 == 0 else ("birth", "death", "move")[int(rng.integers(3))]
        gaps.append(_gap(rng, t, _random_probs(rng), rng.uniform(0.02, 0.3),
                         dom.uniform(rng, n0), rng.normal(0, 1.5, (n0, p)), kind))
    return np.array(gaps)


def random_gibbs_state(rng, p=2, dom=None):
    """A GibbsState with random hyperparameters, points and GP values (not a posterior draw)."""
    dom = Domain.unit_square() if dom is None else dom
    A = np.tril(rng.normal(size=(p, p)))
    A[np.diag_indices(p)] = rng.uniform(0.5, 1.5, p)
    lmc = LMCParams(A, rng.uniform(1, 6, p), rng.normal(0, 0.5, p))
    observed = [MarkedPattern(dom.uniform(rng, c), dom, marks=rng.normal(0, 1.5, (c, p)))
                for c in rng.integers(1, 5, size=p)]
    n0 = int(rng.integers(0, 4))
    thinned = MarkedPattern(dom.uniform(rng, n0), dom, marks=rng.normal(0, 1.5, (n0, p)))
    return GibbsState.build(thinned, observed, rng.uniform(1, 20), lmc, dom)


def gradient_fd_errors(rng, n_states=20, h=1e-5):
    """Relative error (max-norm) of the analytic GP-value gradient against central differences."""
    from coxthin.mtsgcp.gibbs import grad_log_target_g, log_target_g

    errors = []
    for _ in range(n_states):
        state = random_gibbs_state(rng)
        v = state.values
        analytic = grad_log_target_g(state, v)
        fd = np.zeros_like(v)
        for idx in np.ndindex(v.shape):
            up, dn = v.copy(), v.copy()
            up[idx] += h
            dn[idx] -= h
            fd[idx] = (log_target_g(state, up) - log_target_g(state, dn)) / (2 * h)
        errors.append(np.abs(analytic - fd).max() / max(np.abs(fd).max(), 1.0))
    return np.array(errors)
