"""Multitype SGCP: a homogeneous PPP coloured by a softmax of an LMC field."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from ..errors import ParameterError, StructureError
from ..gp import CholeskyState, LMCParams, mvn_logpdf
from ..pattern import Domain, MarkedPattern, sample_homogeneous_ppp


def log_sigma(g) -> np.ndarray:
    """Log class probabilities ``(log sigma_0, ..., log sigma_p)`` with the zero logit for class 0."""
    g = np.asarray(g, dtype=float)
    logits = np.concatenate([np.zeros(g.shape[:-1] + (1,)), g], axis=-1)
    top = logits.max(axis=-1, keepdims=True)
    shifted = logits - top
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def sigma(g) -> np.ndarray:
    """Class probabilities; the last axis of ``g`` holds the ``p`` logits."""
    s = np.exp(log_sigma(g))
    return s / s.sum(axis=-1, keepdims=True)


@dataclass(frozen=True, eq=False)
class MtsgcpParams:
    lam: float
    lmc: LMCParams
    dom: Domain

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ParameterError(f"lambda must be positive, got {self.lam}")

    @property
    def p(self) -> int:
        return self.lmc.p


@dataclass(frozen=True, eq=False)
class GibbsState:
    """Thinned points, per-type observed points, their LMC values, and hyperparameters.

    ``chol`` factors the LMC covariance over all observed points (type 1 first,
    then type 2, ...) followed by the thinned points.  ``values`` is the matching
    ``(n, p)`` array of GP values; it is the authoritative copy, the marks held
    in ``thinned``/``observed`` are views for export.
    """

    observed_locations: np.ndarray
    observed_types: np.ndarray
    chol: CholeskyState
    values: np.ndarray
    lam: float
    lmc: LMCParams
    dom: Domain

    @property
    def p(self) -> int:
        return self.lmc.p

    @property
    def n_obs(self) -> int:
        return len(self.observed_types)

    @property
    def n0(self) -> int:
        return self.chol.n - self.n_obs

    @property
    def n_total(self) -> int:
        return self.chol.n

    @property
    def colours(self) -> np.ndarray:
        """Colour of every row of ``values`` (0 for thinned)."""
        return np.concatenate([self.observed_types, np.zeros(self.n0, dtype=np.int64)])

    @property
    def thinned(self) -> MarkedPattern:
        return MarkedPattern._trusted(self.chol.locations[self.n_obs:].copy(), self.dom,
                                      marks=self.values[self.n_obs:].copy())

    @property
    def observed(self) -> list[MarkedPattern]:
        out = []
        for k in range(1, self.p + 1):
            idx = np.flatnonzero(self.observed_types == k)
            out.append(MarkedPattern._trusted(self.observed_locations[idx], self.dom, marks=self.values[idx]))
        return out

    def replace(self, **fields) -> "GibbsState":
        current = {f: getattr(self, f) for f in self.__dataclass_fields__}
        current.update(fields)
        return GibbsState(**current)

    @classmethod
    def build(cls, thinned: MarkedPattern, observed: Sequence[MarkedPattern], lam: float,
              lmc: LMCParams, dom: Domain | None = None) -> "GibbsState":
        dom = thinned.domain if dom is None else dom
        p = lmc.p
        if len(observed) != p:
            raise StructureError(f"expected {p} observed patterns, got {len(observed)}")
        for pat in (thinned, *observed):
            if pat.marks is None or pat.n_marks != p:
                raise StructureError(f"every point needs {p} GP marks")
        obs_locs = np.vstack([o.locations for o in observed]) if observed else np.zeros((0, dom.d))
        types = np.concatenate([np.full(len(o), k + 1, dtype=np.int64) for k, o in enumerate(observed)])
        values = np.vstack([*(o.marks for o in observed), thinned.marks])
        locs = np.vstack([obs_locs, thinned.locations])
        chol = CholeskyState.build(lmc, locs)
        return cls(obs_locs, types, chol, values.copy(), float(lam), lmc, dom)


def simulate_mtsgcp(rng: np.random.Generator, params: MtsgcpParams) -> tuple[MarkedPattern, list[MarkedPattern]]:
    """PPP(lam) base points, LMC values there, then one categorical draw per point from ``sigma``."""
    base = sample_homogeneous_ppp(rng, params.dom, params.lam).points
    n, p = len(base), params.p
    if n:
        chol = CholeskyState.build(params.lmc, base)
        g = (chol.factor @ rng.standard_normal(n * p)).reshape(n, p) + params.lmc.mu
        cum = np.cumsum(sigma(g), axis=1)
        colours = np.minimum((rng.random(n)[:, None] >= cum).sum(axis=1), p)
    else:
        g = np.zeros((0, p))
        colours = np.zeros(0, dtype=np.int64)
    parts = [MarkedPattern._trusted(base[colours == k], params.dom, marks=g[colours == k])
             for k in range(p + 1)]
    return parts[0], parts[1:]


def log_joint_density_mt(state: GibbsState) -> float:
    """``-lam|S| + n log lam - sum log n_k! + log N(g | mu, Sigma) + sum log sigma_colour(g)``."""
    counts = np.bincount(state.colours, minlength=state.p + 1)
    n = state.n_total
    out = -state.lam * state.dom.volume - float(np.sum(gammaln(counts + 1)))
    if n:
        out += n * np.log(state.lam)
        out += mvn_logpdf(state.values.reshape(-1), np.tile(state.lmc.mu, n), state.chol)
        out += float(np.sum(log_sigma(state.values)[np.arange(n), state.colours]))
    return float(out)
