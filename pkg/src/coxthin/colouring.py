"""Joint densities of colour-split point processes, with an exhaustive discrete oracle.

If a finite point process on ``S x {0..K}`` has density ``f`` (counting-scattering
convention), the processes ``X_0..X_K`` of locations carrying each colour have
joint density, with respect to the product of counting-scattering measures,

    f(S_0, ..., S_K) = n! / (n_0! ... n_K!) * f(S_0 x {0} u ... u S_K x {K}).

The discrete oracle checks this on a space of ``m`` cells by brute-force
enumeration of the base process.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammaln
from scipy.stats import binom, poisson

from .errors import ParameterError, SizeError, StructureError
from .pattern import Domain, MarkedPattern

__all__ = [
    "ColouredSplit",
    "split_by_colour",
    "merge",
    "log_multinomial",
    "log_joint_density_from_marked",
    "DiscreteColouringModel",
    "enumerate_joint_oracle",
    "theorem_joint_pmf",
    "marginal_pmf",
    "standard_models",
    "verify_colouring_suite",
]

ENUMERATION_LIMIT = 10**7


@dataclass(frozen=True)
class ColouredSplit:
    """Per-colour patterns ``S_0..S_K`` (colour field stripped)."""

    parts: tuple[MarkedPattern, ...]

    def __post_init__(self):
        if len(self.parts) < 2:
            raise StructureError("a coloured split needs at least two colours (K >= 1)")
        if any(p.colours is not None for p in self.parts):
            raise StructureError("split parts must not carry colour labels")

    @property
    def K(self) -> int:
        return len(self.parts) - 1

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(len(p) for p in self.parts)


def split_by_colour(base: MarkedPattern, K: int | None = None) -> ColouredSplit:
    """Split a coloured pattern into ``K + 1`` per-colour patterns (``K`` defaults to the max label, at least 1)."""
    if base.colours is None:
        raise StructureError("pattern has no colour labels")
    top = int(base.colours.max()) if len(base) else 0
    K = max(top, 1) if K is None else int(K)
    if top > K:
        raise StructureError(f"colour {top} exceeds K={K}")
    parts = []
    for k in range(K + 1):
        part = base.select(base.colours == k)
        parts.append(MarkedPattern._trusted(part.locations, base.domain, part.times, part.marks))
    return ColouredSplit(tuple(parts))


def merge(split: ColouredSplit) -> MarkedPattern:
    """Reassemble the coloured pattern (points ordered by colour)."""
    labelled = [
        MarkedPattern._trusted(p.locations, p.domain, p.times, p.marks, np.full(len(p), k))
        for k, p in enumerate(split.parts)
    ]
    return MarkedPattern.concat(labelled)


def log_multinomial(counts: Sequence[int]) -> float:
    n = sum(counts)
    return float(gammaln(n + 1) - sum(gammaln(c + 1) for c in counts))


def log_joint_density_from_marked(split: ColouredSplit,
                                  log_marked_density: Callable[[MarkedPattern], float]) -> float:
    """Joint log density of ``X_0..X_K`` from the density of the coloured base process."""
    return log_multinomial(split.counts) + float(log_marked_density(merge(split)))


# --- discrete oracle -------------------------------------------------------------------


class DiscreteColouringModel:
    """Base process on ``m`` cells of measure ``1/m`` (the unit interval) coloured in ``{0..K}``.

    Points are scattered i.i.d. over cells with probabilities ``cell_probs``
    after drawing their number from ``count_pmf``.  Colours are drawn jointly
    given the cells from

        P(c | cells) ∝ exp(sum_i alpha[cell_i, c_i] + beta * sum_{i<j} [c_i == c_j] * adj[cell_i, cell_j]),

    which is independent colouring when ``beta == 0`` and dependent otherwise.
    ``log_density`` is the density of the coloured process with respect to the
    counting-scattering measure built on ``(1/m) x counting`` over cells.
    """

    def __init__(self, m: int, K: int, count_pmf: Callable[[int], float], cell_probs=None,
                 alpha=None, beta: float = 0.0, adjacency=None, name: str = "model"):
        if m < 1 or K < 1:
            raise ParameterError("need m >= 1 cells and K >= 1")
        self.m, self.K, self.name = int(m), int(K), name
        self.count_pmf = count_pmf
        self.cell_probs = np.full(m, 1.0 / m) if cell_probs is None else np.asarray(cell_probs, float)
        if not np.isclose(self.cell_probs.sum(), 1.0) or np.any(self.cell_probs < 0):
            raise ParameterError("cell_probs must be a probability vector")
        self.alpha = np.zeros((m, K + 1)) if alpha is None else np.asarray(alpha, float)
        self.beta = float(beta)
        self.adjacency = np.eye(m) if adjacency is None else np.asarray(adjacency, float)
        self.cell_measure = 1.0 / m
        self.domain = Domain.unit_interval()
        self._log_colour_norm = lru_cache(maxsize=None)(self._log_colour_norm_uncached)

    def _colour_energy(self, cells: tuple[int, ...], colours: tuple[int, ...]) -> float:
        e = sum(self.alpha[s, c] for s, c in zip(cells, colours))
        if self.beta:
            n = len(cells)
            for i in range(n):
                for j in range(i + 1, n):
                    if colours[i] == colours[j]:
                        e += self.beta * self.adjacency[cells[i], cells[j]]
        return e

    def _log_colour_norm_uncached(self, sorted_cells: tuple[int, ...]) -> float:
        energies = [self._colour_energy(sorted_cells, c)
                    for c in itertools.product(range(self.K + 1), repeat=len(sorted_cells))]
        return float(np.logaddexp.reduce(energies)) if energies else 0.0

    def log_density(self, cells: Sequence[int], colours: Sequence[int]) -> float:
        n = len(cells)
        p_n = self.count_pmf(n)
        if p_n <= 0:
            return -np.inf
        out = math.log(p_n)
        if n == 0:
            return out
        cells, colours = tuple(int(c) for c in cells), tuple(int(c) for c in colours)
        # location density with respect to the cell measure is q(cell) / (1/m)
        out += sum(math.log(self.cell_probs[s] / self.cell_measure) for s in cells)
        order = sorted(range(n), key=lambda i: cells[i])
        sc = tuple(cells[i] for i in order)
        cc = tuple(colours[i] for i in order)
        return out + self._colour_energy(sc, cc) - self._log_colour_norm(sc)

    def cell_centre(self, cell: int) -> float:
        return (cell + 0.5) * self.cell_measure

    def cells_of(self, pattern: MarkedPattern) -> tuple[int, ...]:
        idx = np.floor(pattern.locations[:, 0] / self.cell_measure).astype(int)
        return tuple(np.minimum(idx, self.m - 1).tolist())

    def log_marked_density(self, pattern: MarkedPattern) -> float:
        """Density of a coloured :class:`MarkedPattern` whose locations are cell centres."""
        if pattern.colours is None:
            raise StructureError("marked density needs colour labels")
        return self.log_density(self.cells_of(pattern), pattern.colours.tolist())


def _guard(m: int, K: int, n_max: int):
    total = sum((m * (K + 1)) ** n for n in range(n_max + 1))
    if total > ENUMERATION_LIMIT:
        raise SizeError(f"enumeration needs {total} terms, above the {ENUMERATION_LIMIT} limit")


def _config_key(cells, colours, K) -> tuple[tuple[int, ...], ...]:
    per = [[] for _ in range(K + 1)]
    for s, c in zip(cells, colours):
        per[c].append(s)
    return tuple(tuple(sorted(p)) for p in per)


def enumerate_joint_oracle(m: int, K: int, model: DiscreteColouringModel, n_max: int) -> dict:
    """Exact PMF of the colour-split configuration by summing the base process over all tuples.

    Keys are tuples over colours of sorted cell tuples (per-colour multisets).
    """
    if (m, K) != (model.m, model.K):
        raise ParameterError("model dimensions disagree with (m, K)")
    _guard(m, K, n_max)
    w = model.cell_measure
    pmf: dict = {}
    for n in range(n_max + 1):
        weight = w**n
        for cells in itertools.product(range(m), repeat=n):
            for colours in itertools.product(range(K + 1), repeat=n):
                ld = model.log_density(cells, colours)
                if ld == -np.inf:
                    continue
                key = _config_key(cells, colours, K)
                pmf[key] = pmf.get(key, 0.0) + math.exp(ld) * weight
    return pmf


def _compositions(n_max: int, parts: int):
    for counts in itertools.product(range(n_max + 1), repeat=parts):
        if sum(counts) <= n_max:
            yield counts


def theorem_joint_pmf(m: int, K: int, model: DiscreteColouringModel, n_max: int) -> dict:
    """PMF of the split configuration from the multinomial joint density, integrated cell-wise.

    The joint density is integrated against the product of per-colour
    counting-scattering measures: ordered cell tuples for every colour, each
    cell weighted by its measure.
    """
    _guard(m, K, n_max)
    w = model.cell_measure
    dom = model.domain
    pmf: dict = {}
    for counts in _compositions(n_max, K + 1):
        n = sum(counts)
        for assignment in itertools.product(range(m), repeat=n):
            per_colour, start = [], 0
            for c in counts:
                per_colour.append(assignment[start:start + c])
                start += c
            parts = tuple(
                MarkedPattern._trusted(np.array([model.cell_centre(s) for s in cells]).reshape(-1, 1), dom)
                for cells in per_colour
            )
            ld = log_joint_density_from_marked(ColouredSplit(parts), model.log_marked_density)
            if ld == -np.inf:
                continue
            key = tuple(tuple(sorted(cells)) for cells in per_colour)
            pmf[key] = pmf.get(key, 0.0) + math.exp(ld) * w**n
    return pmf


def marginal_pmf(pmf: dict, drop: int = 0) -> dict:
    """Marginalize colour ``drop`` out of a split-configuration PMF."""
    out: dict = {}
    for key, p in pmf.items():
        k2 = key[:drop] + key[drop + 1:]
        out[k2] = out.get(k2, 0.0) + p
    return out


def max_abs_difference(a: dict, b: dict) -> float:
    keys = set(a) | set(b)
    return max((abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in keys), default=0.0)


def truncated_poisson(mean: float, n_max: int) -> Callable[[int], float]:
    norm = poisson.cdf(n_max, mean)
    return lambda n: float(poisson.pmf(n, mean) / norm) if 0 <= n <= n_max else 0.0


def standard_models() -> list[tuple[DiscreteColouringModel, int]]:
    """The fixed verification suite: ``(model, n_max)`` pairs, two with dependent colouring."""
    chain4 = np.array([[1, 1, 0, 0], [1, 1, 1, 0], [0, 1, 1, 1], [0, 0, 1, 1]], float)
    return [
        (DiscreteColouringModel(3, 1, truncated_poisson(1.5, 4),
                                alpha=[[0.0, 0.5], [0.0, -0.3], [0.0, 1.2]], name="indep-poisson-m3-K1"), 4),
        (DiscreteColouringModel(2, 2, truncated_poisson(1.0, 3), cell_probs=[0.3, 0.7],
                                alpha=[[0.0, 0.2, -0.4], [0.1, 0.0, 0.6]], name="indep-m2-K2"), 3),
        (DiscreteColouringModel(4, 1, lambda n: float(binom.pmf(n, 4, 0.4)), cell_probs=[0.1, 0.2, 0.3, 0.4],
                                alpha=[[0, 0.3], [0, -0.2], [0, 0.0], [0, 0.5]], beta=0.8,
                                adjacency=chain4, name="dependent-m4-K1"), 4),
        (DiscreteColouringModel(3, 2, truncated_poisson(2.0, 4), alpha=[[0, 0.4, -0.4], [0, 0, 0], [0.3, 0, -0.2]],
                                beta=-1.1, adjacency=np.ones((3, 3)), name="dependent-m3-K2"), 4),
        (DiscreteColouringModel(4, 2, lambda n: float(binom.pmf(n, 3, 0.5)), cell_probs=[0.4, 0.3, 0.2, 0.1],
                                beta=1.5, adjacency=chain4, name="dependent-neighbour-m4-K2"), 3),
        (DiscreteColouringModel(2, 1, truncated_poisson(0.7, 0), name="empty-only"), 0),
    ]


def verify_colouring_suite(models=None) -> dict:
    """Compare oracle and theorem PMFs (joint and X_0-marginal) on every suite model."""
    models = standard_models() if models is None else models
    rows = []
    for model, n_max in models:
        oracle = enumerate_joint_oracle(model.m, model.K, model, n_max)
        theorem = theorem_joint_pmf(model.m, model.K, model, n_max)
        rows.append({
            "model": model.name,
            "m": model.m,
            "K": model.K,
            "n_max": n_max,
            "dependent": model.beta != 0.0,
            "max_abs_error": max_abs_difference(oracle, theorem),
            "marginal_max_abs_error": max_abs_difference(marginal_pmf(oracle), marginal_pmf(theorem)),
            "total_mass_oracle": float(sum(oracle.values())),
            "total_mass_theorem": float(sum(theorem.values())),
        })
    worst = max(max(r["max_abs_error"], r["marginal_max_abs_error"]) for r in rows)
    return {"models": rows, "max_abs_error": worst, "passed": bool(worst < 1e-10)}
