"""Closed-form log marginal likelihood of essential graphs.

Each chain component contributes, for every observed parent configuration,
a ratio of Dirichlet-multinomial marginals over its cliques and separators.
Everything is evaluated with ``gammaln``; terms with no observations vanish
exactly and are never formed.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .contingency import CategoricalTable, conditional_counts
from .graph import (
    ChainDecomposition,
    EssentialGraph,
    GraphError,
    Pdag,
    _components,
    _mcs_cliques,
    _separators,
    bits,
    to_mask,
)


@dataclass(frozen=True)
class Hyperparameters:
    """Dirichlet hyperparameter rule for chain-component priors.

    ``rule="default"`` sets a(y_tau | r) = 1 / l_tau, which aggregates to
    a(s | r) = 1 / l_S on any subset S of tau.  ``rule="constant"`` sets
    a(y_tau | r) = a for every cell.
    """

    rule: str = "default"
    a: float | None = None

    def __post_init__(self):
        if self.rule not in ("default", "constant"):
            raise ValueError(f"unknown hyperparameter rule {self.rule!r}")
        if self.rule == "constant" and (self.a is None or not self.a > 0):
            raise ValueError("constant rule needs a positive a")

    @classmethod
    def constant(cls, a: float) -> "Hyperparameters":
        return cls("constant", float(a))

    def cell_prior(self, l_subset: int, l_component: int) -> float:
        """a(s | r) for a subset with l_subset cells inside a component with l_component cells."""
        if self.rule == "default":
            return 1.0 / l_subset
        return self.a * (l_component // l_subset)


DEFAULT_HP = Hyperparameters()


def _dirichlet_multinomial(cells: np.ndarray, totals: np.ndarray, a: float, n_cells: int) -> float:
    """Sum over parent configurations of log Dirichlet-multinomial marginals.

    ``cells`` are nonzero n(s|r) pooled over r, ``totals`` the nonzero n(r).
    """
    big_a = a * n_cells
    return float(
        np.sum(gammaln(cells + a)) - cells.size * math.lgamma(a)
        - np.sum(gammaln(totals + big_a)) + totals.size * math.lgamma(big_a)
    )


def local_set_loglik(t: CategoricalTable, subset, parents=(), config=None,
                     hp: Hyperparameters = DEFAULT_HP, component=None) -> float:
    """log m(N_S | N_pa, r) for a single parent configuration ``r``.

    ``component`` is the chain component holding ``subset`` (defaults to the
    subset itself); it matters only under the constant rule.
    """
    S = tuple(sorted(subset))
    if not S:
        raise ValueError("empty subset")
    comp = S if component is None else tuple(sorted(component))
    if not set(S) <= set(comp):
        raise ValueError("subset must lie inside its component")
    l_s = t.n_configs(S)
    a = hp.cell_prior(l_s, t.n_configs(comp))
    if not a > 0:
        raise ValueError("nonpositive hyperparameter")
    cv = conditional_counts(t, S, parents, config)
    counts = np.array([c for c in cv.counts.values() if c > 0], dtype=np.float64)
    if counts.size == 0:
        return 0.0
    return _dirichlet_multinomial(counts, np.array([counts.sum()]), a, l_s)


def _set_term(t: CategoricalTable, subset: int, parents: int, l_comp: int, hp: Hyperparameters) -> float:
    if not subset:
        return 0.0
    S = tuple(bits(subset))
    P = tuple(bits(parents))
    l_s = t.n_configs(S)
    cells, totals = t.family(S, P)
    return _dirichlet_multinomial(cells, totals, hp.cell_prior(l_s, l_comp), l_s)


def component_loglik(t: CategoricalTable, component, parents, cliques, separators,
                     hp: Hyperparameters = DEFAULT_HP) -> float:
    """log m_tau(N_tau | N_pa(tau)), summed over all observed parent configurations."""
    comp = to_mask(component)
    par = to_mask(parents)
    if comp & par:
        raise ValueError("component and parent set overlap")
    l_comp = t.n_configs(bits(comp))
    total = 0.0
    for c in cliques:
        total += _set_term(t, to_mask(c), par, l_comp, hp)
    for s in separators:
        total -= _set_term(t, to_mask(s), par, l_comp, hp)
    return total


def eg_log_marginal(t: CategoricalTable, g, hp: Hyperparameters = DEFAULT_HP,
                    decomposition: ChainDecomposition | None = None) -> float:
    """log m_G(N): sum of component terms over the chain components of ``g``."""
    if decomposition is None:
        if isinstance(g, EssentialGraph):
            decomposition = g.decomposition
        else:
            decomposition = EssentialGraph.from_pdag(g).decomposition
    q = g.q
    if q != t.q:
        raise GraphError(f"graph has {q} vertices but the table has {t.q} variables")
    return sum(
        component_loglik(t, c.vertices, c.parents, c.cliques, c.separators, hp)
        for c in decomposition.components
    )


class Scorer:
    """Memoized EG scoring for one table and one hyperparameter rule.

    Component scores are cached by (vertex set, parent set, internal
    undirected structure), so graphs sharing a component reuse its value and
    a move only pays for the components it changes.
    """

    def __init__(self, table: CategoricalTable, hp: Hyperparameters = DEFAULT_HP):
        self.table = table
        self.hp = hp
        self._components: dict = {}
        self._sets: dict = {}
        self._lock = threading.Lock()

    def _set(self, subset: int, parents: int, l_comp: int) -> float:
        key = (subset, parents, l_comp if self.hp.rule == "constant" else 0)
        v = self._sets.get(key)
        if v is None:
            v = _set_term(self.table, subset, parents, l_comp, self.hp)
            with self._lock:
                self._sets[key] = v
        return v

    def component_keys(self, g: Pdag) -> list[tuple]:
        keys = []
        und, pa = g.und, g.pa
        for comp in _components(und, (1 << g.q) - 1):
            par = 0
            for v in bits(comp):
                par |= pa[v]
            keys.append((comp, par, tuple(und[v] for v in bits(comp))))
        return keys

    def component_score(self, key: tuple, und) -> float:
        v = self._components.get(key)
        if v is not None:
            return v
        comp, par, _ = key
        cliques = _mcs_cliques(comp, und)
        if cliques is None:
            raise GraphError(f"chain component {sorted(bits(comp))} is not chordal")
        l_comp = self.table.n_configs(bits(comp))
        v = sum(self._set(c, par, l_comp) for c in cliques)
        v -= sum(self._set(s, par, l_comp) for s in _separators(cliques))
        with self._lock:
            self._components[key] = v
        return v

    def score(self, g) -> float:
        g = g.graph if isinstance(g, EssentialGraph) else g
        if g.q != self.table.q:
            raise GraphError(f"graph has {g.q} vertices but the table has {self.table.q} variables")
        return sum(self.component_score(k, g.und) for k in self.component_keys(g))

    def delta(self, old: Pdag, new: Pdag) -> float:
        """log m(new) - log m(old), touching only components that differ."""
        old_keys = set(self.component_keys(old))
        new_keys = set(self.component_keys(new))
        gained = sorted(new_keys - old_keys)
        lost = sorted(old_keys - new_keys)
        return (sum(self.component_score(k, new.und) for k in gained)
                - sum(self.component_score(k, old.und) for k in lost))


# ----------------------------------------------------------------------------
# asymptotic diagnostic


@dataclass(frozen=True)
class AsymptoticDiagnostic:
    statistic: float | None
    estimated_sd: float
    n_r: int
    value: float


def _g(freqs: np.ndarray, scale: float, denom: float) -> float:
    """Data-dependent part of the log marginal divided by ``denom``."""
    return float((np.sum(gammaln(scale * freqs)) - math.lgamma(scale * freqs.sum())) / denom)


def asym_diagnostic(t: CategoricalTable, subset, parents=(), config=None,
                    hp: Hyperparameters = DEFAULT_HP, theta0: Sequence[float] | None = None,
                    component=None, scale: str = "n_r") -> AsymptoticDiagnostic:
    """Standardized log marginal of one clique or separator given one parent configuration.

    Posterior-mean frequencies nbar(s|r) = (n(s|r) + a(s|r)) / n(r) enter the
    scaled log marginal g and its delta-method standard deviation.  When the
    true cell probabilities ``theta0`` (flattened over the configurations of
    the sorted subset, last variable fastest) are supplied, the statistic
    sqrt(n(r)) * (g(nbar) - g(theta0)) / sd is returned as well.

    ``scale="n"`` divides by the total sample size instead of n(r) and uses
    n(r)/n as the parent-configuration probability.
    """
    if scale not in ("n_r", "n"):
        raise ValueError("scale must be 'n_r' or 'n'")
    S = tuple(sorted(subset))
    comp = S if component is None else tuple(sorted(component))
    cv = conditional_counts(t, S, parents, config)
    n_r = cv.total
    if n_r == 0:
        raise ValueError("parent configuration is unobserved")
    l_s = t.n_configs(S)
    a = hp.cell_prior(l_s, t.n_configs(comp))
    counts = cv.to_array().reshape(-1).astype(np.float64)
    nbar = (counts + a) / n_r
    if np.any(nbar <= 0) or np.any(nbar >= 1):
        raise ValueError("frequencies on the boundary; variance estimate degenerates")
    logs = np.log(nbar)
    cov = np.diag(nbar) - np.outer(nbar, nbar)
    quad = float(logs @ cov @ logs)
    sd = math.sqrt(max(quad, 0.0))
    if scale == "n_r":
        denom, root, sd_scaled = n_r, math.sqrt(n_r), sd
    else:
        n = t.n
        denom, root, sd_scaled = n, math.sqrt(n), math.sqrt(n_r / n) * sd
    value = _g(nbar, n_r, denom)
    stat = None
    if theta0 is not None:
        th = np.asarray(theta0, dtype=np.float64).reshape(-1)
        if th.shape != nbar.shape:
            raise ValueError(f"theta0 must have {nbar.size} entries")
        diff = root * (value - _g(th, n_r, denom))
        stat = diff / sd_scaled if sd_scaled > 0 else (0.0 if diff == 0 else math.copysign(math.inf, diff))
    return AsymptoticDiagnostic(stat, sd_scaled, n_r, value)
