"""Point estimates and edge probabilities from sampled essential graphs."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .graph import (
    EssentialGraph,
    NoExtensionError,
    Pdag,
    consistent_extension,
    dag_to_cpdag,
)
from .mcmc import ChainTrace, TraceEntry


def _entries(trace) -> list[TraceEntry]:
    if isinstance(trace, ChainTrace):
        return trace.retained()
    return list(trace)


def edge_inclusion(trace) -> np.ndarray:
    """Fraction of retained samples containing each ordered pair (u, v).

    An undirected edge counts towards both (u, v) and (v, u).
    """
    entries = _entries(trace)
    if not entries:
        raise ValueError("no retained samples")
    q = entries[0].graph.q
    freq = Counter(e.graph.rows for e in entries)
    m = np.zeros((q, q))
    for rows, c in freq.items():
        m += c * Pdag(q, rows).to_matrix().astype(float)
    return m / len(entries)


def visit_frequencies(trace) -> dict[Pdag, float]:
    entries = _entries(trace)
    if not entries:
        raise ValueError("no retained samples")
    q = entries[0].graph.q
    freq = Counter(e.graph.rows for e in entries)
    return {Pdag(q, r): c / len(entries) for r, c in freq.items()}


def map_estimate(trace) -> EssentialGraph:
    """Most visited graph; ties go to the higher stored log score, then the smaller adjacency matrix."""
    entries = _entries(trace)
    if not entries:
        raise ValueError("empty trace")
    freq = Counter(e.graph.rows for e in entries)
    score = {}
    for e in entries:
        score.setdefault(e.graph.rows, e.log_marginal + e.log_prior)
    q = entries[0].graph.q

    def rank(rows):
        flat = tuple(Pdag(q, rows).to_matrix().ravel())
        return (-freq[rows], -score[rows], flat)

    best = min(freq, key=rank)
    return EssentialGraph.from_pdag(Pdag(q, best), check=False)


def median_probability_graph(m) -> Pdag:
    """All ordered pairs with inclusion probability strictly above one half."""
    m = np.asarray(m, dtype=float)
    a = (m > 0.5).astype(np.int8)
    np.fill_diagonal(a, 0)
    return Pdag.from_matrix(a)


@dataclass(frozen=True)
class Projection:
    graph: EssentialGraph
    dropped: tuple[tuple[int, int], ...] = field(default=())

    @property
    def repaired(self) -> bool:
        return bool(self.dropped)


def _edge_units(g: Pdag, probs: np.ndarray | None):
    """Edges of ``g`` as (probability, (u, v)); undirected edges listed once with u < v."""
    units = []
    for u, v in g.undirected_edges():
        p = 0.5 * (probs[u, v] + probs[v, u]) if probs is not None else 0.0
        units.append((float(p), (u, v)))
    for u, v in g.directed_edges():
        p = probs[u, v] if probs is not None else 0.0
        units.append((float(p), (u, v)))
    units.sort()
    return units


def _drop(g: Pdag, e: tuple[int, int]) -> Pdag:
    u, v = e
    rows = list(g.rows)
    rows[u] &= ~(1 << v)
    rows[v] &= ~(1 << u)
    return Pdag(g.q, tuple(rows))


def _extends(g: Pdag) -> bool:
    try:
        consistent_extension(g)
    except NoExtensionError:
        return False
    return True


def project_to_eg(g: Pdag, probs=None) -> Projection:
    """Essential graph of a consistent extension of ``g``.

    When ``g`` has no consistent extension, edges are dropped until one
    exists: each round removes the least probable edge whose removal alone
    suffices, or, failing that, the least probable edge overall.
    """
    g = g.graph if isinstance(g, EssentialGraph) else g
    probs = None if probs is None else np.asarray(probs, dtype=float)
    dropped = []
    while not _extends(g):
        units = _edge_units(g, probs)
        for _, e in units:
            if _extends(_drop(g, e)):
                chosen = e
                break
        else:
            chosen = units[0][1]
        dropped.append(chosen)
        g = _drop(g, chosen)
    return Projection(dag_to_cpdag(consistent_extension(g)), tuple(dropped))


def projected_median_graph(trace) -> Projection:
    m = edge_inclusion(trace)
    return project_to_eg(median_probability_graph(m), m)


def write_matrix_csv(path, m: np.ndarray) -> None:
    with open(path, "w") as fh:
        for row in np.asarray(m):
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)
