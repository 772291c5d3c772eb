"""Partially directed graphs, chain components, chordality and Markov equivalence.

Graphs are stored as one adjacency bitmask per vertex: bit ``v`` of
``rows[u]`` is set iff ``(u, v)`` is in the edge set.  ``u -> v`` is
``(u, v)`` without ``(v, u)``; ``u - v`` is both.  All algorithms work on
these masks, which keeps the inner loops of the sampler cheap.
"""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterable, Sequence

import numpy as np


class GraphError(ValueError):
    """Malformed graph or a graph violating a required invariant."""


class NotChordalError(GraphError):
    pass


class NoExtensionError(GraphError):
    """The PDAG admits no consistent extension."""


@lru_cache(maxsize=1 << 18)
def bits(mask: int) -> tuple[int, ...]:
    """Indices of the set bits of ``mask`` in increasing order."""
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return tuple(out)


def _cols(q: int, rows: Sequence[int]) -> list[int]:
    cols = [0] * q
    for u in range(q):
        bu = 1 << u
        for v in bits(rows[u]):
            cols[v] |= bu
    return cols


def _masks(q: int, rows: Sequence[int]):
    """(cols, und, pa, ch, adj) masks of a row representation."""
    cols = _cols(q, rows)
    und, pa, ch, adj = [], [], [], []
    for r, c in zip(rows, cols):
        und.append(r & c)
        pa.append(c & ~r)
        ch.append(r & ~c)
        adj.append(r | c)
    return tuple(cols), tuple(und), tuple(pa), tuple(ch), tuple(adj)


def to_mask(vertices: Iterable[int] | int) -> int:
    if isinstance(vertices, (int, np.integer)):
        return int(vertices)
    m = 0
    for v in vertices:
        m |= 1 << v
    return m


def _from_mask(mask: int) -> frozenset[int]:
    return frozenset(bits(mask))


@dataclass(frozen=True, eq=False)
class Pdag:
    """Partially directed graph on vertices ``0..q-1``."""

    q: int
    rows: tuple[int, ...]

    def __post_init__(self):
        if len(self.rows) != self.q:
            raise GraphError(f"expected {self.q} rows, got {len(self.rows)}")
        full = (1 << self.q) - 1
        for u, r in enumerate(self.rows):
            if r < 0 or r & ~full:
                raise GraphError(f"row {u} references a vertex outside 0..{self.q - 1}")
            if r >> u & 1:
                raise GraphError(f"self-loop at {u}")

    def __eq__(self, other):
        if not isinstance(other, Pdag):
            return NotImplemented
        return self.q == other.q and self.rows == other.rows

    def __hash__(self):
        return hash((self.q, self.rows))

    def __repr__(self):
        parts = [f"{u}-{v}" for u, v in self.undirected_edges()]
        parts += [f"{u}->{v}" for u, v in self.directed_edges()]
        return f"{type(self).__name__}(q={self.q}, [{', '.join(parts)}])"

    # constructors

    @classmethod
    def empty(cls, q: int) -> "Pdag":
        return cls(q, (0,) * q)

    @classmethod
    def from_edges(cls, q: int, directed=(), undirected=()) -> "Pdag":
        rows = [0] * q
        for u, v in directed:
            rows[u] |= 1 << v
        for u, v in undirected:
            rows[u] |= 1 << v
            rows[v] |= 1 << u
        return cls(q, tuple(rows))

    @classmethod
    def from_pairs(cls, q: int, pairs: Iterable[tuple[int, int]]) -> "Pdag":
        """Build from raw ordered pairs using the (u,v)/(v,u) convention."""
        return cls.from_edges(q, directed=pairs)

    @classmethod
    def from_matrix(cls, a) -> "Pdag":
        a = np.asarray(a)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise GraphError("adjacency matrix must be square")
        if not np.isin(a, (0, 1)).all():
            raise GraphError("adjacency entries must be 0 or 1")
        q = a.shape[0]
        rows = tuple(sum(1 << int(v) for v in np.flatnonzero(a[u])) for u in range(q))
        return cls(q, rows)

    # derived masks

    @cached_property
    def _m(self):
        return _masks(self.q, self.rows)

    @property
    def cols(self) -> tuple[int, ...]:
        return self._m[0]

    @property
    def und(self) -> tuple[int, ...]:
        return self._m[1]

    @property
    def pa(self) -> tuple[int, ...]:
        """Directed parents of each vertex."""
        return self._m[2]

    @property
    def ch(self) -> tuple[int, ...]:
        """Directed children of each vertex."""
        return self._m[3]

    @property
    def adj(self) -> tuple[int, ...]:
        return self._m[4]

    # views

    @property
    def edges(self) -> frozenset[tuple[int, int]]:
        return frozenset((u, v) for u, r in enumerate(self.rows) for v in bits(r))

    def directed_edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u in range(self.q) for v in bits(self.ch[u])]

    def undirected_edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u in range(self.q) for v in bits(self.und[u] >> (u + 1) << (u + 1))]

    def has_directed(self, u: int, v: int) -> bool:
        return bool(self.ch[u] >> v & 1)

    def has_undirected(self, u: int, v: int) -> bool:
        return bool(self.und[u] >> v & 1)

    def adjacent(self, u: int, v: int) -> bool:
        return bool(self.adj[u] >> v & 1)

    def n_skeleton_edges(self) -> int:
        return sum(a.bit_count() for a in self.adj) // 2

    def to_matrix(self) -> np.ndarray:
        a = np.zeros((self.q, self.q), dtype=np.int8)
        for u, v in self.edges:
            a[u, v] = 1
        return a

    def key(self) -> tuple[int, ...]:
        return self.rows

    def compact(self) -> str:
        """Short text form: hex row masks joined by dots."""
        return ".".join(format(r, "x") for r in self.rows)

    @classmethod
    def from_compact(cls, text: str) -> "Pdag":
        rows = tuple(int(t, 16) for t in text.split("."))
        return cls(len(rows), rows)


@dataclass(frozen=True, eq=False)
class Dag(Pdag):
    """Pdag with directed edges only and no directed cycle."""

    def __post_init__(self):
        super().__post_init__()
        if any(self.und):
            raise GraphError("a DAG cannot contain undirected edges")
        if topological_order(self) is None:
            raise GraphError("graph contains a directed cycle")


def topological_order(g: Pdag) -> list[int] | None:
    """Topological order of the directed part (lowest index first), or None on a cycle."""
    pa = list(g.pa)
    done = 0
    order = []
    remaining = (1 << g.q) - 1
    while remaining:
        for v in bits(remaining):
            if pa[v] & ~done == 0:
                break
        else:
            return None
        order.append(v)
        done |= 1 << v
        remaining &= ~(1 << v)
    return order


# ----------------------------------------------------------------------------
# chain components and chordality


def _components(und: Sequence[int], mask: int) -> list[int]:
    comps = []
    while mask:
        seed = mask & -mask
        comp = seed
        frontier = seed
        while frontier:
            nxt = 0
            for v in bits(frontier):
                nxt |= und[v]
            frontier = nxt & ~comp
            comp |= nxt
        comp &= mask
        comps.append(comp)
        mask &= ~comp
    return comps


def chain_components(g: Pdag) -> list[frozenset[int]]:
    """Connected components of the undirected part of ``g``."""
    return [_from_mask(c) for c in _components(g.und, (1 << g.q) - 1)]


def _mcs(mask: int, und: Sequence[int], start: int | None = None) -> list[int]:
    """Maximum cardinality search on the subgraph induced by ``mask``."""
    order = []
    numbered = 0
    remaining = mask
    while remaining:
        if start is not None and not order:
            best = start
        else:
            best, best_w = -1, -1
            for v in bits(remaining):
                w = (und[v] & numbered).bit_count()
                if w > best_w:
                    best, best_w = v, w
        order.append(best)
        numbered |= 1 << best
        remaining &= ~(1 << best)
    return order


def _is_clique(mask: int, und: Sequence[int]) -> bool:
    for w in bits(mask):
        if mask & ~(1 << w) & ~und[w]:
            return False
    return True


def _check_undirected(mask: int, g: Pdag) -> None:
    for v in bits(mask):
        if (g.pa[v] | g.ch[v]) & mask:
            raise GraphError(f"induced subgraph contains a directed edge at vertex {v}")


def _mcs_cliques(mask: int, und: Sequence[int], start: int | None = None) -> list[int] | None:
    """Maximal cliques in MCS order, or None when the subgraph is not chordal."""
    order = _mcs(mask, und, start)
    numbered = 0
    cands = []
    for v in order:
        earlier = und[v] & numbered
        if not _is_clique(earlier, und):
            return None
        cands.append(earlier | (1 << v))
        numbered |= 1 << v
    cliques = []
    for i, c in enumerate(cands):
        # v_i is not in any earlier candidate, so only later ones can contain c
        if not any(c & d == c for d in cands[i + 1:]):
            cliques.append(c)
    return cliques


def is_chordal(vertices, g: Pdag, start: int | None = None) -> tuple[bool, list[int]]:
    """Chordality of the undirected subgraph induced by ``vertices``.

    Returns ``(chordal, order)`` where ``order`` is the maximum cardinality
    search numbering (ties to the lowest index).  When chordal, the order is a
    perfect numbering of the subgraph.
    """
    mask = to_mask(vertices)
    _check_undirected(mask, g)
    order = _mcs(mask, g.und, start)
    numbered = 0
    for v in order:
        if not _is_clique(g.und[v] & numbered, g.und):
            return False, order
        numbered |= 1 << v
    return True, order


def _separators(cliques: Sequence[int]) -> list[int]:
    seps = []
    seen = 0
    for i, c in enumerate(cliques):
        if i:
            seps.append(c & seen)
        seen |= c
    return seps


def clique_separator_sequence(vertices, g: Pdag, start: int | None = None):
    """Perfect sequence of maximal cliques and the separators ``C_k & (C_1|...|C_{k-1})``."""
    mask = to_mask(vertices)
    _check_undirected(mask, g)
    cl = _mcs_cliques(mask, g.und, start)
    if cl is None:
        raise NotChordalError(f"subgraph on {sorted(bits(mask))} is not chordal")
    return [_from_mask(c) for c in cl], [_from_mask(s) for s in _separators(cl)]


def skeleton_and_vstructures(g: Pdag):
    """Skeleton as pairs ``(u, v)`` with ``u < v`` and v-structures ``(u, z, v)`` with ``u < v``."""
    skel = frozenset((u, v) for u in range(g.q) for v in bits(g.adj[u]) if u < v)
    vs = set()
    for z in range(g.q):
        pz = g.pa[z]
        for u in bits(pz):
            for v in bits(pz >> (u + 1) << (u + 1)):
                if not g.adj[u] >> v & 1:
                    vs.add((u, z, v))
    return skel, frozenset(vs)


# ----------------------------------------------------------------------------
# consistent extension and CPDAG conversion


def _extend_rows(q: int, rows: Sequence[int], und, ch, adj) -> tuple[int, ...] | None:
    """Dor-Tarsi sink elimination on raw masks; lowest admissible vertex first."""
    out = list(rows)
    remaining = (1 << q) - 1
    while remaining:
        for x in bits(remaining):
            if ch[x] & remaining:
                continue
            nbrs = und[x] & remaining
            ax = adj[x] & remaining
            for y in bits(nbrs):
                if ax & ~(1 << y) & ~adj[y]:
                    break
            else:
                break
        else:
            return None
        out[x] &= ~nbrs
        remaining &= ~(1 << x)
    return tuple(out)


def consistent_extension(g: Pdag) -> Dag:
    """A DAG with the skeleton, directed edges and v-structures of ``g``."""
    rows = _extend_rows(g.q, g.rows, g.und, g.ch, g.adj)
    if rows is None:
        raise NoExtensionError("no consistent extension exists")
    return Dag(g.q, rows)


def _cpdag_rows(q: int, parents: Sequence[int]) -> tuple[int, ...]:
    """Essential graph of the DAG given by its parent masks.

    v-structures are oriented first, then Meek's rules 1-3 are applied until
    nothing changes.
    """
    adj = [0] * q
    for v in range(q):
        adj[v] |= parents[v]
        for u in bits(parents[v]):
            adj[u] |= 1 << v
    pa = [0] * q
    und = list(adj)
    for z in range(q):
        pz = parents[z]
        for u in bits(pz):
            if pz & ~(1 << u) & ~adj[u]:
                und[u] &= ~(1 << z)
                und[z] &= ~(1 << u)
                pa[z] |= 1 << u
    if not any(pa):
        return tuple(und)

    changed = True
    while changed:
        changed = False
        for a in range(q):
            ua = und[a]
            if not ua:
                continue
            pa_a = pa[a]
            for c in bits(ua):
                bc = 1 << c
                pc = pa[c]
                # rule 1: b -> a - c with b, c non-adjacent
                # rule 2: a -> b -> c with a - c
                # rule 3: a - b -> c, a - d -> c, b and d non-adjacent
                hit = pa_a & ~adj[c] & ~bc
                if not hit:
                    for b in bits(pc):
                        if adj[a] >> b & 1 and not und[a] >> b & 1 and pa[b] >> a & 1:
                            hit = 1
                            break
                if not hit:
                    cand = und[a] & pc
                    for b in bits(cand):
                        if cand & ~(1 << b) & ~adj[b]:
                            hit = 1
                            break
                if hit:
                    und[a] &= ~bc
                    und[c] &= ~(1 << a)
                    pa[c] |= 1 << a
                    changed = True
    ch = [0] * q
    for v in range(q):
        for u in bits(pa[v]):
            ch[u] |= 1 << v
    return tuple(ch[v] | und[v] for v in range(q))


_ESSENTIAL_CACHE: dict[tuple[int, ...], bool] = {}
_CACHE_LOCK = threading.Lock()


_CEILING = int(os.environ.get("EGLEARN_CACHE_SIZE", "1000000"))


def cache_ceiling() -> int:
    """Entry limit for verdict caches, from ``EGLEARN_CACHE_SIZE``."""
    return _CEILING


def _essential_rows(q: int, rows: tuple[int, ...]) -> bool:
    _, und, pa, ch, adj = _masks(q, rows)
    # every undirected edge joins vertices with equal parent sets
    for v in range(q):
        for w in bits(und[v]):
            if pa[v] != pa[w]:
                return False
    for comp in _components(und, (1 << q) - 1):
        if comp & (comp - 1) and _mcs_cliques(comp, und) is None:
            return False
    ext = _extend_rows(q, rows, und, ch, adj)
    if ext is None:
        return False
    return _cpdag_rows(q, _cols(q, ext)) == rows


def essential_rows(q: int, rows: tuple[int, ...]) -> bool:
    """Cached essentiality verdict for a raw row representation."""
    hit = _ESSENTIAL_CACHE.get(rows)
    if hit is not None:
        return hit
    verdict = _essential_rows(q, rows)
    with _CACHE_LOCK:
        if len(_ESSENTIAL_CACHE) >= _CEILING:
            _ESSENTIAL_CACHE.clear()
        _ESSENTIAL_CACHE[rows] = verdict
    return verdict


def is_essential(g: Pdag) -> bool:
    """Whether ``g`` is the essential graph of some Markov equivalence class.

    Decided by the round trip: ``g`` must equal the CPDAG of its consistent
    extension.  Cheap necessary conditions (equal parents along undirected
    edges, chordal chain components) are checked first.
    """
    return essential_rows(g.q, g.rows)


def essential_violation(g: Pdag) -> str | None:
    """Name of the first essential-graph property ``g`` fails, or None."""
    q, rows = g.q, g.rows
    _, und, pa, ch, adj = _masks(q, rows)
    if topological_order(g) is None:
        return "directed part is cyclic"
    for v in range(q):
        for w in bits(und[v]):
            if pa[v] != pa[w]:
                return f"undirected edge {min(v, w)}-{max(v, w)} joins vertices with different parents"
    for comp in _components(und, (1 << q) - 1):
        if comp & (comp - 1) and _mcs_cliques(comp, und) is None:
            return f"chain component {list(bits(comp))} is not chordal"
    ext = _extend_rows(q, rows, und, ch, adj)
    if ext is None:
        return "no consistent extension"
    if _cpdag_rows(q, _cols(q, ext)) != rows:
        return "some edge is not strongly protected (graph differs from the CPDAG of its extension)"
    return None


# ----------------------------------------------------------------------------
# essential graphs


@dataclass(frozen=True)
class Component:
    vertices: frozenset[int]
    parents: frozenset[int]
    cliques: tuple[frozenset[int], ...]
    separators: tuple[frozenset[int], ...]


@dataclass(frozen=True)
class ChainDecomposition:
    components: tuple[Component, ...]


def decompose(g: Pdag, start: dict[int, int] | None = None) -> ChainDecomposition:
    """Chain components with their parents and perfect clique/separator sequences.

    ``start`` optionally maps a component's lowest vertex to the vertex where
    maximum cardinality search begins.
    """
    comps = []
    for comp in _components(g.und, (1 << g.q) - 1):
        low = (comp & -comp).bit_length() - 1
        s = None if start is None else start.get(low)
        cl = _mcs_cliques(comp, g.und, s)
        if cl is None:
            raise NotChordalError(f"chain component {sorted(bits(comp))} is not chordal")
        par = 0
        for v in bits(comp):
            par |= g.pa[v]
        comps.append(Component(
            _from_mask(comp),
            _from_mask(par),
            tuple(_from_mask(c) for c in cl),
            tuple(_from_mask(s) for s in _separators(cl)),
        ))
    return ChainDecomposition(tuple(comps))


@dataclass(frozen=True, eq=False)
class EssentialGraph:
    """An essential graph together with its chain-component decomposition."""

    graph: Pdag
    decomposition: ChainDecomposition = field(repr=False)

    def __eq__(self, other):
        if isinstance(other, EssentialGraph):
            return self.graph == other.graph
        if isinstance(other, Pdag):
            return self.graph == other
        return NotImplemented

    def __hash__(self):
        return hash(self.graph)

    @property
    def q(self) -> int:
        return self.graph.q

    @property
    def rows(self) -> tuple[int, ...]:
        return self.graph.rows

    @classmethod
    def from_pdag(cls, g: Pdag, check: bool = True) -> "EssentialGraph":
        if isinstance(g, EssentialGraph):
            return g
        if check and not is_essential(g):
            raise GraphError(f"{g!r} is not an essential graph")
        return cls(Pdag(g.q, g.rows), decompose(g))

    @classmethod
    def empty(cls, q: int) -> "EssentialGraph":
        return cls.from_pdag(Pdag.empty(q), check=False)


def dag_to_cpdag(d: Pdag) -> EssentialGraph:
    """Essential graph (CPDAG) of the Markov equivalence class of ``d``."""
    if any(d.und) or topological_order(d) is None:
        raise GraphError("dag_to_cpdag expects a DAG")
    g = Pdag(d.q, _cpdag_rows(d.q, d.pa))
    try:
        dec = decompose(g)
    except NotChordalError as exc:  # pragma: no cover - defect signal
        raise AssertionError(f"CPDAG conversion produced a non-chordal component: {exc}")
    if any(g.pa[v] != g.pa[w] for v in range(g.q) for w in bits(g.und[v])):
        raise AssertionError("CPDAG conversion produced an invalid chain graph")  # pragma: no cover
    return EssentialGraph(g, dec)


# ----------------------------------------------------------------------------
# adjacency text format


def format_adjacency(g: Pdag | EssentialGraph) -> str:
    g = g.graph if isinstance(g, EssentialGraph) else g
    a = g.to_matrix()
    return "".join(",".join(str(int(x)) for x in row) + "\n" for row in a)


def parse_adjacency(text: str) -> Pdag:
    rows = [ln.strip() for ln in text.splitlines() if ln.strip()]
    try:
        mat = [[int(x) for x in ln.split(",")] for ln in rows]
    except ValueError as exc:
        raise GraphError(f"bad adjacency entry: {exc}") from None
    if any(len(r) != len(mat) for r in mat):
        raise GraphError("adjacency matrix must be square")
    if not mat:
        raise GraphError("empty adjacency matrix")
    a = np.array(mat)
    if np.any(np.diag(a)):
        raise GraphError("adjacency matrix has a nonzero diagonal")
    return Pdag.from_matrix(a)


def read_adjacency(path) -> Pdag:
    with open(path) as fh:
        return parse_adjacency(fh.read())


def write_adjacency(path, g) -> None:
    with open(path, "w") as fh:
        fh.write(format_adjacency(g))
