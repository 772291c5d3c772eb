"""Moves between essential graphs and the perfect operator set at a graph."""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import NamedTuple

from .graph import EssentialGraph, GraphError, Pdag, bits, cache_ceiling, essential_rows

KINDS = ("InsertU", "DeleteU", "InsertD", "DeleteD", "MakeV", "RemoveV", "ReverseD")
_ARITY = {"MakeV": 3, "RemoveV": 3}
_RANK = {k: i for i, k in enumerate(KINDS)}


class Operator(NamedTuple):
    kind: str
    vertices: tuple[int, ...]

    def check(self) -> "Operator":
        if self.kind not in _RANK:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if len(self.vertices) != _ARITY.get(self.kind, 2):
            raise ValueError(f"{self.kind} takes {_ARITY.get(self.kind, 2)} vertices")
        if len(set(self.vertices)) != len(self.vertices):
            raise ValueError("operator vertices must be distinct")
        return self

    def sort_key(self):
        return _RANK[self.kind], self.vertices

    def __str__(self):
        return f"{self.kind}{self.vertices}"


class InapplicableOperator(GraphError):
    pass


@dataclass(frozen=True)
class OperatorSet:
    source: tuple[int, ...]
    members: tuple[Operator, ...]

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __getitem__(self, i):
        return self.members[i]

    @property
    def size(self) -> int:
        return len(self.members)


def _edit(rows: tuple[int, ...], op: Operator) -> tuple[int, ...] | None:
    """Rows after applying ``op``, or None when it is structurally inapplicable."""
    kind, vs = op
    r = list(rows)

    def has(u, v):
        return rows[u] >> v & 1

    if kind in ("InsertU", "InsertD"):
        u, v = vs
        if has(u, v) or has(v, u):
            return None
        r[u] |= 1 << v
        if kind == "InsertU":
            r[v] |= 1 << u
    elif kind == "DeleteU":
        u, v = vs
        if not (has(u, v) and has(v, u)):
            return None
        r[u] &= ~(1 << v)
        r[v] &= ~(1 << u)
    elif kind in ("DeleteD", "ReverseD"):
        u, v = vs
        if not has(u, v) or has(v, u):
            return None
        r[u] &= ~(1 << v)
        if kind == "ReverseD":
            r[v] |= 1 << u
    elif kind == "MakeV":
        u, z, v = vs
        if not (has(u, z) and has(z, u) and has(v, z) and has(z, v)) or has(u, v) or has(v, u):
            return None
        r[z] &= ~((1 << u) | (1 << v))
    elif kind == "RemoveV":
        u, z, v = vs
        if not (has(u, z) and not has(z, u) and has(v, z) and not has(z, v)) or has(u, v) or has(v, u):
            return None
        r[z] |= (1 << u) | (1 << v)
    else:
        raise ValueError(f"unknown operator kind {kind!r}")
    return tuple(r)


def apply_operator(g, op: Operator) -> Pdag:
    """Mechanically apply ``op`` to ``g``; the result need not be essential."""
    g = g.graph if isinstance(g, EssentialGraph) else g
    op = Operator(op[0], tuple(op[1])).check()
    if max(op.vertices) >= g.q or min(op.vertices) < 0:
        raise InapplicableOperator(f"{op} references a vertex outside the graph")
    rows = _edit(g.rows, op)
    if rows is None:
        raise InapplicableOperator(f"{op} is not applicable to {g!r}")
    return Pdag(g.q, rows)


def candidate_operators(g: Pdag, reverse_d: bool = True) -> list[Operator]:
    """Structurally applicable operators in canonical order."""
    q = g.q
    und, ch, pa, adj = g.und, g.ch, g.pa, g.adj
    ops = []
    non_adj = [(u, v) for u in range(q) for v in range(u + 1, q) if not adj[u] >> v & 1]
    ops += [Operator("InsertU", (u, v)) for u, v in non_adj]
    ops += [Operator("DeleteU", (u, v)) for u in range(q) for v in bits(und[u]) if u < v]
    ins_d = [(u, v) for u, v in non_adj] + [(v, u) for u, v in non_adj]
    ops += [Operator("InsertD", e) for e in sorted(ins_d)]
    directed = [(u, v) for u in range(q) for v in bits(ch[u])]
    ops += [Operator("DeleteD", e) for e in directed]
    make_v = []
    remove_v = []
    for z in range(q):
        for u in bits(und[z]):
            for v in bits(und[z] >> (u + 1) << (u + 1)):
                if not adj[u] >> v & 1:
                    make_v.append((u, z, v))
        for u in bits(pa[z]):
            for v in bits(pa[z] >> (u + 1) << (u + 1)):
                if not adj[u] >> v & 1:
                    remove_v.append((u, z, v))
    ops += [Operator("MakeV", t) for t in sorted(make_v)]
    ops += [Operator("RemoveV", t) for t in sorted(remove_v)]
    if reverse_d:
        ops += [Operator("ReverseD", e) for e in directed]
    return ops


_SET_CACHE: dict = {}
_SET_LOCK = threading.Lock()


def enumerate_operators(g, reverse_d: bool = True) -> OperatorSet:
    """Operators whose result is again an essential graph."""
    g = g.graph if isinstance(g, EssentialGraph) else g
    key = (g.rows, reverse_d)
    hit = _SET_CACHE.get(key)
    if hit is not None:
        return hit
    q, rows = g.q, g.rows
    members = tuple(op for op in candidate_operators(g, reverse_d) if essential_rows(q, _edit(rows, op)))
    res = OperatorSet(rows, members)
    with _SET_LOCK:
        if len(_SET_CACHE) >= cache_ceiling() // 10:
            _SET_CACHE.clear()
        _SET_CACHE[key] = res
    return res
