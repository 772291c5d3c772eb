"""Categorical records and the count queries served from them."""

from __future__ import annotations

import csv
import math
import threading
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

DENSE_LIMIT = 1 << 20
_RADIX_LIMIT = 1 << 62


class DataError(ValueError):
    """Malformed or unusable input records."""


@dataclass(frozen=True)
class Schema:
    names: tuple[str, ...]
    levels: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if len(self.names) != len(self.levels):
            raise DataError("one level list per variable is required")
        for name, lv in zip(self.names, self.levels):
            if len(set(lv)) != len(lv):
                raise DataError(f"duplicate level labels for {name!r}")
            if len(lv) < 2:
                raise DataError(f"variable {name!r} has fewer than two levels")

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(len(lv) for lv in self.levels)

    @classmethod
    def binary(cls, q: int) -> "Schema":
        return cls(tuple(f"Y{j + 1}" for j in range(q)), (("0", "1"),) * q)


@dataclass(frozen=True)
class CountVector:
    """Counts n(s | r) over configurations ``s`` of ``subset``.

    ``counts`` holds the nonzero cells only; missing configurations count 0.
    ``parent_config`` is None for an unconditional (marginal) query.
    """

    subset: tuple[int, ...]
    parents: tuple[int, ...]
    parent_config: tuple[int, ...] | None
    counts: dict[tuple[int, ...], int]
    shape: tuple[int, ...]

    def __getitem__(self, config) -> int:
        if not isinstance(config, tuple):
            config = (config,)
        return self.counts.get(config, 0)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def to_array(self) -> np.ndarray:
        a = np.zeros(self.shape, dtype=np.int64)
        for cfg, c in self.counts.items():
            a[cfg] = c
        return a


def _as_tuple(vs) -> tuple[int, ...]:
    return tuple(sorted(int(v) for v in vs))


class CategoricalTable:
    """n integer-coded observations over q categorical variables.

    Count queries are computed on demand and memoized per variable set.
    """

    def __init__(self, data, schema: Schema):
        data = np.ascontiguousarray(data, dtype=np.int64)
        if data.ndim != 2 or data.shape[1] != len(schema.names):
            raise DataError("data must be an n x q array matching the schema")
        card = np.array(schema.cardinalities, dtype=np.int64)
        if data.size and ((data < 0).any() or (data >= card).any()):
            raise DataError("level code out of range")
        data.setflags(write=False)
        self.data = data
        self.schema = schema
        self.card = tuple(int(c) for c in card)
        self._memo: dict = {}
        self._lock = threading.Lock()

    @classmethod
    def from_codes(cls, data, cardinalities: Sequence[int] | None = None, names=None):
        data = np.asarray(data, dtype=np.int64)
        q = data.shape[1]
        if cardinalities is None:
            cardinalities = [max(2, int(data[:, j].max()) + 1) if len(data) else 2 for j in range(q)]
        names = tuple(names) if names is not None else tuple(f"Y{j + 1}" for j in range(q))
        levels = tuple(tuple(str(k) for k in range(c)) for c in cardinalities)
        return cls(data, Schema(names, levels))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def q(self) -> int:
        return self.data.shape[1]

    def n_configs(self, vs: Iterable[int]) -> int:
        return math.prod(self.card[v] for v in vs)

    def _codes(self, cols: tuple[int, ...]) -> tuple[np.ndarray, int]:
        """Integer code per row for the joint configuration of ``cols``."""
        if not cols:
            return np.zeros(self.n, dtype=np.int64), 1
        size = self.n_configs(cols)
        if size < _RADIX_LIMIT:
            codes = np.zeros(self.n, dtype=np.int64)
            for c in cols:
                codes *= self.card[c]
                codes += self.data[:, c]
            return codes, size
        _, inv = np.unique(self.data[:, cols], axis=0, return_inverse=True)
        return inv.reshape(-1).astype(np.int64), -1

    def joint(self, cols: Iterable[int]) -> tuple[np.ndarray, np.ndarray]:
        """Observed configurations of ``cols`` (rows, in sorted column order) and their counts."""
        cols = _as_tuple(cols)
        key = ("joint", cols)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        if not cols:
            res = (np.zeros((1 if self.n else 0, 0), dtype=np.int64),
                   np.array([self.n] if self.n else [], dtype=np.int64))
        else:
            codes, size = self._codes(cols)
            if 0 < size <= DENSE_LIMIT:
                dense = np.bincount(codes, minlength=size)
                idx = np.flatnonzero(dense)
                counts = dense[idx]
            else:
                idx, first, counts = np.unique(codes, return_index=True, return_counts=True)
                if size < 0:
                    configs = self.data[first][:, cols]
                    res = (configs, counts.astype(np.int64))
                    self._store(key, res)
                    return res
            shape = tuple(self.card[c] for c in cols)
            configs = np.stack(np.unravel_index(idx, shape), axis=1) if size > 0 else None
            res = (configs.astype(np.int64), counts.astype(np.int64))
        self._store(key, res)
        return res

    def family(self, subset: Iterable[int], parents: Iterable[int]) -> tuple[np.ndarray, np.ndarray]:
        """Nonzero n(s | r) over all (s, r) and nonzero n(r) over all r, as flat arrays."""
        S, P = _as_tuple(subset), _as_tuple(parents)
        key = ("family", S, P)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        res = (self._nonzero_counts(S + P), self._nonzero_counts(P))
        self._store(key, res)
        return res

    def _nonzero_counts(self, cols: tuple[int, ...]) -> np.ndarray:
        cols = tuple(sorted(cols))
        key = ("nz", cols)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        codes, size = self._codes(cols)
        if 0 < size <= DENSE_LIMIT:
            dense = np.bincount(codes, minlength=size)
            res = dense[dense > 0]
        else:
            res = np.unique(codes, return_counts=True)[1]
        res = res.astype(np.int64)
        self._store(key, res)
        return res

    def _store(self, key, value) -> None:
        with self._lock:
            self._memo[key] = value

    def clear_cache(self) -> None:
        with self._lock:
            self._memo.clear()


def marginal_counts(t: CategoricalTable, subset: Iterable[int]) -> CountVector:
    """Marginal table n(y_S)."""
    S = _as_tuple(subset)
    if not S:
        raise DataError("marginal over an empty variable set")
    configs, counts = t.joint(S)
    cells = {tuple(int(x) for x in cfg): int(c) for cfg, c in zip(configs, counts)}
    return CountVector(S, (), None, cells, tuple(t.card[v] for v in S))


def conditional_counts(t: CategoricalTable, subset: Iterable[int], parents: Iterable[int] = (),
                       config: Sequence[int] | None = None) -> CountVector:
    """Counts n(s | r) of ``subset`` among rows whose ``parents`` equal ``config``.

    ``config`` lists parent levels in increasing parent-index order.
    """
    S, P = _as_tuple(subset), _as_tuple(parents)
    if not S:
        raise DataError("conditional counts over an empty variable set")
    if set(S) & set(P):
        raise DataError("subset and parent set overlap")
    if not P:
        return marginal_counts(t, S)
    config = tuple(int(x) for x in config) if config is not None else None
    if config is None or len(config) != len(P):
        raise DataError("a parent configuration with one level per parent is required")
    for v, x in zip(P, config):
        if not 0 <= x < t.card[v]:
            raise DataError(f"level {x} out of range for variable {v}")
    mask = np.all(t.data[:, P] == np.array(config), axis=1)
    sub = t.data[mask][:, S]
    cells: dict[tuple[int, ...], int] = {}
    if len(sub):
        configs, counts = np.unique(sub, axis=0, return_counts=True)
        cells = {tuple(int(x) for x in cfg): int(c) for cfg, c in zip(configs, counts)}
    return CountVector(S, P, config, cells, tuple(t.card[v] for v in S))


# ----------------------------------------------------------------------------
# ingestion


def ingest_records(rows: Sequence[Sequence[str]], na_policy: str = "level",
                   na: str = "NA") -> CategoricalTable:
    """Encode string records (first row is the header) into a table.

    Levels are numbered in order of first appearance.  With
    ``na_policy="level"`` the missing marker is an ordinary level; with
    ``"reject"`` its presence is an error.
    """
    if na_policy not in ("level", "reject"):
        raise DataError(f"unknown na_policy {na_policy!r}")
    if not rows:
        raise DataError("no header row")
    header = [h.strip() for h in rows[0]]
    q = len(header)
    if q == 0:
        raise DataError("empty header")
    body = rows[1:]
    if not body:
        raise DataError("no data rows")
    lookup: list[dict[str, int]] = [{} for _ in range(q)]
    data = np.empty((len(body), q), dtype=np.int64)
    for i, rec in enumerate(body):
        if len(rec) != q:
            raise DataError(f"row {i + 2} has {len(rec)} fields, expected {q}")
        for j, raw in enumerate(rec):
            val = raw.strip()
            if val == na and na_policy == "reject":
                raise DataError(f"missing value in row {i + 2}, column {header[j]!r}")
            data[i, j] = lookup[j].setdefault(val, len(lookup[j]))
    for j, lv in enumerate(lookup):
        if len(lv) < 2:
            raise DataError(f"variable {header[j]!r} has a single observed level")
    schema = Schema(tuple(header), tuple(tuple(lv) for lv in lookup))
    return CategoricalTable(data, schema)


def read_csv(path, delimiter: str = ",", na: str = "NA", na_policy: str = "level") -> CategoricalTable:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter=delimiter) if r]
    return ingest_records(rows, na_policy=na_policy, na=na)


def write_csv(path, t: CategoricalTable, delimiter: str = ",") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter)
        w.writerow(t.schema.names)
        for row in t.data:
            w.writerow([t.schema.levels[j][x] for j, x in enumerate(row)])
