"""Metropolis-Hastings sampling over essential graphs."""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Iterable

import numpy as np

from .contingency import CategoricalTable
from .graph import EssentialGraph, GraphError, Pdag, is_essential
from .operators import Operator, OperatorSet, _edit, enumerate_operators
from .scoring import DEFAULT_HP, Hyperparameters, Scorer


@dataclass(frozen=True)
class GraphPrior:
    """Independent Bernoulli(pi) inclusion of each skeleton edge."""

    pi: float

    def __post_init__(self):
        if not 0 < self.pi < 1:
            raise ValueError("edge inclusion probability must lie in (0, 1)")

    @classmethod
    def default(cls, q: int) -> "GraphPrior":
        return cls(1.5 / (2 * q - 2))


def log_graph_prior(g, prior: GraphPrior | float) -> float:
    pi = prior.pi if isinstance(prior, GraphPrior) else GraphPrior(prior).pi
    g = g.graph if isinstance(g, EssentialGraph) else g
    k = g.n_skeleton_edges()
    m = g.q * (g.q - 1) // 2
    return k * math.log(pi) + (m - k) * math.log1p(-pi)


@dataclass(frozen=True)
class McmcConfig:
    """Chain settings.  ``None`` fields are filled per table by :meth:`resolve`."""

    iterations: int | None = None
    burn_in: int = 0
    seed: int = 0
    initial: Pdag | None = None
    reverse_d: bool = True
    hp: Hyperparameters = DEFAULT_HP
    pi: float | None = None

    def resolve(self, q: int) -> "McmcConfig":
        cfg = replace(
            self,
            iterations=1000 * q if self.iterations is None else self.iterations,
            pi=GraphPrior.default(q).pi if self.pi is None else self.pi,
            initial=Pdag.empty(q) if self.initial is None else self.initial,
        )
        if cfg.iterations < 1:
            raise ValueError("at least one iteration is required")
        if not 0 <= cfg.burn_in < cfg.iterations:
            raise ValueError("burn-in must satisfy 0 <= burn_in < iterations")
        GraphPrior(cfg.pi)
        return cfg

    def echo(self) -> dict:
        d = asdict(self)
        d["initial"] = None if self.initial is None else self.initial.compact()
        d["hp"] = {"rule": self.hp.rule, "a": self.hp.a}
        return d


@dataclass(frozen=True)
class TraceEntry:
    t: int
    graph: Pdag
    log_marginal: float
    log_prior: float
    op: Operator | None
    accepted: bool
    log_alpha: float | None = None
    burn_in: bool = False

    def record(self) -> dict:
        return {
            "t": self.t,
            "adjacency": self.graph.compact(),
            "log_marginal": self.log_marginal,
            "log_prior": self.log_prior,
            "op_kind": None if self.op is None else self.op.kind,
            "op_vertices": None if self.op is None else list(self.op.vertices),
            "accepted": self.accepted,
            "burn_in": self.burn_in,
        }


@dataclass
class ChainTrace:
    """Visited graphs in order.  Entry 0 is the initial state; entry t >= 1 is the state after step t."""

    entries: list[TraceEntry]
    seed: int
    config: McmcConfig
    chain: int = 0

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def retained(self) -> list[TraceEntry]:
        return self.entries[self.config.burn_in:]

    @property
    def graphs(self) -> list[Pdag]:
        return [e.graph for e in self.entries]

    def acceptance_rate(self) -> float:
        steps = self.entries[1:]
        return sum(e.accepted for e in steps) / len(steps) if steps else 0.0

    def header(self) -> dict:
        return {"type": "header", "chain": self.chain, "seed": self.seed,
                "config": self.config.echo(), "length": len(self.entries)}

    def write_jsonl(self, fh, chain_field: bool = False) -> None:
        fh.write(json.dumps(self.header()) + "\n")
        for e in self.entries:
            rec = e.record()
            if chain_field:
                rec = {"chain": self.chain, **rec}
            fh.write(json.dumps(rec) + "\n")


def read_trace_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(ln) for ln in fh if ln.strip()]


def entries_from_records(records: Iterable[dict]) -> dict[int, list[TraceEntry]]:
    """Trace entries per chain index, rebuilt from JSON-lines records (headers skipped)."""
    out: dict[int, list[TraceEntry]] = {}
    for rec in records:
        if rec.get("type") == "header":
            continue
        op = None
        if rec.get("op_kind") is not None:
            op = Operator(rec["op_kind"], tuple(rec["op_vertices"]))
        out.setdefault(rec.get("chain", 0), []).append(TraceEntry(
            rec["t"], Pdag.from_compact(rec["adjacency"]), rec["log_marginal"], rec["log_prior"],
            op, rec["accepted"], burn_in=rec.get("burn_in", False)))
    return out


@dataclass
class ChainState:
    graph: Pdag
    log_marginal: float
    log_prior: float
    operators: OperatorSet


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator so independent streams can be split off by seed sequence."""
    return np.random.Generator(np.random.Philox(seed))


def initial_state(scorer: Scorer, g: Pdag, prior: GraphPrior, reverse_d: bool = True) -> ChainState:
    g = g.graph if isinstance(g, EssentialGraph) else g
    if not is_essential(g):
        raise GraphError(f"initial graph {g!r} is not an essential graph")
    return ChainState(g, scorer.score(g), log_graph_prior(g, prior), enumerate_operators(g, reverse_d))


def mh_step(state: ChainState, rng: np.random.Generator, scorer: Scorer, prior: GraphPrior,
            reverse_d: bool = True, t: int = 0) -> tuple[ChainState, TraceEntry]:
    """One Metropolis-Hastings move with a uniform draw from the perfect operator set.

    The successor's operator count is only needed when the proposal could be
    accepted: it is at least 1, so a draw above the ratio computed with a
    count of 1 already rejects.
    """
    ops = state.operators
    op = ops[int(rng.integers(len(ops)))]
    log_u = math.log(rng.random())
    g = state.graph
    new = Pdag(g.q, _edit(g.rows, op))
    lm = state.log_marginal + scorer.delta(g, new)
    lp = log_graph_prior(new, prior)
    log_ratio = lm - state.log_marginal + lp - state.log_prior + math.log(len(ops))
    if log_u >= log_ratio:
        return state, TraceEntry(t, g, state.log_marginal, state.log_prior, op, False)
    new_ops = enumerate_operators(new, reverse_d)
    log_alpha = min(0.0, log_ratio - math.log(len(new_ops)))
    if log_u < log_alpha:
        return (ChainState(new, lm, lp, new_ops),
                TraceEntry(t, new, lm, lp, op, True, log_alpha))
    return state, TraceEntry(t, g, state.log_marginal, state.log_prior, op, False, log_alpha)


def run_chain(t: CategoricalTable, cfg: McmcConfig, scorer: Scorer | None = None,
              rng: np.random.Generator | None = None, chain: int = 0) -> ChainTrace:
    """Run one chain of ``cfg.iterations`` entries starting from ``cfg.initial``."""
    if t.n == 0:
        raise ValueError("empty table")
    cfg = cfg.resolve(t.q)
    if cfg.initial.q != t.q:
        raise GraphError("initial graph size does not match the table")
    if scorer is None or scorer.table is not t or scorer.hp != cfg.hp:
        scorer = Scorer(t, cfg.hp)
    rng = make_rng(cfg.seed) if rng is None else rng
    prior = GraphPrior(cfg.pi)
    state = initial_state(scorer, cfg.initial, prior, cfg.reverse_d)
    entries = [TraceEntry(0, state.graph, state.log_marginal, state.log_prior, None, False,
                          burn_in=cfg.burn_in > 0)]
    for i in range(1, cfg.iterations):
        state, entry = mh_step(state, rng, scorer, prior, cfg.reverse_d, i)
        if i < cfg.burn_in:
            entry = replace(entry, burn_in=True)
        entries.append(entry)
    return ChainTrace(entries, cfg.seed, cfg, chain)


def _chain_job(args):
    t, cfg, seed_seq, idx = args
    return run_chain(t, cfg, rng=np.random.Generator(np.random.Philox(seed_seq)), chain=idx)


def run_chains(t: CategoricalTable, cfg: McmcConfig, n_chains: int = 1, workers: int = 1) -> list[ChainTrace]:
    """Independent chains on split random streams, returned in chain order."""
    if n_chains == 1:
        return [run_chain(t, cfg)]
    streams = np.random.SeedSequence(cfg.seed).spawn(n_chains)
    jobs = [(t, cfg, s, i) for i, s in enumerate(streams)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(_chain_job, jobs))
    return [_chain_job(j) for j in jobs]


def pooled(traces: Iterable[ChainTrace]) -> list[TraceEntry]:
    """Retained entries of several chains, concatenated after per-chain burn-in."""
    out: list[TraceEntry] = []
    for tr in traces:
        out.extend(tr.retained())
    return out
