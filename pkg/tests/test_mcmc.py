import io
import json
import math

import numpy as np
import pytest

import oracles
from eglearn.contingency import CategoricalTable
from eglearn.graph import GraphError, Pdag, is_essential
from eglearn.mcmc import (
    GraphPrior,
    McmcConfig,
    entries_from_records,
    log_graph_prior,
    run_chain,
    run_chains,
)
from eglearn.operators import apply_operator, enumerate_operators
from eglearn.scoring import eg_log_marginal


def toy(q, n, seed):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 2, size=(n, q))
    # couple neighbouring columns so the posterior is not flat
    for j in range(1, q):
        flip = rng.random(n) < 0.2
        x[:, j] = np.where(flip, 1 - x[:, j - 1], x[:, j - 1])
    return CategoricalTable.from_codes(x, [2] * q)


def test_graph_prior_examples():
    assert log_graph_prior(Pdag.empty(3), 0.5) == pytest.approx(3 * math.log(0.5))
    full = Pdag.from_edges(4, undirected=[(u, v) for u in range(4) for v in range(u + 1, 4)])
    assert log_graph_prior(full, 0.3) == pytest.approx(6 * math.log(0.3))
    two = Pdag.from_edges(4, directed=[(0, 1)], undirected=[(2, 3)])
    assert log_graph_prior(two, 0.25) == pytest.approx(2 * math.log(0.25) + 4 * math.log(0.75))
    with pytest.raises(ValueError):
        GraphPrior(1.0)
    assert GraphPrior.default(10).pi == pytest.approx(1.5 / 18)


def test_config_defaults_and_validation():
    cfg = McmcConfig().resolve(5)
    assert cfg.iterations == 5000 and cfg.pi == pytest.approx(1.5 / 8) and cfg.initial == Pdag.empty(5)
    with pytest.raises(ValueError):
        McmcConfig(iterations=10, burn_in=10).resolve(3)
    with pytest.raises(ValueError):
        McmcConfig(iterations=0).resolve(3)


def test_single_entry_trace():
    tr = run_chain(toy(3, 50, 0), McmcConfig(iterations=1, seed=9))
    assert len(tr) == 1 and tr[0].graph == Pdag.empty(3)


def test_invalid_initial_graph():
    with pytest.raises(GraphError):
        run_chain(toy(2, 20, 0), McmcConfig(iterations=5, initial=Pdag.from_edges(2, directed=[(0, 1)])))
    with pytest.raises(GraphError):
        run_chain(toy(2, 20, 0), McmcConfig(iterations=5, initial=Pdag.empty(3)))


def test_trace_structure_and_determinism():
    t = toy(4, 100, 1)
    cfg = McmcConfig(iterations=600, burn_in=100, seed=3)
    a, b = run_chain(t, cfg), run_chain(t, cfg)
    assert len(a) == 600
    assert [e.graph for e in a] == [e.graph for e in b]
    assert [e.log_marginal for e in a] == [e.log_marginal for e in b]
    for prev, cur in zip(a.entries, a.entries[1:]):
        assert is_essential(cur.graph)
        if not cur.accepted:
            assert cur.graph == prev.graph
    assert all(e.burn_in for e in a.entries[:100]) and not any(e.burn_in for e in a.entries[100:])
    assert len(a.retained()) == 500
    for e in a.entries[::50]:
        assert e.log_marginal == pytest.approx(eg_log_marginal(t, e.graph), abs=1e-8)
        assert e.log_prior == pytest.approx(log_graph_prior(e.graph, cfg.resolve(4).pi), abs=1e-12)


def test_jsonl_roundtrip():
    tr = run_chain(toy(3, 40, 2), McmcConfig(iterations=50, seed=1))
    buf = io.StringIO()
    tr.write_jsonl(buf)
    records = [json.loads(ln) for ln in buf.getvalue().splitlines()]
    assert records[0]["type"] == "header" and records[0]["length"] == 50
    assert {"t", "adjacency", "log_marginal", "log_prior", "op_kind", "op_vertices", "accepted"} <= set(records[1])
    back = entries_from_records(records)[0]
    assert [e.graph for e in back] == tr.graphs


def test_multiple_chains_use_distinct_streams():
    t = toy(3, 60, 3)
    traces = run_chains(t, McmcConfig(iterations=300, seed=5), n_chains=2)
    assert [tr.chain for tr in traces] == [0, 1]
    assert traces[0].graphs != traces[1].graphs
    again = run_chains(t, McmcConfig(iterations=300, seed=5), n_chains=2)
    assert [tr.graphs for tr in traces] == [tr.graphs for tr in again]


def test_two_vertex_chain_matches_exact_stationary_distribution():
    t = toy(2, 30, 4)
    data = [tuple(int(x) for x in r) for r in t.data]
    post = oracles.exact_posterior(2, data, [2, 2], 0.5)
    p_edge = next(p for g, p in post.items() if g)
    tr = run_chain(t, McmcConfig(iterations=40000, pi=0.5, seed=11))
    freq = np.mean([e.graph.n_skeleton_edges() for e in tr.entries])
    # both graphs have one operator, so the chain is a two-state Metropolis chain
    assert abs(freq - p_edge) < 0.02


def test_transition_kernel_leaves_exact_posterior_invariant():
    # a bimodal q=3 posterior where a finite chain mixes slowly; the kernel itself must still be exact
    rng = np.random.default_rng(0)
    n = 200
    x0, x2 = rng.integers(0, 2, n), rng.integers(0, 2, n)
    x1 = np.where(rng.random(n) < 0.35, 1 - (x0 ^ x2), x0 ^ x2)
    x1 = np.where(rng.random(n) < 0.5, x1, np.where(rng.random(n) < 0.3, 1 - x0, x0))
    t = CategoricalTable.from_codes(np.stack([x0, x1, x2], axis=1), [2, 2, 2])
    post = oracles.exact_posterior(3, [tuple(int(v) for v in r) for r in t.data], [2, 2, 2], 0.5)
    egs = [Pdag(3, oracles.edges_to_rows(3, g)) for g in post]
    index = {g: i for i, g in enumerate(egs)}
    logp = [eg_log_marginal(t, g) + log_graph_prior(g, 0.5) for g in egs]
    kernel = np.zeros((len(egs), len(egs)))
    for i, g in enumerate(egs):
        ops = enumerate_operators(g)
        for op in ops:
            h = apply_operator(g, op)
            j = index[h]
            ratio = logp[j] - logp[i] + math.log(len(ops)) - math.log(len(enumerate_operators(h)))
            kernel[i, j] += min(1.0, math.exp(ratio)) / len(ops)
        kernel[i, i] = 1 - kernel[i].sum()
    pi = np.array(list(post.values()))
    assert np.abs(pi @ kernel - pi).max() < 1e-12
