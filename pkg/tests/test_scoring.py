import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from eglearn.contingency import CategoricalTable
from eglearn.graph import Dag, Pdag, chain_components, consistent_extension, dag_to_cpdag, decompose
from eglearn.scoring import (
    Hyperparameters,
    Scorer,
    asym_diagnostic,
    component_loglik,
    eg_log_marginal,
    local_set_loglik,
)


def table(rows, card):
    return CategoricalTable.from_codes(np.array(rows, dtype=np.int64).reshape(len(rows), -1), card)


def test_single_binary_variable_gamma_recurrence():
    # a = 1/2 per level: P(0,1) = 1/2 * 1/2 / 2, P(0,0) = 1/2 * 3/2 / 2
    assert oracles.urn_prob_exact([(0,), (1,)], [2], Fraction(1, 2)) == Fraction(1, 8)
    assert oracles.urn_prob_exact([(0,), (0,)], [2], Fraction(1, 2)) == Fraction(3, 8)
    g = Pdag.empty(1)
    assert eg_log_marginal(table([[0], [1]], [2]), g) == pytest.approx(math.log(1 / 8), abs=1e-14)
    assert eg_log_marginal(table([[0], [0]], [2]), g) == pytest.approx(math.log(3 / 8), abs=1e-14)


def test_hyperparameter_rules():
    hp = Hyperparameters()
    assert hp.cell_prior(4, 8) == 0.25
    assert Hyperparameters.constant(0.5).cell_prior(2, 8) == 2.0
    with pytest.raises(ValueError):
        Hyperparameters("constant")
    with pytest.raises(ValueError):
        Hyperparameters("other")


@pytest.mark.parametrize("g", [Pdag.empty(2), Pdag.from_edges(2, undirected=[(0, 1)])])
def test_normalization_over_all_sequences(g):
    total = 0.0
    for seq in itertools.product(itertools.product((0, 1), repeat=2), repeat=3):
        total += math.exp(eg_log_marginal(table(list(seq), [2, 2]), g))
    assert abs(total - 1.0) < 1e-10


def test_empty_graph_is_sum_of_single_variable_terms():
    rng = np.random.default_rng(4)
    data = rng.integers(0, 3, size=(50, 3))
    t = table(data, [3, 3, 3])
    single = sum(local_set_loglik(t, [j]) for j in range(3))
    assert eg_log_marginal(t, Pdag.empty(3)) == pytest.approx(single, abs=1e-12)


def test_local_terms_sum_over_parent_configurations():
    rng = np.random.default_rng(5)
    data = rng.integers(0, 2, size=(80, 3))
    t = table(data, [2, 2, 2])
    per_r = sum(local_set_loglik(t, [2], [0, 1], r) for r in itertools.product((0, 1), repeat=2))
    assert component_loglik(t, [2], [0, 1], [[2]], []) == pytest.approx(per_r, abs=1e-12)


def test_constant_rule_complete_component_matches_urn():
    rng = np.random.default_rng(6)
    data = rng.integers(0, 2, size=(40, 2))
    t = table(data, [2, 2])
    g = Pdag.from_edges(2, undirected=[(0, 1)])
    want = oracles.urn_log_prob([tuple(r) for r in data], [2, 2], 0.7)
    assert eg_log_marginal(t, g, Hyperparameters.constant(0.7)) == pytest.approx(want, abs=1e-10)


@pytest.mark.parametrize("q,card", [(3, [2, 3, 2]), (4, [2, 2, 3, 2])])
def test_all_essential_graphs_match_urn_oracle(q, card):
    rng = np.random.default_rng(q)
    data = rng.integers(0, card, size=(70, q))
    t = table(data, card)
    recs = [tuple(int(x) for x in r) for r in data]
    for eg, _ in oracles.essential_edge_sets(q):
        g = Pdag(q, oracles.edges_to_rows(q, eg))
        assert eg_log_marginal(t, g) == pytest.approx(oracles.eg_log_marginal(q, eg, recs, card), abs=1e-9)


def test_scorer_matches_direct_and_delta():
    rng = np.random.default_rng(7)
    t = table(rng.integers(0, 2, size=(60, 4)), [2, 2, 2, 2])
    sc = Scorer(t)
    egs = [Pdag(4, oracles.edges_to_rows(4, eg)) for eg, _ in oracles.essential_edge_sets(4)]
    for g in egs[:40]:
        assert sc.score(g) == pytest.approx(eg_log_marginal(t, g), abs=1e-10)
    for a, b in zip(egs[:40], egs[1:41]):
        assert sc.delta(a, b) == pytest.approx(sc.score(b) - sc.score(a), abs=1e-9)


@st.composite
def random_dags(draw):
    q = draw(st.integers(3, 7))
    order = draw(st.permutations(range(q)))
    pairs = [(order[i], order[j]) for i in range(q) for j in range(i + 1, q)]
    keep = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    return Dag.from_edges(q, directed=[p for p, k in zip(pairs, keep) if k])


@settings(max_examples=60, deadline=None)
@given(random_dags(), st.integers(0, 2**31 - 1))
def test_score_invariant_to_search_start(d, seed):
    g = dag_to_cpdag(d).graph
    rng = np.random.default_rng(seed)
    t = table(rng.integers(0, 2, size=(30, g.q)), [2] * g.q)
    base = eg_log_marginal(t, g)
    for comp in chain_components(g):
        low = min(comp)
        for s in comp:
            val = eg_log_marginal(t, g, decomposition=decompose(g, {low: s}))
            assert abs(val - base) < 1e-10


@settings(max_examples=60, deadline=None)
@given(random_dags(), st.integers(0, 2**31 - 1))
def test_markov_equivalent_dags_score_equal(d, seed):
    rng = np.random.default_rng(seed)
    t = table(rng.integers(0, 2, size=(25, d.q)), [2] * d.q)
    eg = dag_to_cpdag(d)
    assert eg_log_marginal(t, dag_to_cpdag(consistent_extension(eg.graph))) == eg_log_marginal(t, eg)


def test_asymptotic_diagnostic_matches_hand_formula():
    rng = np.random.default_rng(8)
    theta = np.array([0.1, 0.2, 0.3, 0.4])
    cells = rng.choice(4, size=5000, p=theta)
    data = np.stack([cells // 2, cells % 2, rng.integers(0, 2, size=5000)], axis=1)
    t = table(data, [2, 2, 2])
    r = asym_diagnostic(t, [0, 1], [2], [1], theta0=theta)
    mask = data[:, 2] == 1
    n_r = int(mask.sum())
    counts = np.bincount(cells[mask], minlength=4)
    nbar = (counts + 0.25) / n_r
    logs = np.log(nbar)
    sd = math.sqrt(sum(((nbar[i] if i == j else 0) - nbar[i] * nbar[j]) * logs[i] * logs[j]
                       for i in range(4) for j in range(4)))

    def g(x):
        return (sum(math.lgamma(n_r * v) for v in x) - math.lgamma(n_r * sum(x))) / n_r

    assert r.n_r == n_r
    assert r.estimated_sd == pytest.approx(sd, rel=1e-9)
    assert r.statistic == pytest.approx(math.sqrt(n_r) * (g(nbar) - g(theta)) / sd, rel=1e-8)
    r_n = asym_diagnostic(t, [0, 1], [2], [1], theta0=theta, scale="n")
    assert r_n.statistic == pytest.approx(r.statistic, rel=1e-8)


def test_asymptotic_diagnostic_errors():
    t = table([[0, 0], [1, 0]], [2, 2])
    with pytest.raises(ValueError):
        asym_diagnostic(t, [0], [1], [1])
    with pytest.raises(ValueError):
        asym_diagnostic(t, [0], scale="other")
