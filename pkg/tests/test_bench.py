import csv
import math

import numpy as np
import pytest

from eglearn.bench import (
    REPORT_COLUMNS,
    SimScenario,
    confusion,
    confusion_metrics,
    external_rows,
    generate_dataset,
    random_dag,
    run_benchmark,
    shd,
    simulate_replicate,
    write_report,
)
from eglearn.graph import Dag, Pdag, dag_to_cpdag, topological_order, write_adjacency


def test_scenario_validation():
    with pytest.raises(ValueError):
        SimScenario(q=1, n=10)
    with pytest.raises(ValueError):
        SimScenario(q=3, n=10, threshold_mode="skewed")
    assert SimScenario(q=10, n=5).edge_probability == pytest.approx(3 / 18)


def test_random_dag_limits_and_acyclicity():
    rng = np.random.default_rng(0)
    assert random_dag(6, 1e-9, rng) == Pdag.empty(6)
    for _ in range(50):
        assert topological_order(random_dag(7, 0.5, rng)) is not None


def test_random_dag_edge_count_mean():
    rng = np.random.default_rng(1)
    q, p, draws = 6, 0.3, 10_000
    counts = np.array([random_dag(q, p, rng).n_skeleton_edges() for _ in range(draws)])
    m = q * (q - 1) // 2
    se = math.sqrt(m * p * (1 - p) / draws)
    assert abs(counts.mean() - m * p) < 3 * se


def test_independent_fair_coins_when_coefficients_vanish():
    rng = np.random.default_rng(2)
    d = Dag.from_edges(3, directed=[(0, 1), (1, 2)])
    t, gam, _ = generate_dataset(d, 10_000, SimScenario(q=3, n=10_000), rng, beta=np.zeros((3, 3)))
    assert np.all(gam == 0)
    rates = t.data.mean(axis=0)
    assert np.all(np.abs(rates - 0.5) < 3 * 0.5 / 100)


def test_unbalanced_thresholds_produce_excess_zeros():
    rng = np.random.default_rng(3)
    sc = SimScenario(q=5, n=10_000, threshold_mode="unbalanced")
    d = random_dag(5, 0.4, rng)
    t, gam, _ = generate_dataset(d, 10_000, sc, rng)
    assert np.all((gam >= 0) & (gam <= 1))
    assert np.all(t.data.mean(axis=0) <= 0.5 + 3 * 0.5 / 100)


def test_shd_examples():
    a = Pdag.from_edges(3, directed=[(0, 1)])
    assert shd(a, a) == 0
    assert shd(Pdag.from_edges(2, directed=[(0, 1)]), Pdag.from_edges(2, undirected=[(0, 1)])) == 1
    assert shd(Pdag.empty(3), Pdag.from_edges(3, directed=[(1, 2)], undirected=[(0, 1)])) == 2
    with pytest.raises(ValueError):
        shd(Pdag.empty(2), Pdag.empty(3))


def test_confusion_hand_count():
    truth = Pdag.from_edges(4, directed=[(0, 1), (2, 3), (1, 2)])
    est = Pdag.from_edges(4, directed=[(0, 1), (2, 3), (3, 0)])
    c = confusion(est, truth)
    assert (c.TP, c.FP, c.FN, c.TN) == (2, 1, 1, 8)
    m = confusion_metrics(est, truth)
    assert m.MISR == pytest.approx(2 / 12)
    assert m.SEN == pytest.approx(2 / 3) and m.PRE == pytest.approx(2 / 3)
    assert m.MCC == pytest.approx((2 * 8 - 1) / math.sqrt(3 * 3 * 9 * 9))


def test_metric_edge_cases():
    truth = Pdag.from_edges(3, undirected=[(0, 1)])
    perfect = confusion_metrics(truth, truth)
    assert (perfect.MISR, perfect.SPE, perfect.SEN, perfect.PRE, perfect.MCC) == (0, 1, 1, 1, 1)
    empty = confusion_metrics(Pdag.empty(3), truth)
    assert (empty.SEN, empty.SPE, empty.PRE, empty.MCC) == (0, 1, 0, 0)


def test_replicate_models_shared_across_sample_sizes():
    a, ta, _ = simulate_replicate(SimScenario(q=5, n=50, seed=4), 1)
    b, tb, _ = simulate_replicate(SimScenario(q=5, n=500, seed=4), 1)
    assert a == b and ta == tb


def test_benchmark_smoke_and_report(tmp_path):
    sc = SimScenario(q=5, n=100, replicates=2, seed=0)
    rows = run_benchmark([sc], iterations=300)
    assert len(rows) == 2
    for r in rows:
        assert all(r[k] is not None for k in ("SHD", "MISR", "SPE", "SEN", "PRE", "MCC"))
    path = tmp_path / "report.csv"
    write_report(path, rows)
    with open(path) as fh:
        back = list(csv.DictReader(fh))
    assert tuple(back[0]) == REPORT_COLUMNS and len(back) == 2


def test_external_estimates_are_mapped_to_essential_graphs(tmp_path):
    sc = SimScenario(q=3, n=10)
    truth = dag_to_cpdag(Dag.from_edges(3, directed=[(0, 1), (1, 2)]))
    path = tmp_path / "pc.adj"
    write_adjacency(path, Dag.from_edges(3, directed=[(1, 0), (2, 1)]))
    (row,) = external_rows(sc, 0, truth, {"pc": str(path)})
    assert row["method"] == "pc" and row["SHD"] == 0 and row["MCC"] == 1
