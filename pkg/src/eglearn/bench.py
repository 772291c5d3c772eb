"""Synthetic binary data from latent Gaussian DAG models, and recovery metrics."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np

from .contingency import CategoricalTable
from .graph import Dag, EssentialGraph, Pdag, dag_to_cpdag, read_adjacency, topological_order
from .mcmc import McmcConfig, run_chain
from .posterior import edge_inclusion, median_probability_graph, project_to_eg

METRICS = ("SHD", "MISR", "SPE", "SEN", "PRE", "MCC")
REPORT_COLUMNS = ("scenario", "q", "n", "replicate", "method", "threshold_mode") + METRICS


@dataclass(frozen=True)
class SimScenario:
    q: int
    n: int
    replicates: int = 1
    seed: int = 0
    threshold_mode: str = "balanced"
    p_edge: float | None = None
    beta_low: float = 0.1
    beta_high: float = 1.0

    def __post_init__(self):
        if self.q < 2 or self.n < 1 or self.replicates < 1:
            raise ValueError("need q >= 2, n >= 1 and at least one replicate")
        if self.threshold_mode not in ("balanced", "unbalanced"):
            raise ValueError(f"unknown threshold mode {self.threshold_mode!r}")
        if not 0 < self.edge_probability < 1:
            raise ValueError("edge probability must lie in (0, 1)")

    @property
    def edge_probability(self) -> float:
        return 3 / (2 * self.q - 2) if self.p_edge is None else self.p_edge

    @property
    def ident(self) -> str:
        return f"q{self.q}_n{self.n}_{self.threshold_mode}"


@dataclass(frozen=True)
class ConfusionCounts:
    TP: int
    TN: int
    FP: int
    FN: int


@dataclass(frozen=True)
class Metrics:
    MISR: float
    SPE: float
    SEN: float
    PRE: float
    MCC: float


def random_dag(q: int, p_edge: float, rng: np.random.Generator) -> Dag:
    """Random topological order, then each order-respecting edge with probability ``p_edge``."""
    if not 0 < p_edge < 1:
        raise ValueError("edge probability must lie in (0, 1)")
    order = rng.permutation(q)
    keep = rng.random((q, q)) < p_edge
    rows = [0] * q
    for i in range(q):
        for j in range(i + 1, q):
            if keep[i, j]:
                rows[order[i]] |= 1 << int(order[j])
    return Dag(q, tuple(rows))


def draw_coefficients(d: Pdag, rng: np.random.Generator, low=0.1, high=1.0) -> np.ndarray:
    """Edge weights uniform on [-high, -low] U [low, high]; zero off the edge set."""
    b = np.zeros((d.q, d.q))
    for u, v in d.directed_edges():
        b[u, v] = rng.choice((-1.0, 1.0)) * rng.uniform(low, high)
    return b


def generate_dataset(d: Pdag, n: int, scenario: SimScenario | None, rng: np.random.Generator,
                     beta: np.ndarray | None = None, thresholds=None):
    """Latent Gaussian forward simulation, thresholded to binary levels.

    Returns ``(table, thresholds, beta)``.
    """
    order = topological_order(d)
    if order is None or any(d.und):
        raise ValueError("generate_dataset expects a DAG")
    q = d.q
    mode = scenario.threshold_mode if scenario is not None else "balanced"
    if beta is None:
        lo, hi = (scenario.beta_low, scenario.beta_high) if scenario is not None else (0.1, 1.0)
        beta = draw_coefficients(d, rng, lo, hi)
    if thresholds is None:
        thresholds = np.zeros(q) if mode == "balanced" else rng.uniform(0.0, 1.0, size=q)
    thresholds = np.asarray(thresholds, dtype=float)
    z = np.zeros((n, q))
    eps = rng.standard_normal((n, q))
    for j in order:
        z[:, j] = z @ beta[:, j] + eps[:, j]
    y = (z >= thresholds).astype(np.int64)
    return CategoricalTable.from_codes(y, [2] * q), thresholds, beta


def _adjacency(g) -> np.ndarray:
    g = g.graph if isinstance(g, EssentialGraph) else g
    return g.to_matrix().astype(bool)


def shd(g1, g2) -> int:
    """Edge insertions, deletions and orientation changes between two graphs."""
    a, b = _adjacency(g1), _adjacency(g2)
    if a.shape != b.shape:
        raise ValueError("graphs differ in size")
    q = a.shape[0]
    d = 0
    for u in range(q):
        for v in range(u + 1, q):
            e1 = (a[u, v], a[v, u])
            e2 = (b[u, v], b[v, u])
            if e1 != e2:
                d += 1
    return d


def confusion(estimate, truth) -> ConfusionCounts:
    est, tru = _adjacency(estimate), _adjacency(truth)
    if est.shape != tru.shape:
        raise ValueError("graphs differ in size")
    off = ~np.eye(est.shape[0], dtype=bool)
    tp = int(np.sum(est & tru & off))
    tn = int(np.sum(~est & ~tru & off))
    fp = int(np.sum(est & ~tru & off))
    fn = int(np.sum(~est & tru & off))
    return ConfusionCounts(tp, tn, fp, fn)


def _ratio(num, den) -> float:
    return num / den if den else 0.0


def confusion_metrics(estimate, truth) -> Metrics:
    """MISR, SPE, SEN, PRE and MCC over off-diagonal adjacency entries.

    Undefined ratios are reported as 0.
    """
    c = confusion(estimate, truth)
    total = c.TP + c.TN + c.FP + c.FN
    den = (c.TP + c.FP) * (c.TP + c.FN) * (c.TN + c.FP) * (c.TN + c.FN)
    mcc = (c.TP * c.TN - c.FP * c.FN) / math.sqrt(den) if den else 0.0
    return Metrics(
        MISR=(c.FN + c.FP) / total,
        SPE=_ratio(c.TN, c.TN + c.FP),
        SEN=_ratio(c.TP, c.TP + c.FN),
        PRE=_ratio(c.TP, c.TP + c.FP),
        MCC=mcc,
    )


def evaluate(estimate, truth) -> dict:
    row = asdict(confusion_metrics(estimate, truth))
    row["SHD"] = shd(estimate, truth)
    return row


def replicate_rng(seed: int, replicate: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent streams for the generating model and for the sampler of one replicate."""
    model, chain = np.random.SeedSequence([seed, replicate]).spawn(2)
    return np.random.Generator(np.random.Philox(model)), np.random.Generator(np.random.Philox(chain))


@dataclass
class ReplicateResult:
    scenario: SimScenario
    replicate: int
    truth: EssentialGraph
    estimate: EssentialGraph
    metrics: dict
    seconds: float
    dropped: tuple = ()


def simulate_replicate(scenario: SimScenario, replicate: int):
    """Generating DAG, its essential graph and a dataset for one replicate.

    The DAG, coefficients and thresholds depend only on (seed, replicate), so
    scenarios differing only in n share their generating models.
    """
    model_rng, _ = replicate_rng(scenario.seed, replicate)
    dag = random_dag(scenario.q, scenario.edge_probability, model_rng)
    beta = draw_coefficients(dag, model_rng, scenario.beta_low, scenario.beta_high)
    if scenario.threshold_mode == "balanced":
        gam = np.zeros(scenario.q)
    else:
        gam = model_rng.uniform(0.0, 1.0, size=scenario.q)
    data_rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([scenario.seed, replicate, scenario.n])))
    table, _, _ = generate_dataset(dag, scenario.n, scenario, data_rng, beta=beta, thresholds=gam)
    return dag, dag_to_cpdag(dag), table


def run_replicate(scenario: SimScenario, replicate: int, iterations: int | None = None,
                  pi: float | None = None) -> ReplicateResult:
    """Generate, learn, project and score one replicate."""
    start = time.perf_counter()
    _, truth, table = simulate_replicate(scenario, replicate)
    _, chain_rng = replicate_rng(scenario.seed, replicate)
    cfg = McmcConfig(iterations=iterations, pi=pi, seed=scenario.seed)
    trace = run_chain(table, cfg, rng=chain_rng)
    m = edge_inclusion(trace)
    proj = project_to_eg(median_probability_graph(m), m)
    return ReplicateResult(scenario, replicate, truth, proj.graph, evaluate(proj.graph, truth),
                           time.perf_counter() - start, proj.dropped)


def report_row(scenario: SimScenario, replicate: int, method: str, metrics: dict) -> dict:
    row = {"scenario": scenario.ident, "q": scenario.q, "n": scenario.n, "replicate": replicate,
           "method": method, "threshold_mode": scenario.threshold_mode}
    row.update({k: metrics[k] for k in METRICS})
    return row


def external_rows(scenario: SimScenario, replicate: int, truth, estimates: dict) -> list[dict]:
    """Rows for estimates produced elsewhere (e.g. PC or hill climbing), given as adjacency files or graphs.

    DAG estimates are mapped to their essential graphs before comparison.
    """
    rows = []
    for method, est in sorted(estimates.items()):
        g = read_adjacency(est) if isinstance(est, (str, bytes)) or hasattr(est, "__fspath__") else est
        g = g.graph if isinstance(g, EssentialGraph) else g
        if not any(g.und) and topological_order(g) is not None:
            g = dag_to_cpdag(g)
        rows.append(report_row(scenario, replicate, method, evaluate(g, truth)))
    return rows


def run_benchmark(scenarios: Iterable[SimScenario], iterations: int | None = None,
                  pi: float | None = None, progress=None) -> list[dict]:
    rows = []
    for sc in scenarios:
        for r in range(sc.replicates):
            res = run_replicate(sc, r, iterations, pi)
            rows.append(report_row(sc, r, "eg_mcmc", res.metrics))
            if progress is not None:
                progress(res)
    return rows


def write_report(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow(row)
