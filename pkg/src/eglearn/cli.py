"""Command-line entry point: learn, score, simulate, benchmark, summarize."""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bench import SimScenario, external_rows, report_row, run_replicate, simulate_replicate, write_report
from .contingency import DataError, read_csv, write_csv
from .graph import GraphError, essential_violation, read_adjacency, write_adjacency
from .mcmc import (
    GraphPrior,
    McmcConfig,
    entries_from_records,
    log_graph_prior,
    pooled,
    read_trace_jsonl,
    run_chains,
)
from .posterior import edge_inclusion, map_estimate, median_probability_graph, project_to_eg, write_matrix_csv
from .scoring import DEFAULT_HP, Hyperparameters, eg_log_marginal

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INVARIANT = 3
EXIT_DEFECT = 4


class InvariantViolation(Exception):
    pass


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _write_manifest(out: Path, command: str, config: dict, seed, inputs, outputs, started: float) -> Path:
    manifest = {
        "command": command,
        "version": __version__,
        "config": config,
        "seed": seed,
        "inputs": {str(p): _digest(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
        "seconds": round(time.perf_counter() - started, 3),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _hp(args) -> Hyperparameters:
    return DEFAULT_HP if args.a is None else Hyperparameters.constant(args.a)


def _positive(kind):
    def parse(text):
        v = kind(text)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"expected a positive value, got {text}")
        return v
    return parse


def _estimates(entries, out: Path):
    m = edge_inclusion(entries)
    proj = project_to_eg(median_probability_graph(m), m)
    paths = [out / "edge_probs.csv", out / "map.adj", out / "mpg.adj"]
    write_matrix_csv(paths[0], m)
    write_adjacency(paths[1], map_estimate(entries))
    write_adjacency(paths[2], proj.graph)
    return paths, proj


def cmd_learn(args) -> int:
    started = time.perf_counter()
    table = read_csv(args.data, delimiter=args.delimiter, na=args.na_token, na_policy=args.na)
    cfg = McmcConfig(iterations=args.iters, burn_in=args.burn_in, seed=args.seed, hp=_hp(args), pi=args.pi)
    cfg = cfg.resolve(table.q)
    traces = run_chains(table, cfg, args.chains, args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / "trace.jsonl"
    with open(trace_path, "w") as fh:
        for tr in traces:
            tr.write_jsonl(fh, chain_field=args.chains > 1)
    paths, proj = _estimates(pooled(traces), out)
    config = cfg.echo()
    config.update(chains=args.chains, na=args.na, variables=list(table.schema.names),
                  dropped_edges=[list(e) for e in proj.dropped])
    manifest = _write_manifest(out, "learn", config, args.seed, [args.data], [trace_path, *paths], started)
    rates = ", ".join(f"{tr.acceptance_rate():.3f}" for tr in traces)
    print(f"q={table.q} n={table.n} iterations={cfg.iterations} acceptance={rates}")
    if proj.dropped:
        print(f"median graph repaired by dropping {list(proj.dropped)}")
    print(f"wrote {manifest}")
    return EXIT_OK


def cmd_score(args) -> int:
    table = read_csv(args.data, delimiter=args.delimiter, na=args.na_token, na_policy=args.na)
    g = read_adjacency(args.graph)
    if g.q != table.q:
        raise DataError(f"graph has {g.q} vertices but the data have {table.q} variables")
    why = essential_violation(g)
    if why is not None:
        raise InvariantViolation(f"not an essential graph: {why}")
    pi = GraphPrior.default(g.q).pi if args.pi is None else args.pi
    res = {
        "log_marginal": eg_log_marginal(table, g, _hp(args)),
        "log_prior": log_graph_prior(g, GraphPrior(pi)),
        "pi": pi,
        "n": table.n,
        "q": table.q,
    }
    res["log_posterior_unnormalized"] = res["log_marginal"] + res["log_prior"]
    if args.json:
        print(json.dumps(res))
    else:
        print(f"log_marginal {res['log_marginal']:.10f}")
        print(f"log_prior    {res['log_prior']:.10f}")
    if args.out:
        Path(args.out).write_text(json.dumps(res, indent=2) + "\n")
    return EXIT_OK


def _scenario(args, n) -> SimScenario:
    return SimScenario(q=args.q, n=n, replicates=args.replicates, seed=args.seed,
                       threshold_mode=args.threshold_mode, p_edge=args.p_edge)


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sc = _scenario(args, args.n)
    outputs = []
    for r in range(sc.replicates):
        dag, truth, table = simulate_replicate(sc, r)
        stem = f"{sc.ident}_r{r}"
        paths = [out / f"{stem}.csv", out / f"{stem}_dag.adj", out / f"{stem}_truth.adj"]
        write_csv(paths[0], table)
        write_adjacency(paths[1], dag)
        write_adjacency(paths[2], truth)
        outputs += paths
    config = {"q": sc.q, "n": sc.n, "replicates": sc.replicates, "threshold_mode": sc.threshold_mode,
              "p_edge": sc.edge_probability}
    manifest = _write_manifest(out, "simulate", config, sc.seed, [], outputs, started)
    print(f"wrote {len(outputs)} files and {manifest}")
    return EXIT_OK


def _parse_external(items):
    out = {}
    for item in items or ():
        name, sep, template = item.partition("=")
        if not sep or not name or not template:
            raise DataError(f"--external expects NAME=TEMPLATE, got {item!r}")
        out[name] = template
    return out


def cmd_benchmark(args) -> int:
    started = time.perf_counter()
    external = _parse_external(args.external)
    rows, inputs = [], []
    for n in args.n:
        sc = _scenario(args, n)
        for r in range(sc.replicates):
            res = run_replicate(sc, r, args.iters, args.pi)
            rows.append(report_row(sc, r, "eg_mcmc", res.metrics))
            if external:
                files = {m: tpl.format(scenario=sc.ident, q=sc.q, n=n, replicate=r,
                                       threshold_mode=sc.threshold_mode)
                         for m, tpl in external.items()}
                inputs += files.values()
                rows += external_rows(sc, r, res.truth, files)
            if not args.quiet:
                m = res.metrics
                print(f"n={n} replicate={r} SHD={m['SHD']} MCC={m['MCC']:.3f} ({res.seconds:.1f}s)",
                      file=sys.stderr)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_report(out, rows)
    config = {"q": args.q, "n": args.n, "replicates": args.replicates, "iters": args.iters, "pi": args.pi,
              "threshold_mode": args.threshold_mode, "p_edge": args.p_edge, "external": external}
    _write_manifest(out.parent, "benchmark", config, args.seed, inputs, [out], started)
    for n in args.n:
        mine = [r for r in rows if r["n"] == n and r["method"] == "eg_mcmc"]
        print(f"n={n}: mean MCC {np.mean([r['MCC'] for r in mine]):.4f}, "
              f"median SHD {np.median([r['SHD'] for r in mine]):g}")
    return EXIT_OK


def cmd_summarize(args) -> int:
    started = time.perf_counter()
    chains = entries_from_records(read_trace_jsonl(args.trace))
    if not chains:
        raise DataError("trace holds no entries")
    entries = []
    for idx in sorted(chains):
        es = chains[idx]
        entries += es[args.burn_in:] if args.burn_in is not None else [e for e in es if not e.burn_in]
    if not entries:
        raise DataError("no entries remain after burn-in")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths, proj = _estimates(entries, out)
    config = {"burn_in": args.burn_in, "chains": len(chains), "retained": len(entries),
              "dropped_edges": [list(e) for e in proj.dropped]}
    _write_manifest(out, "summarize", config, None, [args.trace], paths, started)
    print(f"summarized {len(entries)} entries from {len(chains)} chain(s)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eglearn", description="Bayesian structure learning over essential graphs.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def data_opts(sp):
        sp.add_argument("--delimiter", default=",")
        sp.add_argument("--na", choices=("level", "reject"), default="level",
                        help="treat the missing-value token as a level or reject it")
        sp.add_argument("--na-token", default="NA")
        sp.add_argument("--a", type=_positive(float), default=None,
                        help="constant Dirichlet hyperparameter per component cell (default: 1/l)")

    sp = sub.add_parser("learn", help="sample essential graphs from their posterior")
    sp.add_argument("data")
    sp.add_argument("--out", default="eglearn_out")
    sp.add_argument("--iters", type=_positive(int), default=None, help="trace length (default 1000*q)")
    sp.add_argument("--burn-in", type=int, default=0)
    sp.add_argument("--pi", type=float, default=None, help="edge inclusion probability (default 1.5/(2q-2))")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--chains", type=_positive(int), default=1)
    sp.add_argument("--workers", type=_positive(int), default=1)
    data_opts(sp)
    sp.set_defaults(func=cmd_learn)

    sp = sub.add_parser("score", help="log marginal likelihood and prior of an essential graph")
    sp.add_argument("data")
    sp.add_argument("graph")
    sp.add_argument("--pi", type=float, default=None)
    sp.add_argument("--json", action="store_true", help="print a JSON object instead of text")
    sp.add_argument("--out", default=None, help="also write the JSON result here")
    data_opts(sp)
    sp.set_defaults(func=cmd_score)

    def scenario_opts(sp):
        sp.add_argument("--q", type=int, default=10)
        sp.add_argument("--replicates", type=_positive(int), default=1)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threshold-mode", choices=("balanced", "unbalanced"), default="balanced")
        sp.add_argument("--p-edge", type=float, default=None, help="default 3/(2q-2)")

    sp = sub.add_parser("simulate", help="write synthetic binary datasets and their true graphs")
    sp.add_argument("--n", type=_positive(int), default=1000)
    sp.add_argument("--out", default="eglearn_sim")
    scenario_opts(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("benchmark", help="generate, learn and score replicates; write a long-format report")
    sp.add_argument("--n", type=_positive(int), nargs="+", default=[100, 1000])
    sp.add_argument("--iters", type=_positive(int), default=None)
    sp.add_argument("--pi", type=float, default=None)
    sp.add_argument("--out", default="report.csv")
    sp.add_argument("--external", action="append", metavar="NAME=TEMPLATE",
                    help="adjacency files of another method; TEMPLATE may use {scenario} {q} {n} {replicate}")
    sp.add_argument("--quiet", action="store_true")
    scenario_opts(sp)
    sp.set_defaults(func=cmd_benchmark)

    sp = sub.add_parser("summarize", help="edge probabilities and point estimates from a saved trace")
    sp.add_argument("trace")
    sp.add_argument("--burn-in", type=int, default=None, help="override the burn-in flags stored in the trace")
    sp.add_argument("--out", default="eglearn_summary")
    sp.set_defaults(func=cmd_summarize)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"eglearn: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (DataError, GraphError, OSError, ValueError) as exc:
        print(f"eglearn: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        print(f"eglearn: internal error: {exc!r}", file=sys.stderr)
        return EXIT_DEFECT


if __name__ == "__main__":
    sys.exit(main())
