"""Bayesian structure learning of discrete graphical models over essential graphs."""

__version__ = "0.1.0"

from .contingency import CategoricalTable, DataError, Schema, conditional_counts, marginal_counts, read_csv
from .graph import (
    Dag,
    EssentialGraph,
    GraphError,
    NoExtensionError,
    NotChordalError,
    Pdag,
    chain_components,
    clique_separator_sequence,
    consistent_extension,
    dag_to_cpdag,
    decompose,
    is_essential,
)
from .mcmc import ChainTrace, GraphPrior, McmcConfig, log_graph_prior, run_chain, run_chains
from .operators import Operator, apply_operator, enumerate_operators
from .posterior import edge_inclusion, map_estimate, median_probability_graph, project_to_eg
from .scoring import Hyperparameters, Scorer, eg_log_marginal

__all__ = [
    "CategoricalTable", "ChainTrace", "Dag", "DataError", "EssentialGraph", "GraphError", "GraphPrior",
    "Hyperparameters", "McmcConfig", "NoExtensionError", "NotChordalError", "Operator", "Pdag", "Schema",
    "Scorer", "apply_operator", "chain_components", "clique_separator_sequence", "conditional_counts",
    "consistent_extension", "dag_to_cpdag", "decompose", "edge_inclusion", "eg_log_marginal",
    "enumerate_operators", "is_essential", "log_graph_prior", "map_estimate", "marginal_counts",
    "median_probability_graph", "project_to_eg", "read_csv", "run_chain", "run_chains",
]
