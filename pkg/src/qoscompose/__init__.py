"""Multi-objective QoS-aware service composition.

Typical use::

    from qoscompose import load_running_example, preprocess, build_graph, solve_optimal
    repo, query = load_running_example()
    g = build_graph(preprocess(repo), query)
    front = solve_optimal(g)
"""
import json
from importlib import resources

from .datasets import QosGenConfig, gen_qos, parse_canonical, parse_icebe, parse_query, parse_wsc, serialize
from .depgraph import build, build_graph, break_cycles, layerize, prune_backward
from .model import (
    AVAILABILITY,
    RELIABILITY,
    RESPONSE_TIME,
    THROUGHPUT,
    Aggregator,
    Comparator,
    Constraint,
    Direction,
    FrontEntry,
    FrontSet,
    InvalidGenotypeError,
    InvalidSolutionError,
    NoFeasibleSolutionError,
    NoSolutionError,
    QosComposeError,
    QosParamSpec,
    Query,
    Relation,
    Repository,
    ResourceLimitError,
    Scope,
    Service,
    SolutionGraph,
    check_constraints,
    compare,
    compose_par,
    compose_seq,
    dominates,
    non_dominated,
    solution_qos,
)
from .preprocess import ClusteredRepository, cluster_equivalent, preprocess, singletons, skyline
from .optimal import solve_optimal
from .beam import BeamConfig, solve_beam
from .nsga import GaConfig, evolve
from .oracle import OracleLimitExceeded, OracleLimits, enumerate_solutions, oracle_front
from .metrics import average_distance_ratio, commonality_nd_ratio, commonality_ratio, compare_fronts, speedup


def load_running_example():
    """The 30-service running example and its query (one local, two global constraints)."""
    data = resources.files(__package__) / "data"
    repo = parse_canonical(json.loads((data / "running_example.json").read_text()))
    query = parse_query(json.loads((data / "running_query.json").read_text()))
    return repo, query



__all__ = [
    "AVAILABILITY",
    "Aggregator",
    "BeamConfig",
    "ClusteredRepository",
    "Comparator",
    "Constraint",
    "Direction",
    "FrontEntry",
    "FrontSet",
    "GaConfig",
    "InvalidGenotypeError",
    "InvalidSolutionError",
    "NoFeasibleSolutionError",
    "NoSolutionError",
    "OracleLimitExceeded",
    "OracleLimits",
    "QosComposeError",
    "QosGenConfig",
    "QosParamSpec",
    "Query",
    "RELIABILITY",
    "RESPONSE_TIME",
    "Relation",
    "Repository",
    "ResourceLimitError",
    "Scope",
    "Service",
    "SolutionGraph",
    "THROUGHPUT",
    "average_distance_ratio",
    "break_cycles",
    "build",
    "build_graph",
    "check_constraints",
    "cluster_equivalent",
    "commonality_nd_ratio",
    "commonality_ratio",
    "compare",
    "compare_fronts",
    "compose_par",
    "compose_seq",
    "dominates",
    "enumerate_solutions",
    "evolve",
    "gen_qos",
    "layerize",
    "load_running_example",
    "non_dominated",
    "oracle_front",
    "parse_canonical",
    "parse_icebe",
    "parse_query",
    "parse_wsc",
    "preprocess",
    "prune_backward",
    "serialize",
    "singletons",
    "skyline",
    "solution_qos",
    "solve_beam",
    "solve_optimal",
    "speedup",
]
