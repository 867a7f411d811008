import pytest

from qoscompose.model import NoFeasibleSolutionError, NoSolutionError, tuples_equal

from qoscompose import (
    RELIABILITY,
    RESPONSE_TIME,
    THROUGHPUT,
    Comparator,
    Constraint,
    Query,
    Repository,
    Scope,
    Service,
    build_graph,
    load_running_example,
    preprocess,
)

P3 = (RESPONSE_TIME, THROUGHPUT, RELIABILITY)
P2 = (RESPONSE_TIME, THROUGHPUT)


def repo_of(rows, params=P3) -> Repository:
    """rows: (id, inputs, outputs, qos) with inputs/outputs as space-separated names."""
    return Repository(params, tuple(Service(i, set(a.split()), set(b.split()), q) for i, a, b, q in rows))


def query_of(inputs: str, outputs: str, locals_=(), globals_=()) -> Query:
    return Query(frozenset(inputs.split()), frozenset(outputs.split()), tuple(locals_), tuple(globals_))


def lt(pid, v, scope=Scope.GLOBAL):
    return Constraint(scope, pid, Comparator.LT, v)


def gt(pid, v, scope=Scope.GLOBAL):
    return Constraint(scope, pid, Comparator.GT, v)


@pytest.fixture(scope="session")
def example():
    return load_running_example()


@pytest.fixture(scope="session")
def example_repo(example):
    return example[0]


@pytest.fixture(scope="session")
def example_query(example):
    return example[1]


@pytest.fixture(scope="session")
def example_graph(example):
    repo, q = example
    return build_graph(preprocess(repo), q)


def optimal_or_empty(repo, q, **kw) -> list:
    """Optimal front tuples on the preprocessed repo; [] when nothing is feasible."""
    from qoscompose import solve_optimal
    try:
        return solve_optimal(build_graph(preprocess(repo), q), **kw).tuples
    except (NoSolutionError, NoFeasibleSolutionError):
        return []


def same_fronts(a, b, tol=1e-9) -> bool:
    return len(a) == len(b) and all(any(tuples_equal(t, u, tol) for u in b) for t in a)
