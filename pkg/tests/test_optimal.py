import itertools
import random

import pytest

from qoscompose import build_graph, non_dominated, oracle_front, preprocess, solve_optimal
from qoscompose.depgraph import END
from qoscompose.model import (
    NoFeasibleSolutionError,
    NoSolutionError,
    ResourceLimitError,
    SolutionGraph,
    SolutionNode,
    check_constraints,
    compose_seq,
    is_activation_valid,
    solution_qos,
    tuples_equal,
)
from qoscompose.optimal import CumEntry, extend_front, induced_solution, node_tuples, predecessor_combinations
from qoscompose.synthetic import random_instance

from conftest import P2, P3, lt, optimal_or_empty, query_of, repo_of, same_fronts

EXAMPLE_FRONT = [(1650.0, 4.0, 0.75253182), (1800.0, 5.0, 0.72149958)]


def test_shared_provider_combination(example_graph):
    # both members need names that only W11 (and W15 for one of them) supply
    combos = predecessor_combinations(["W17", "W20"], example_graph)
    assert combos == [frozenset({"W11"})]


def test_end_has_four_combinations(example_graph):
    combos = predecessor_combinations([END], example_graph)
    print([sorted(c) for c in combos])
    assert len(combos) == 4


def test_single_provider_combination():
    repo = repo_of([("A", "a", "m", (1, 1)), ("B", "m", "b", (1, 1))], P2)
    g = build_graph(preprocess(repo), query_of("a", "b"))
    assert predecessor_combinations(["B"], g) == [frozenset({"A"})]


def test_parallel_node_tuples(example_graph):
    nt = node_tuples(["W17", "W20"], example_graph, (), P3)
    assert len(nt) == 1
    qos, choice = nt[0]
    assert qos[:2] == (900, 5) and qos[2] == pytest.approx(0.8342, abs=1e-12)
    assert [m for m, _ in choice] == ["W17", "W20"]


def test_node_tuples_single():
    repo = repo_of([("A", "a", "b", (4, 2))], P2)
    g = build_graph(preprocess(repo), query_of("a", "b"))
    assert node_tuples(["A"], g, (), P2) == [((4, 2), (("A", 0),))]


def test_node_tuples_empty_under_global():
    repo = repo_of([("A", "a", "x", (1500, 2)), ("B", "a", "y", (1200, 2)), ("C", "x y", "b", (100, 1))], P2)
    g = build_graph(preprocess(repo), query_of("a", "b"))
    gc2 = (lt("RT", 1400),)
    assert node_tuples(["A", "B"], g, gc2, P2) == []
    assert len(node_tuples(["A", "B"], g, (), P2)) == 1


def _brute_extend(cp_succ, nt, existing, globals_, params):
    fresh = [compose_seq(q, s.qos, params) for q, _ in nt for s in cp_succ]
    fresh = [t for t in fresh if check_constraints(t, [c for c in globals_ if c.early_applicable(params)], params)]
    return non_dominated([e.qos for e in existing] + fresh, params)


@pytest.mark.parametrize("seed", range(25))
def test_extend_front_matches_brute_force(seed):
    rng = random.Random(seed)
    tup = lambda: (float(rng.randint(1, 9)), float(rng.randint(1, 9)))
    succ = [CumEntry(tup(), None, (), 0) for _ in range(rng.randint(1, 4))]
    nt = [(tup(), (("X", i),)) for i in range(rng.randint(1, 4))]
    existing = [CumEntry(tup(), None, (), 2) for _ in range(rng.randint(0, 3))]
    existing = [e for e in existing if e.qos in non_dominated([x.qos for x in existing], P2)]
    gs = (lt("RT", rng.randint(6, 14)),) if seed % 2 else ()
    got = sorted(e.qos for e in extend_front(succ, nt, existing, gs, P2))
    assert got == _brute_extend(succ, nt, existing, gs, P2)


def test_extend_front_identity_successor():
    ident = CumEntry((0.0, float("inf")), None, (), 0)
    nt = [((3.0, 4.0), ()), ((5.0, 9.0), ())]
    assert sorted(e.qos for e in extend_front([ident], nt, [], (), P2)) == [(3.0, 4.0), (5.0, 9.0)]
    assert [e.qos for e in extend_front([ident], nt, [], (lt("RT", 4),), P2)] == [(3.0, 4.0)]


def test_extend_front_prefers_fewer_services():
    succ = [CumEntry((1.0, 5.0), None, (), 0)]
    old = CumEntry((2.0, 5.0), succ[0], (("A", 0), ("B", 0)), 2)
    out = extend_front(succ, [((1.0, 9.0), (("C", 0),))], [old], (), P2)
    assert [e.choice for e in out] == [(("C", 0),)]


def test_running_example_front(example, example_graph):
    repo, q = example
    front = solve_optimal(example_graph)
    got = sorted(front.tuples)
    print("front:", got, front.stats)
    assert len(got) == 2
    for t, w in zip(got, EXAMPLE_FRONT):
        assert tuples_equal(t, w, 1e-6)
    assert same_fronts(got, oracle_front(repo, q).tuples)


def test_running_example_solutions_decode(example_graph, example_query):
    for e in solve_optimal(example_graph):
        assert is_activation_valid(e.solution, example_query)
        assert tuples_equal(solution_qos(e.solution, P3), e.qos, 1e-9)
        assert check_constraints(e.qos, example_query.globals, P3)
        assert all(n.service.startswith("W") for n in e.solution.nodes)


def test_single_path():
    repo = repo_of([("A", "a", "m", (10, 5)), ("A2", "a", "m", (5, 3)), ("B", "m", "b", (7, 4))], P2)
    got = sorted(solve_optimal(build_graph(preprocess(repo), query_of("a", "b"))).tuples)
    assert got == [(12.0, 3.0), (17.0, 4.0)]


def test_no_feasible():
    repo = repo_of([("A", "a", "m", (2000, 5)), ("B", "m", "b", (1000, 4))], P2)
    g = build_graph(preprocess(repo), query_of("a", "b", globals_=[lt("RT", 2500)]))
    with pytest.raises(NoFeasibleSolutionError):
        solve_optimal(g)


def test_infeasible_branch_disregarded():
    # the A->B chain breaks RT < 2500 only once composed; C alone is fine
    repo = repo_of([("A", "a", "m", (2000, 5)), ("B", "m", "b", (1000, 9)), ("C", "a", "b", (100, 1))], P2)
    g = build_graph(preprocess(repo), query_of("a", "b", globals_=[lt("RT", 2500)]))
    for look in (True, False):
        front = solve_optimal(g, lookahead=look)
        assert front.tuples == [(100.0, 1.0)]
        assert [n.id for n in front.entries[0].solution.nodes] == ["C"]


def test_resource_limit(example_graph):
    with pytest.raises(ResourceLimitError):
        solve_optimal(example_graph, max_lpg_nodes=2)


@pytest.mark.parametrize("seed", range(60))
def test_matches_oracle(seed):
    repo, q = random_instance(seed)
    want = oracle_front(repo, q).tuples
    got = optimal_or_empty(repo, q)
    assert same_fronts(got, want), (got, want)


@pytest.mark.parametrize("seed", range(30))
def test_lookahead_does_not_change_front(seed):
    repo, q = random_instance(1000 + seed)
    assert same_fronts(optimal_or_empty(repo, q), optimal_or_empty(repo, q, lookahead=False))


def _drop(sol: SolutionGraph, k: str) -> SolutionGraph:
    return SolutionGraph(tuple(n for n in sol.nodes if n.id != k),
                         tuple(e for e in sol.edges if k not in e[:2]))


def _weakly_dominates(a, b, params):
    return all((x >= y) if p.positive else (x <= y) for x, y, p in zip(a, b, params))


@pytest.mark.parametrize("seed", range(40))
def test_no_redundant_services(seed):
    repo, q = random_instance(seed)
    try:
        front = solve_optimal(build_graph(preprocess(repo), q))
    except (NoSolutionError, NoFeasibleSolutionError):
        return
    for e in front:
        for n in e.solution.nodes:
            rest = _drop(e.solution, n.id)
            if rest.nodes and is_activation_valid(rest, q):
                assert not _weakly_dominates(solution_qos(rest, repo.params), e.qos, repo.params)


@pytest.mark.parametrize("seed", range(20))
def test_random_lpg_paths_are_valid(seed):
    # walk random predecessor combinations from End back to Start
    repo, q = random_instance(seed)
    try:
        g = build_graph(preprocess(repo), q)
    except (NoSolutionError, NoFeasibleSolutionError):
        return
    rng = random.Random(seed)
    for _ in range(5):
        level, chosen = [END], set()
        for _layer in range(g.end_layer - 1, 0, -1):
            combos = predecessor_combinations(level, g)
            assert combos
            pick = rng.choice(combos)
            chosen |= {m for m in pick if g.nodes[m].is_real}
            level = sorted(pick)
        nodes = [SolutionNode(m, g.nodes[m].tuples[0][1], g.nodes[m].inputs, g.nodes[m].outputs,
                              g.nodes[m].tuples[0][0], 0, g.nodes[m].layer) for m in sorted(chosen)]
        assert is_activation_valid(induced_solution(nodes, g), q)


def test_front_is_canonical(example_graph):
    a = solve_optimal(example_graph)
    b = solve_optimal(example_graph)
    assert [(e.qos, e.solution) for e in a] == [(e.qos, e.solution) for e in b]


def test_brute_force_pairs_small():
    # tiny two-stage instance where every service pairing is enumerable by hand
    rows = [("A1", "a", "m", (1, 9)), ("A2", "a", "m", (3, 4)), ("B1", "m", "b", (2, 5)), ("B2", "m", "b", (1, 2))]
    repo = repo_of(rows, P2)
    want = non_dominated([compose_seq(x[3], y[3], P2) for x, y in itertools.product(rows[:2], rows[2:])], P2)
    got = sorted(solve_optimal(build_graph(preprocess(repo), query_of("a", "b"))).tuples)
    assert got == want
