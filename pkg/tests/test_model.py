import math
from functools import reduce

import pytest
from hypothesis import given
from hypothesis import strategies as st

from qoscompose import (
    AVAILABILITY,
    RELIABILITY,
    RESPONSE_TIME,
    THROUGHPUT,
    Aggregator,
    Comparator,
    Constraint,
    Direction,
    QosParamSpec,
    Query,
    Relation,
    Scope,
    Service,
    check_constraints,
    compare,
    compose_par,
    compose_seq,
    dominates,
    non_dominated,
    solution_qos,
)
from qoscompose.model import (
    DimensionError,
    InvalidSolutionError,
    SolutionGraph,
    SolutionNode,
    compose_stages,
    is_activation_valid,
    seq_identity,
    solution_from_services,
    tuples_equal,
)

from conftest import P2, P3, gt, lt

RT, T, R = RESPONSE_TIME, THROUGHPUT, RELIABILITY


def test_presets():
    assert (RT.direction, RT.seq_agg, RT.par_agg) == (Direction.NEGATIVE, Aggregator.SUM, Aggregator.MAX)
    assert (T.direction, T.seq_agg, T.par_agg) == (Direction.POSITIVE, Aggregator.MIN, Aggregator.MIN)
    for p in (R, AVAILABILITY):
        assert (p.direction, p.seq_agg, p.par_agg) == (Direction.POSITIVE, Aggregator.PRODUCT, Aggregator.PRODUCT)


def test_param_spec_coerces_strings():
    p = QosParamSpec("C", "Cost", "negative", "sum", "max")
    assert (p.direction, p.seq_agg, p.par_agg) == (Direction.NEGATIVE, Aggregator.SUM, Aggregator.MAX)
    assert p.monotone and not p.positive


# -- dominance -------------------------------------------------------------------

def test_w3_dominates_w4():
    assert compare((350, 4, 0.97), (475, 3, 0.85), P3) is Relation.DOMINATES
    assert compare((475, 3, 0.85), (350, 4, 0.97), P3) is Relation.DOMINATED_BY


def test_w1_w3_mutually_non_dominated():
    assert compare((500, 7, 0.93), (350, 4, 0.97), P3) is Relation.INCOMPARABLE


def test_equal_with_tolerance():
    t = (1800.0, 5.0, 0.72149958)
    assert compare(t, t, P3) is Relation.EQUAL
    assert compare(t, (1800.0, 5.0, 0.72149958 + 1e-12), P3) is Relation.EQUAL


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        compare((1, 2), (1, 2, 3), P3)
    with pytest.raises(DimensionError):
        compose_seq((1, 2), (1, 2, 3), P3)


def test_table_skyline():
    ts = [(500, 7, 0.93), (600, 13, 0.69), (350, 4, 0.97), (475, 3, 0.85)]
    assert non_dominated(ts, P3) == sorted([(500, 7, 0.93), (600, 13, 0.69), (350, 4, 0.97)])


def test_non_dominated_trivial():
    assert non_dominated([(1, 2, 0.5)], P3) == [(1, 2, 0.5)]
    assert non_dominated([], P3) == []
    assert non_dominated([(1, 2, 0.5), (1, 2, 0.5)], P3) == [(1, 2, 0.5)]


def _pairwise_filter(ts, params):
    uniq = []
    for t in ts:
        if not any(tuples_equal(t, u) for u in uniq):
            uniq.append(tuple(t))
    return sorted(t for t in uniq if not any(dominates(u, t, params) for u in uniq))


small = st.integers(0, 6).map(float)
tuples3 = st.lists(st.tuples(small, small, small), max_size=25)


@given(tuples3)
def test_non_dominated_matches_pairwise_oracle(ts):
    assert non_dominated(ts, P3) == _pairwise_filter(ts, P3)


@given(st.tuples(small, small, small), st.tuples(small, small, small), st.tuples(small, small, small))
def test_dominance_is_strict_partial_order(a, b, c):
    assert not dominates(a, a, P3)
    assert not (dominates(a, b, P3) and dominates(b, a, P3))
    if dominates(a, b, P3) and dominates(b, c, P3):
        assert dominates(a, c, P3)


@given(tuples3)
def test_excluded_tuples_are_dominated(ts):
    kept = non_dominated(ts, P3)
    for t in ts:
        assert any(tuples_equal(t, k) or dominates(k, t, P3) for k in kept)


# -- aggregation -------------------------------------------------------------------

RT_ONLY, T_ONLY, R_ONLY = (RT,), (T,), (R,)


def test_compose_seq_examples():
    assert compose_seq((600,), (1300,), RT_ONLY) == (1900,)
    assert compose_seq((13,), (2,), T_ONLY) == (2,)
    a = (600.0, 13.0, 0.9)
    assert compose_seq(a, seq_identity(P3), P3) == a


def test_compose_par_examples():
    assert compose_par([(400,), (1500,)], RT_ONLY) == (1500,)
    assert compose_par([(0.73,), (0.94,)], R_ONLY)[0] == pytest.approx(0.6862, abs=1e-12)
    assert compose_par([(1, 2, 0.5)], P3) == (1, 2, 0.5)
    with pytest.raises(ValueError):
        compose_par([], P3)


ALL_AGGS = [QosParamSpec(f"p{a.value}", a.value, Direction.NEGATIVE, a, a) for a in Aggregator]
NAIVE = {Aggregator.SUM: lambda xs: sum(xs), Aggregator.PRODUCT: lambda xs: reduce(lambda x, y: x * y, xs, 1.0),
         Aggregator.MIN: min, Aggregator.MAX: max}


@given(st.lists(st.tuples(*[st.floats(0, 1, allow_nan=False)] * 4), min_size=1, max_size=6))
def test_aggregators_match_naive_fold(ts):
    par = compose_par(ts, ALL_AGGS)
    seq = reduce(lambda a, b: compose_seq(a, b, ALL_AGGS), ts, seq_identity(ALL_AGGS))
    for j, p in enumerate(ALL_AGGS):
        want = NAIVE[p.seq_agg]([t[j] for t in ts])
        assert par[j] == pytest.approx(want, rel=1e-12, abs=1e-12)
        assert seq[j] == pytest.approx(want, rel=1e-12, abs=1e-12)


@given(st.tuples(small, small, small), st.tuples(small, small, small), st.tuples(small, small, small))
def test_compose_seq_associative_commutative(a, b, c):
    ab_c = compose_seq(compose_seq(a, b, P3), c, P3)
    a_bc = compose_seq(a, compose_seq(b, c, P3), P3)
    assert tuples_equal(ab_c, a_bc)
    assert tuples_equal(compose_seq(a, b, P3), compose_seq(b, a, P3))


@given(st.tuples(small), st.tuples(small))
def test_min_seq_equals_par(a, b):
    assert compose_seq(a, b, T_ONLY) == compose_par([a, b], T_ONLY)


def test_compose_stages_skips_empty():
    assert compose_stages([[(1, 5, 0.5)], [], [(2, 3, 0.5)]], P3) == (3, 3, 0.25)


# -- constraints -------------------------------------------------------------------

LC1 = gt("R", 0.70, Scope.LOCAL)
GC1, GC2 = gt("R", 0.60), lt("RT", 2500)


def test_check_constraints_examples():
    assert not check_constraints((600, 13, 0.69), [LC1], P3)
    assert check_constraints((1800, 5, 0.7215), [GC1, GC2], P3)
    assert check_constraints((1, 1, 0.1), [], P3)


def test_comparators():
    c = Constraint(Scope.GLOBAL, "RT", Comparator.LE, 10)
    assert c.holds((10, 0, 0), P3) and not c.holds((10.5, 0, 0), P3)
    assert Constraint(Scope.GLOBAL, "T", Comparator.GE, 3).holds((0, 3, 0), P3)
    with pytest.raises(ValueError):
        Constraint(Scope.GLOBAL, "RT", Comparator.LT, math.inf)


def test_early_applicability():
    assert GC2.early_applicable(P3)                 # RT only grows
    assert GC1.early_applicable(P3)                 # R only shrinks
    assert not lt("R", 0.99).early_applicable(P3)   # upper bound on a shrinking value
    avg = QosParamSpec("X", "x", Direction.NEGATIVE, Aggregator.MIN, Aggregator.MIN)
    assert not Constraint(Scope.GLOBAL, "X", Comparator.LT, 5).early_applicable((avg,))


def test_query_validation():
    with pytest.raises(ValueError):
        Query(frozenset({"a"}), frozenset())
    with pytest.raises(ValueError):
        Query(frozenset({"a"}), frozenset({"a", "b"}))
    q = Query(frozenset({"a"}), frozenset({"b"}), (), (lt("Z", 1),))
    with pytest.raises(KeyError):
        q.validate_params(P3)


def test_service_validation():
    with pytest.raises(ValueError):
        Service("S", set(), {"b"}, (1, 1, 1))
    s = Service("S", {"a"}, {"a", "b"}, (1, 1, 1))     # pass-through allowed
    assert "a" in s.outputs


# -- solutions ---------------------------------------------------------------------

def test_example_solution_arithmetic(example_repo, example_query):
    by = {s.id: s for s in example_repo.services}
    s1 = solution_from_services([by[k] for k in ("W2", "W11", "W18", "W20")], example_query)
    s2 = solution_from_services([by[k] for k in ("W1", "W13", "W17", "W21")], example_query)
    a, b = solution_qos(s1, P3), solution_qos(s2, P3)
    assert a[:2] == (3400, 2) and a[2] == pytest.approx(0.30776, abs=1e-6)
    assert b[:2] == (1800, 5) and b[2] == pytest.approx(0.7215, abs=1e-6)
    assert is_activation_valid(s1, example_query) and is_activation_valid(s2, example_query)
    assert [[n.id for n in st] for st in s1.stages()] == [["W2"], ["W11"], ["W18", "W20"]]


def test_single_service_solution():
    s = solution_from_services([Service("S", {"a"}, {"b"}, (5, 6, 0.5))])
    assert solution_qos(s, P3) == (5, 6, 0.5)


def test_cyclic_solution_rejected():
    n = lambda k, i, o: SolutionNode(k, k, frozenset(i), frozenset(o), (1.0, 1.0), 0, None)
    s = SolutionGraph((n("A", "x", "y"), n("B", "y", "x")), (("A", "B", frozenset("y")), ("B", "A", frozenset("x"))))
    with pytest.raises(InvalidSolutionError):
        solution_qos(s, P2)
    assert not is_activation_valid(s, Query(frozenset({"q"}), frozenset({"x"})))


def test_activation_replay_detects_missing_input():
    s = solution_from_services([Service("A", {"x"}, {"y"}, (1, 1)), Service("B", {"y", "z"}, {"out"}, (1, 1))])
    assert not is_activation_valid(s, Query(frozenset({"x"}), frozenset({"out"})))
    assert is_activation_valid(s, Query(frozenset({"x", "z"}), frozenset({"out"})))
