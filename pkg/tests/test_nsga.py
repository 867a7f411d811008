import math
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qoscompose import GaConfig, build_graph, evolve, non_dominated, preprocess, solve_optimal
from qoscompose.model import (
    InvalidGenotypeError,
    NoFeasibleSolutionError,
    NoSolutionError,
    check_constraints,
    dominates,
    is_activation_valid,
    solution_qos,
    tuples_equal,
)
from qoscompose.nsga import (
    Chromosome,
    GenomeSpace,
    crossover,
    crowding_distance,
    decode,
    evaluate,
    fitness_rank,
    is_valid,
    mutate,
    nondominated_levels,
    random_chromosome,
)
from qoscompose.synthetic import random_instance

from conftest import P2, P3, query_of, repo_of


def chrom(space, ids, choice=None):
    mask = sum(1 << space.index[k] for k in ids)
    ch = [0] * space.n
    for k, t in (choice or {}).items():
        ch[space.index[k]] = t
    return Chromosome(mask, tuple(ch))


def names(space, c):
    return sorted(space.ids[i] for i in space.members(c.mask))


@pytest.fixture(scope="module")
def fork():
    """Two providers for x, one shared middle node, two producers of b."""
    repo = repo_of([("P1", "a", "x", (10, 5)), ("P2", "a2", "x", (20, 9)), ("M", "x", "y", (5, 7)),
                    ("D1", "y", "b", (3, 4)), ("D2", "y a", "b", (8, 8))], P2)
    g = build_graph(preprocess(repo), query_of("a a2", "b"))
    return GenomeSpace(g)


@pytest.fixture(scope="module")
def example_space(example_graph):
    return GenomeSpace(example_graph)


# -- ranking ----------------------------------------------------------------

def test_levels_hand_example():
    info = fitness_rank([(100, 10), (200, 20), (150, 5)], [0, 0, 0], P2)
    assert [f.level for f in info] == [0, 0, 1]


def test_population_of_one():
    (f,) = fitness_rank([(1, 2)], [0], P2)
    assert (f.level, f.distance, f.rank) == (0, math.inf, 1)


def test_crowding_on_a_line():
    d = crowding_distance(np.array([[0.0, 2.0], [1.0, 1.0], [2.0, 0.0]]))
    assert d[0] == d[2] == math.inf
    assert d[1] == pytest.approx(2.0)


def test_infeasible_ranked_last():
    info = fitness_rank([(1, 100), (500, 1), (600, 1)], [0.5, 0, 0.1], P2)
    assert [f.level for f in info] == [2, 0, 1]
    assert [f.rank for f in info] == [3, 1, 2]


def test_equal_level_prefers_larger_distance():
    objs = [(0, 0), (1, 3), (2, 5), (3, 6), (4, 10)]
    info = fitness_rank(objs, [0] * 5, P2)
    assert all(f.level == 0 for f in info)
    by_rank = sorted(info, key=lambda f: f.rank)
    assert [f.distance for f in by_rank] == sorted((f.distance for f in info), reverse=True)


def _pairwise_levels(F):
    remaining, level, k = set(range(len(F))), [None] * len(F), 0
    while remaining:
        front = [i for i in remaining
                 if not any(all(F[j] <= F[i]) and any(F[j] < F[i]) for j in remaining if j != i)]
        for i in front:
            level[i] = k
        remaining -= set(front)
        k += 1
    return level


@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=30))
def test_levels_match_pairwise_oracle(rows):
    F = np.array(rows, dtype=float)
    assert nondominated_levels(F).tolist() == _pairwise_levels(F)


# -- operators --------------------------------------------------------------

def test_all_zero_mask_rejected(fork):
    z = Chromosome(0, (0,) * fork.n)
    assert not is_valid(z, fork)
    with pytest.raises(InvalidGenotypeError):
        decode(z, fork)


def test_missing_provider_rejected(fork):
    c = chrom(fork, ["M", "D1"])
    assert not is_valid(c, fork)
    with pytest.raises(InvalidGenotypeError):
        evaluate(c, fork, P2, ())


def test_unique_provider_chromosome():
    repo = repo_of([("A", "a", "m", (1, 1)), ("B", "m", "b", (1, 1))], P2)
    space = GenomeSpace(build_graph(preprocess(repo), query_of("a", "b")))
    for seed in range(5):
        assert names(space, random_chromosome(space, random.Random(seed))) == ["A", "B"]


def test_example_random_chromosome_reproducible(example_space, example_query):
    a = random_chromosome(example_space, random.Random(7))
    b = random_chromosome(example_space, random.Random(7))
    print("seed 7:", names(example_space, a), a.choice)
    assert a == b
    assert is_activation_valid(decode(a, example_space), example_query)


def test_example_hand_chromosome(example_space, example_query):
    # providers for o12/o13 chosen as W1 -> W13 -> {W17, W21}
    src = {k: [s for _, s in example_space.tuples[example_space.index[k]]] for k in ("W1", "W11")}
    c = chrom(example_space, ["W1", "W11", "W17", "W20"], {"W1": src["W1"].index("W1"), "W11": src["W11"].index("W13")})
    sol = decode(c, example_space)
    assert is_activation_valid(sol, example_query)
    assert [n.service for n in sol.nodes] == ["W1", "W13", "W17", "W21"]
    qos, viol = evaluate(c, example_space, P3, example_query.globals)
    assert qos[:2] == (1800, 5) and qos[2] == pytest.approx(0.7215, abs=1e-5)
    assert viol == 0 and tuples_equal(qos, solution_qos(sol, P3))


def test_crossover_swaps_upstream(fork):
    c1 = chrom(fork, ["P1", "M", "D1"])
    c2 = chrom(fork, ["P2", "M", "D2"])
    c3, c4 = crossover(c1, c2, fork, random.Random(0))
    assert names(fork, c3) == ["D1", "M", "P2"]
    assert names(fork, c4) == ["D2", "M", "P1"]
    assert is_valid(c3, fork) and is_valid(c4, fork)


def test_crossover_identical_parents(fork):
    c = chrom(fork, ["P1", "M", "D1"])
    assert crossover(c, c, fork, random.Random(3)) == (c, c)


def test_crossover_without_common_node():
    repo = repo_of([("A", "a", "b", (1, 1)), ("B", "a2", "b", (2, 2))], P2)
    space = GenomeSpace(build_graph(preprocess(repo), query_of("a a2", "b")))
    a, b = chrom(space, ["A"]), chrom(space, ["B"])
    assert crossover(a, b, space, random.Random(0)) == (a, b)


def test_mutation_zero_is_identity(fork):
    c = chrom(fork, ["P1", "M", "D1"])
    for seed in range(5):
        assert mutate(c, fork, 0.0, random.Random(seed)) == c


def test_mutation_one_flips_every_choice(fork):
    c = chrom(fork, ["P1", "M", "D1"])
    assert names(fork, mutate(c, fork, 1.0, random.Random(0))) == ["D2", "M", "P2"]


def test_mutation_flips_tuple_choice():
    # A carries two skyline tuples and is the only provider, so only its tuple gene can move
    repo = repo_of([("A", "a", "m", (1, 1)), ("A2", "a", "m", (5, 9)), ("B", "m", "b", (1, 1))], P2)
    space = GenomeSpace(build_graph(preprocess(repo), query_of("a", "b")))
    c = chrom(space, ["A", "B"], {"A": 0})
    out = mutate(c, space, 1.0, random.Random(0))
    assert out.mask == c.mask and out.choice[space.index["A"]] == 1
    assert mutate(out, space, 1.0, random.Random(0)) == c


@pytest.mark.parametrize("seed", range(30))
def test_operators_stay_valid(seed):
    repo, q = random_instance(seed)
    try:
        space = GenomeSpace(build_graph(preprocess(repo), q))
    except (NoSolutionError, NoFeasibleSolutionError):
        return
    rng = random.Random(seed)
    pop = [random_chromosome(space, rng) for _ in range(12)]
    for _ in range(40):
        a, b = rng.sample(pop, 2) if len(pop) > 1 else (pop[0], pop[0])
        c, d = crossover(a, b, space, rng)
        pop += [mutate(c, space, rng.random(), rng), mutate(d, space, 0.3, rng)]
    for c in pop:
        assert is_valid(c, space)
        assert is_activation_valid(decode(c, space), q)


# -- evolution --------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        GaConfig(population=1)
    with pytest.raises(ValueError):
        GaConfig(mutation_prob=1.5)
    with pytest.raises(ValueError):
        GaConfig(iterations=-1)
    d = GaConfig()
    assert (d.population, d.iterations, d.crossover_prob, d.mutation_prob) == (100, 10_000, 0.85, 0.01)


def test_zero_iterations_returns_initial_front(example_graph, example_query):
    cfg = GaConfig(population=20, iterations=0, seed=5)
    got = sorted(evolve(example_graph, cfg=cfg).tuples)
    space, rng = GenomeSpace(example_graph), random.Random(5)
    init = [evaluate(random_chromosome(space, rng), space, P3, example_query.globals) for _ in range(20)]
    want = non_dominated([q for q, v in init if v == 0], P3)
    assert len(got) == len(want) and all(any(tuples_equal(a, b) for b in want) for a in got)


def test_example_run_is_sound(example_graph, example_query):
    opt = solve_optimal(example_graph).tuples
    front = evolve(example_graph, cfg=GaConfig(population=30, iterations=60, seed=1))
    print("nsga:", front.tuples)
    for e in front:
        assert check_constraints(e.qos, example_query.globals, P3)
        assert is_activation_valid(e.solution, example_query)
        assert any(tuples_equal(e.qos, o, 1e-9) or dominates(o, e.qos, P3) for o in opt)


@pytest.mark.parametrize("seed", range(12))
def test_small_instances_weakly_dominated_by_optimal(seed):
    repo, q = random_instance(seed, max_services=10)
    try:
        g = build_graph(preprocess(repo), q)
        opt = solve_optimal(g).tuples
        got = evolve(g, cfg=GaConfig(population=16, iterations=25, seed=seed)).tuples
    except (NoSolutionError, NoFeasibleSolutionError):
        return
    for t in got:
        assert any(tuples_equal(t, o, 1e-9) or dominates(o, t, g.params) for o in opt)
    assert all(not dominates(b, a, g.params) for a in got for b in got)


def _dump(front):
    return [(e.qos, e.solution) for e in front]


def test_fixed_seed_deterministic(example_graph):
    cfg = GaConfig(population=20, iterations=30, seed=11)
    assert _dump(evolve(example_graph, cfg=cfg)) == _dump(evolve(example_graph, cfg=cfg))


def test_workers_do_not_change_result(example_graph):
    one = evolve(example_graph, cfg=GaConfig(population=24, iterations=15, seed=3, workers=1))
    four = evolve(example_graph, cfg=GaConfig(population=24, iterations=15, seed=3, workers=4))
    assert _dump(one) == _dump(four)


def test_elitism(example_graph):
    log = []

    def watch(gen, pop, info):
        feas = [f for f in info if check_constraints(f.objectives, example_graph.query.globals, P3)]
        log.append(([f.objectives for f in feas if f.level == 0], len(feas)))

    evolve(example_graph, cfg=GaConfig(population=20, iterations=40, seed=2), on_generation=watch)
    for (prev, nprev), (cur, ncur) in zip(log, log[1:]):
        assert ncur >= nprev
        for t in prev:
            assert any(tuples_equal(t, u) or dominates(u, t, P3) for u in cur)
