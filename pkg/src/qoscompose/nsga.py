"""NSGA-style evolutionary search over dependency-graph subgraphs.

A chromosome marks which real graph nodes are in the solution (a bitmask)
plus which skyline tuple each chosen node uses.  Every operator rebuilds
chromosomes backward from End, choosing providers only among real
predecessors, so offspring are activation-valid by construction.
"""
from __future__ import annotations

import logging
import math
import random
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .depgraph import DependencyGraph
from .model import (
    FrontEntry,
    FrontSet,
    InvalidGenotypeError,
    NoFeasibleSolutionError,
    ParamSet,
    SolutionGraph,
    SolutionNode,
    check_constraints,
    compose_stages,
    make_front,
    param_index,
)
from .preprocess import natural_key

log = logging.getLogger(__name__)

END_IX = -1


@dataclass(frozen=True)
class GaConfig:
    population: int = 100
    iterations: int = 10_000
    crossover_prob: float = 0.85
    mutation_prob: float = 0.01
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be at least 2")
        if not (0 <= self.crossover_prob <= 1 and 0 <= self.mutation_prob <= 1):
            raise ValueError("probabilities must lie in [0, 1]")
        if self.iterations < 0 or self.workers < 1:
            raise ValueError("iterations must be >= 0 and workers >= 1")


@dataclass(frozen=True)
class Chromosome:
    mask: int        # bit i set when real node i is in the solution
    choice: tuple    # tuple index per node (0 where the bit is clear)

    @property
    def key(self) -> tuple:
        return (self.mask, self.choice)

    def bits(self, n: int) -> tuple:
        return tuple((self.mask >> i) & 1 for i in range(n))


@dataclass(frozen=True)
class FitnessInfo:
    objectives: tuple
    level: int
    distance: float
    rank: int


class GenomeSpace:
    """Index of the real nodes of a graph and their provider relations."""

    def __init__(self, g: DependencyGraph):
        self.g = g
        self.ids = g.real_nodes()
        self.index = {k: i for i, k in enumerate(self.ids)}
        self.n = len(self.ids)
        self.layer = [g.nodes[k].layer for k in self.ids]
        self.tuples = [g.nodes[k].tuples for k in self.ids]
        self.ntuples = [len(t) for t in self.tuples]
        provs: dict[tuple[int, str], list[int]] = {}
        for (u, v), names in g.structure.items():
            if u in self.index and v in self.index:
                for name in names:
                    provs.setdefault((self.index[v], name), []).append(self.index[u])
        self.reqs = []
        for i, k in enumerate(self.ids):
            rs = []
            for name in sorted(g.required(k)):
                ps = tuple(sorted(provs.get((i, name), ())))
                if not ps:
                    raise InvalidGenotypeError(f"{k} has no provider for {name}")
                rs.append((name, ps, _mask(ps)))
            self.reqs.append(tuple(rs))
        ends = []
        for name in sorted(g.query.outputs):
            ps = tuple(i for i, k in enumerate(self.ids) if name in g.nodes[k].outputs)
            ends.append((name, ps, _mask(ps)))
        self.end_reqs = tuple(ends)

    def requirements(self, x: int):
        return self.end_reqs if x == END_IX else self.reqs[x]

    def members(self, mask: int) -> list[int]:
        return [i for i in range(self.n) if (mask >> i) & 1]


def _mask(ixs) -> int:
    m = 0
    for i in ixs:
        m |= 1 << i
    return m


def _pick_tuple(space: GenomeSpace, i: int, rng: random.Random) -> int:
    return rng.randrange(space.ntuples[i]) if space.ntuples[i] > 1 else 0


def random_chromosome(space: GenomeSpace, rng: random.Random) -> Chromosome:
    mask, choice = 0, [0] * space.n
    queue = deque([END_IX])
    while queue:
        x = queue.popleft()
        for _, ps, _ in space.requirements(x):
            p = ps[rng.randrange(len(ps))] if len(ps) > 1 else ps[0]
            if not (mask >> p) & 1:
                mask |= 1 << p
                choice[p] = _pick_tuple(space, p, rng)
                queue.append(p)
    return Chromosome(mask, tuple(choice))


def is_valid(c: Chromosome, space: GenomeSpace) -> bool:
    if not c.mask or c.mask >> space.n:
        return False
    for x in [END_IX] + space.members(c.mask):
        for _, _, pm in space.requirements(x):
            if not pm & c.mask:
                return False
    return all(0 <= c.choice[i] < space.ntuples[i] for i in space.members(c.mask))


def decode(c: Chromosome, space: GenomeSpace) -> SolutionGraph:
    if not is_valid(c, space):
        raise InvalidGenotypeError(f"chromosome {c.bits(space.n)} is not activation-valid")
    nodes = []
    for i in sorted(space.members(c.mask), key=lambda i: (space.layer[i], natural_key(space.ids[i]))):
        k = space.ids[i]
        n = space.g.nodes[k]
        qos, src = space.tuples[i][c.choice[i]]
        nodes.append(SolutionNode(k, src, n.inputs, n.outputs, tuple(qos), c.choice[i], n.layer))
    chosen = {n.id for n in nodes}
    edges = tuple((u, v, names) for (u, v), names in sorted(space.g.structure.items())
                  if u in chosen and v in chosen)
    return SolutionGraph(tuple(nodes), edges)


def _closure(c: Chromosome, space: GenomeSpace, start: int, stop: int | None = None) -> int:
    """Nodes of ``c`` reached backward from ``start`` through providers in ``c``."""
    seen = 0 if start == END_IX else 1 << start
    queue = deque([start])
    while queue:
        x = queue.popleft()
        if x == stop:
            continue
        for _, _, pm in space.requirements(x):
            hit = pm & c.mask & ~seen
            while hit:
                low = hit & -hit
                p = low.bit_length() - 1
                seen |= low
                hit ^= low
                queue.append(p)
    return seen


def _swap_upstream(a: Chromosome, b: Chromosome, v: int, space: GenomeSpace) -> Chromosome:
    keep = _closure(a, space, END_IX, stop=v)
    upstream = _closure(b, space, v)
    mask = keep | upstream
    choice = [0] * space.n
    for i in space.members(mask):
        from_b = i == v or not (keep >> i) & 1
        choice[i] = (b if from_b else a).choice[i]
    return Chromosome(mask, tuple(choice))


def crossover(c1: Chromosome, c2: Chromosome, space: GenomeSpace, rng: random.Random):
    """Swap everything upstream of a randomly chosen common node."""
    common = space.members(c1.mask & c2.mask)
    if not common:
        log.debug("crossover skipped: parents share no node")
        return c1, c2
    v = common[rng.randrange(len(common))]
    return _swap_upstream(c1, c2, v, space), _swap_upstream(c2, c1, v, space)


def mutate(c: Chromosome, space: GenomeSpace, p_m: float, rng: random.Random) -> Chromosome:
    mask, choice = 0, [0] * space.n
    queue = deque([END_IX])
    while queue:
        x = queue.popleft()
        in_parent = x == END_IX or (c.mask >> x) & 1
        for _, ps, pm in space.requirements(x):
            if len(ps) == 1:
                picks = ps
            else:
                had = [p for p in ps if (c.mask >> p) & 1] if in_parent else []
                if had:
                    if rng.random() < p_m:
                        others = [p for p in ps if not (c.mask >> p) & 1]
                        picks = (others[rng.randrange(len(others))],) if others else had
                    else:
                        picks = had
                else:
                    picks = (ps[rng.randrange(len(ps))],)
            for p in picks:
                if (mask >> p) & 1:
                    continue
                mask |= 1 << p
                queue.append(p)
                if (c.mask >> p) & 1:
                    t = c.choice[p]
                    if space.ntuples[p] > 1 and rng.random() < p_m:
                        t = rng.choice([j for j in range(space.ntuples[p]) if j != t])
                    choice[p] = t
                else:
                    choice[p] = _pick_tuple(space, p, rng)
    return Chromosome(mask, tuple(choice))


# -- evaluation and ranking ----------------------------------------------------

def evaluate(c: Chromosome, space: GenomeSpace, params: ParamSet, globals_) -> tuple:
    """(qos, total relative violation of the global constraints)."""
    if not is_valid(c, space):
        raise InvalidGenotypeError(f"chromosome {c.bits(space.n)} is not activation-valid")
    stages: dict[int, list] = {}
    for i in space.members(c.mask):
        stages.setdefault(space.layer[i], []).append(space.tuples[i][c.choice[i]][0])
    qos = compose_stages([stages[k] for k in sorted(stages)], params)
    viol = 0.0
    for con in globals_:
        if not con.holds(qos, params):
            v = qos[param_index(params, con.param_id)]
            viol += abs(v - con.threshold) / max(abs(con.threshold), 1e-12) + 1e-12
    return qos, viol


def _min_form(objs, params: ParamSet) -> np.ndarray:
    F = np.asarray(objs, dtype=float).reshape(len(objs), len(params))
    sign = np.array([-1.0 if p.positive else 1.0 for p in params])
    return F * sign


def nondominated_levels(F: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Front index per row of a minimisation objective matrix."""
    n = F.shape[0]
    if n == 0:
        return np.zeros(0, dtype=int)
    le = (F[:, None, :] <= F[None, :, :] + tol).all(axis=2)
    lt = (F[:, None, :] < F[None, :, :] - tol).any(axis=2)
    dom = le & lt                      # dom[i, j]: i dominates j
    count = dom.sum(axis=0)
    level = np.full(n, -1, dtype=int)
    current = np.flatnonzero(count == 0)
    k = 0
    while current.size:
        level[current] = k
        count = count - dom[current].sum(axis=0)
        count[level >= 0] = -1
        current = np.flatnonzero(count == 0)
        k += 1
    return level


def crowding_distance(F: np.ndarray) -> np.ndarray:
    n, m = F.shape
    d = np.zeros(n)
    if n <= 2:
        d[:] = math.inf
        return d
    for j in range(m):
        order = np.argsort(F[:, j], kind="stable")
        col = F[order, j]
        span = col[-1] - col[0]
        d[order[0]] = d[order[-1]] = math.inf
        if span > 0:
            d[order[1:-1]] += (col[2:] - col[:-2]) / span
    return d


def fitness_rank(objectives, violations, params: ParamSet, keys=None) -> list[FitnessInfo]:
    """Constrained non-dominated sorting with crowding distance.

    Feasible individuals are sorted by dominance; infeasible ones follow, one
    level per distinct violation amount, least violated first.
    """
    n = len(objectives)
    keys = keys if keys is not None else list(range(n))
    viol = np.asarray(violations, dtype=float)
    F = _min_form(objectives, params)
    level = np.zeros(n, dtype=int)
    feas = np.flatnonzero(viol == 0)
    infeas = np.flatnonzero(viol > 0)
    top = 0
    if feas.size:
        uniq, inverse = np.unique(F[feas], axis=0, return_inverse=True)
        level[feas] = nondominated_levels(uniq)[inverse.reshape(-1)]
        top = int(level[feas].max()) + 1
    if infeas.size:
        distinct = np.unique(viol[infeas])
        level[infeas] = top + np.searchsorted(distinct, viol[infeas])
    dist = np.zeros(n)
    for lv in np.unique(level):
        idx = np.flatnonzero(level == lv)
        dist[idx] = crowding_distance(F[idx])
    order = sorted(range(n), key=lambda i: (level[i], -dist[i], keys[i]))
    rank = [0] * n
    for r, i in enumerate(order, 1):
        rank[i] = r
    return [FitnessInfo(tuple(objectives[i]), int(level[i]), float(dist[i]), rank[i]) for i in range(n)]


_WORKER_STATE: dict = {}


def _init_worker(space, params, globals_):
    _WORKER_STATE["args"] = (space, params, globals_)


def _eval_chunk(chunk):
    space, params, globals_ = _WORKER_STATE["args"]
    return [evaluate(c, space, params, globals_) for c in chunk]


class _Evaluator:
    def __init__(self, space, params, globals_, workers: int):
        self.space, self.params, self.globals = space, params, globals_
        self.cache: dict = {}
        self.pool = None
        if workers > 1:
            self.pool = ProcessPoolExecutor(workers, initializer=_init_worker,
                                            initargs=(space, params, globals_))
        self.workers = workers

    def __call__(self, pop: list[Chromosome]) -> list[tuple]:
        fresh = list(dict.fromkeys(c.key for c in pop if c.key not in self.cache))
        if fresh:
            items = [Chromosome(*k) for k in fresh]
            if self.pool is not None and len(items) >= 2 * self.workers:
                size = -(-len(items) // self.workers)
                chunks = [items[i:i + size] for i in range(0, len(items), size)]
                results = [r for part in self.pool.map(_eval_chunk, chunks) for r in part]
            else:
                results = [evaluate(c, self.space, self.params, self.globals) for c in items]
            self.cache.update(zip(fresh, results))
        return [self.cache[c.key] for c in pop]

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()


def _rank_population(pop, evaluator, params):
    res = evaluator(pop)
    return fitness_rank([r[0] for r in res], [r[1] for r in res], params, [c.key for c in pop])


def evolve(g: DependencyGraph, q=None, params: ParamSet | None = None, cfg: GaConfig = GaConfig(),
           rng: random.Random | None = None, on_generation=None) -> FrontSet:
    q = q or g.query
    params = tuple(params or g.params)
    rng = rng or random.Random(cfg.seed)
    space = GenomeSpace(g)
    n = cfg.population
    evaluator = _Evaluator(space, params, q.globals, cfg.workers)
    try:
        pop = [random_chromosome(space, rng) for _ in range(n)]
        info = _rank_population(pop, evaluator, params)
        if on_generation:
            on_generation(0, pop, info)
        for gen in range(1, cfg.iterations + 1):
            cum, total = [], 0
            for f in info:
                total += n - f.rank + 1
                cum.append(total)
            offspring = []
            for _ in range(n):
                a, b = rng.choices(pop, cum_weights=cum, k=2)
                if rng.random() < cfg.crossover_prob:
                    a, b = crossover(a, b, space, rng)
                offspring.append(mutate(a, space, cfg.mutation_prob, rng))
                offspring.append(mutate(b, space, cfg.mutation_prob, rng))
            combined = pop + offspring
            cinfo = _rank_population(combined, evaluator, params)
            best = sorted(range(len(combined)), key=lambda i: cinfo[i].rank)[:n]
            pop = [combined[i] for i in best]
            info = _rank_population(pop, evaluator, params)
            if on_generation:
                on_generation(gen, pop, info)
            if log.isEnabledFor(logging.DEBUG) and gen % 100 == 0:
                log.debug("generation %d: %d individuals on level 0", gen, sum(f.level == 0 for f in info))
        results = evaluator(pop)
    finally:
        evaluator.close()
    entries, seen = [], set()
    for c, f, (qos, viol) in sorted(zip(pop, info, results), key=lambda t: t[1].rank):
        if f.level == 0 and viol == 0 and c.key not in seen:
            seen.add(c.key)
            entries.append(FrontEntry(tuple(qos), decode(c, space)))
    # equal tuples from different genotypes collapse; feasibility re-checked
    entries = [e for e in entries if check_constraints(e.qos, q.globals, params)]
    if not entries:
        raise NoFeasibleSolutionError("no feasible individual in the final population")
    return make_front(entries, params, {"generations": cfg.iterations, "evaluations": len(evaluator.cache)})
