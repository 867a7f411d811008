"""Exact Pareto front via the layered path-generation graph (LPG).

The sweep runs backward from End one layer at a time.  Each LPG node is a set
of same-layer dependency-graph nodes that run in parallel; its cumulative
front holds the non-dominated QoS of every partial composition from that node
to End, with back-pointers for decoding.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

from .depgraph import END, DependencyGraph
from .model import (
    Aggregator,
    FrontEntry,
    FrontSet,
    NoFeasibleSolutionError,
    ParamSet,
    QosComposeError,
    ResourceLimitError,
    SolutionGraph,
    SolutionNode,
    check_constraints,
    compose_seq,
    early_constraints,
    non_dominated_items,
    par_identity,
    seq_identity,
    solution_qos,
    tuples_equal,
)
from .preprocess import natural_key

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CumEntry:
    qos: tuple
    succ: "CumEntry | None"       # entry of the successor LPG node this extends
    choice: tuple                 # ((member_id, tuple_index), ...) for real members
    size: int                     # real services on the path so far

    def chain(self):
        e = self
        while e is not None:
            yield e
            e = e.succ


@dataclass
class LpgNode:
    key: frozenset
    layer: int
    node_tuples: list             # [(qos, choice)]
    cp: list = field(default_factory=list)
    succs: set = field(default_factory=set)

    @property
    def members(self) -> list[str]:
        return sorted(self.key, key=natural_key)


@lru_cache(maxsize=65536)
def member_key(key: frozenset) -> tuple:
    return tuple(natural_key(m) for m in sorted(key, key=natural_key))


def predecessor_combinations(members, g: DependencyGraph) -> list[frozenset]:
    """Minimal sets of previous-layer nodes that feed every required input.

    A requirement is a (member, name) pair and is met by any predecessor that
    sends that name to that member.  Combinations that merely add a provider
    to an already-sufficient set are dropped.
    """
    reqs = []
    for m in sorted(members, key=natural_key):
        for name in sorted(g.required(m)):
            provs = sorted(set(g.providers(m, name)), key=natural_key)
            if not provs:
                return []
            reqs.append(provs)
    if not reqs:
        return [frozenset()]
    out: set[frozenset] = set()

    def rec(i: int, chosen: frozenset):
        while i < len(reqs) and not chosen.isdisjoint(reqs[i]):
            i += 1
        if i == len(reqs):
            out.add(chosen)
            return
        for p in reqs[i]:
            rec(i + 1, chosen | {p})

    rec(0, frozenset())
    minimal = [c for c in out if _is_minimal(c, reqs)]
    return sorted(minimal, key=member_key)


def _is_minimal(combo: frozenset, reqs: list) -> bool:
    for p in combo:
        if all(not (combo - {p}).isdisjoint(r) for r in reqs):
            return False
    return True


def _pick(values, params: ParamSet, best: bool) -> tuple:
    # per-parameter best (or worst) over a non-empty list of tuples
    out = []
    for j, p in enumerate(params):
        col = [v[j] for v in values]
        out.append(max(col) if p.positive == best else min(col))
    return tuple(out)


def upstream_bounds(g: DependencyGraph, params: ParamSet) -> dict[str, tuple]:
    """Optimistic QoS of anything that can feed each node.

    Every completion upstream of a node contains a provider chain, one node
    per stage, so for monotone parameters it can be no better than the best
    chain composed from each node's best value.  Parameters are bounded
    independently, which keeps the bound optimistic.
    """
    ident = seq_identity(params)
    bound: dict[str, tuple] = {}
    for v in sorted(g.nodes, key=lambda v: (g.nodes[v].layer, natural_key(v))):
        per_name = []
        for name in sorted(g.required(v)):
            via = [compose_seq(bound[u], _pick([t for t, _ in g.nodes[u].tuples] or [ident], params, True), params)
                   for u in set(g.providers(v, name)) if u in bound]
            if via:
                per_name.append(_pick(via, params, True))
        bound[v] = _pick(per_name, params, False) if per_name else ident
    mono = [p.monotone for p in params]
    return {v: tuple(b if m else i for b, m, i in zip(t, mono, ident)) for v, t in bound.items()}


def _slack(t: tuple, params: ParamSet) -> tuple:
    # nudge a bound toward better so float reordering never prunes a feasible entry
    return tuple(x + (1 if p.positive else -1) * 1e-9 * max(1.0, abs(x)) if math.isfinite(x) else x
                 for x, p in zip(t, params))


def _prunable(real, g: DependencyGraph, params: ParamSet) -> bool:
    # Dominance survives parallel folding when every aggregator is monotone
    # in each argument; a product over negative values is not.
    for j, p in enumerate(params):
        if p.par_agg is Aggregator.PRODUCT:
            if any(t[0][j] < 0 for m in real for t in g.nodes[m].tuples):
                return False
    return True


def node_tuples(members, g: DependencyGraph, globals_, params: ParamSet) -> list:
    """Non-dominated parallel compositions of the members' tuple choices.

    Members are folded in one at a time and dominated or early-infeasible
    partial compositions are dropped after each step.
    """
    real = [m for m in sorted(members, key=natural_key) if g.nodes[m].is_real]
    if not real:
        return [(seq_identity(params), ())]
    early = early_constraints(globals_, params)
    ops = [p.par_agg.apply for p in params]
    prune = _prunable(real, g, params)
    partial = [(par_identity(params), ())]
    for m in real:
        nxt = []
        for qos, choice in partial:
            for i, (t, _) in enumerate(g.nodes[m].tuples):
                c = tuple(op(x, y) for op, x, y in zip(ops, qos, t))
                nxt.append((c, choice + ((m, i),)))
        if prune:
            nxt = [c for c in nxt if check_constraints(c[0], early, params)]
            nxt = non_dominated_items(nxt, lambda c: c[0], params)
        partial = nxt
    combos = [c for c in partial if check_constraints(c[0], early, params)]
    return non_dominated_items(combos, lambda c: c[0], params)


def extend_front(cp_succ: list, ntuples: list, existing: list, globals_, params: ParamSet,
                 upstream: tuple | None = None) -> list:
    """Merge existing cumulative entries with node_tuples x cp_succ.

    On equal tuples the entry with fewer services wins, then the older one,
    so decoded solutions never carry a removable service when a leaner
    equivalent exists.  ``upstream`` is an optimistic bound on what the
    still-unbuilt layers add; entries that fail even with it are dropped.
    """
    early = early_constraints(globals_, params)
    fresh = []
    for qos, choice in ntuples:
        for succ in cp_succ:
            t = compose_seq(qos, succ.qos, params)
            look = t if upstream is None else compose_seq(upstream, t, params)
            if check_constraints(look, early, params):
                fresh.append(CumEntry(t, succ, choice, succ.size + len(choice)))
    pool = sorted(existing + fresh, key=lambda e: e.size)
    return non_dominated_items(pool, lambda e: e.qos, params)


def decode(entry: CumEntry, g: DependencyGraph) -> SolutionGraph:
    nodes = []
    for e in entry.chain():
        for m, i in e.choice:
            n = g.nodes[m]
            qos, src = n.tuples[i]
            nodes.append(SolutionNode(m, src, n.inputs, n.outputs, tuple(qos), i, n.layer))
    return induced_solution(nodes, g)


def induced_solution(nodes: list, g: DependencyGraph) -> SolutionGraph:
    """Attach provision edges among the chosen real nodes."""
    nodes = sorted(nodes, key=lambda n: (n.layer, natural_key(n.id)))
    chosen = {n.id for n in nodes}
    edges = []
    for (u, v), names in sorted(g.structure.items()):
        if u in chosen and v in chosen:
            edges.append((u, v, names))
    return SolutionGraph(tuple(nodes), tuple(edges))


def _verify(entry: CumEntry, sol: SolutionGraph, params: ParamSet) -> None:
    got = solution_qos(sol, params)
    if not tuples_equal(got, entry.qos, 1e-6 * max(1.0, *map(abs, entry.qos))):
        raise QosComposeError(f"decoded solution recomposes to {got}, front says {entry.qos}")


class _Budget:
    def __init__(self, limit: int | None):
        self.limit, self.used = limit, 1

    def take(self):
        self.used += 1
        if self.limit is not None and self.used > self.limit:
            raise ResourceLimitError(f"LPG exceeded {self.limit} nodes; try the beam or NSGA solver")


def expand_level(level: dict, layer: int, g: DependencyGraph, q, params: ParamSet,
                 budget: _Budget, combo_cap: int | None = None,
                 bounds: dict | None = None) -> tuple[dict, dict]:
    """Create the LPG nodes of ``layer`` feeding the nodes in ``level``.

    Successors are visited in canonical order and a predecessor met again is
    merged into, never rebuilt.  Returns the new level (nodes with a
    non-empty cumulative front) and, per successor, its predecessor keys.
    """
    nxt: dict[frozenset, LpgNode] = {}
    dead: set[frozenset] = set()
    preds_of: dict[frozenset, list] = {}
    for key in sorted(level, key=member_key):
        node = level[key]
        combos = predecessor_combinations(node.members, g)
        if combo_cap is not None:
            combos = combos[:combo_cap]
        preds_of[key] = []
        for combo in combos:
            if combo in dead:
                continue
            pred = nxt.get(combo)
            if pred is None:
                nt = node_tuples(combo, g, q.globals, params)
                if not nt:
                    dead.add(combo)
                    continue
                budget.take()
                pred = LpgNode(combo, layer, nt)
                nxt[combo] = pred
            pred.succs.add(key)
            up = None
            if bounds is not None:
                up = _slack(_pick([bounds[m] for m in combo], params, False), params) if combo else None
            pred.cp = extend_front(node.cp, pred.node_tuples, pred.cp, q.globals, params, up)
            preds_of[key].append(combo)
    alive = {k: n for k, n in nxt.items() if n.cp}
    preds_of = {k: [c for c in v if c in alive] for k, v in preds_of.items()}
    return alive, preds_of


def end_node(g: DependencyGraph, params: ParamSet) -> LpgNode:
    ident = seq_identity(params)
    return LpgNode(frozenset({END}), g.end_layer, [(ident, ())], [CumEntry(ident, None, (), 0)])


def solve_optimal(g: DependencyGraph, q=None, params: ParamSet | None = None, *,
                  max_lpg_nodes: int | None = 200_000, lookahead: bool = True) -> FrontSet:
    q = q or g.query
    params = tuple(params or g.params)
    end = end_node(g, params)
    level = {end.key: end}
    budget = _Budget(max_lpg_nodes)
    bounds = upstream_bounds(g, params) if lookahead else None
    widths = []
    for layer in range(g.end_layer - 1, 0, -1):
        level, _ = expand_level(level, layer, g, q, params, budget, bounds=bounds)
        widths.append(sum(len(n.cp) for n in level.values()))
        log.debug("layer %d: %d LPG nodes, %d cumulative tuples", layer, len(level), widths[-1])
        if not level:
            break
    stats = {"lpg_nodes": budget.used, "level_widths": list(reversed(widths))}
    return start_front(level, g, q, params, stats)


def start_front(level: dict, g: DependencyGraph, q, params: ParamSet, stats: dict) -> FrontSet:
    pool = []
    for key in sorted(level, key=member_key):
        for e in level[key].cp:
            if check_constraints(e.qos, q.globals, params):
                pool.append(e)
    pool.sort(key=lambda e: e.size)
    best = non_dominated_items(pool, lambda e: e.qos, params)
    if not best:
        raise NoFeasibleSolutionError("every composition violates a global constraint")
    entries = []
    for e in best:
        sol = decode(e, g)
        _verify(e, sol, params)
        entries.append(FrontEntry(tuple(e.qos), sol))
    return FrontSet(tuple(entries), stats)
