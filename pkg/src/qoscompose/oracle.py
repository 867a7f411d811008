"""Brute-force reference front for desk-scale instances.

Deliberately shares nothing with the graph and LPG code beyond the core
aggregation and dominance primitives.  It enumerates every minimal
activation-valid service set, every tuple choice for it, composes each one
stage by stage and filters.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass

from .model import (
    FrontEntry,
    FrontSet,
    ParamSet,
    QosComposeError,
    Query,
    Repository,
    SolutionGraph,
    SolutionNode,
    check_constraints,
    compose_par,
    compose_seq,
    non_dominated_items,
    seq_identity,
)


class OracleLimitExceeded(QosComposeError):
    pass


@dataclass(frozen=True)
class OracleLimits:
    max_services: int = 15          # distinct I/O signatures among relevant services
    max_params: int = 3
    max_combinations: int = 1_000_000


@dataclass(frozen=True)
class _Unit:
    id: str
    inputs: frozenset
    outputs: frozenset
    tuples: tuple   # ((qos, source), ...)


def _nat(s: str):
    return tuple(int(t) if t.isdigit() else t for t in re.split(r"(\d+)", s))


def _units(repo) -> list[_Unit]:
    if isinstance(repo, Repository):
        return [_Unit(s.id, s.inputs, s.outputs, ((s.qos, s.id),)) for s in repo.services]
    return [_Unit(r.id, r.inputs, r.outputs, tuple(r.tuples)) for r in repo.representatives]


class _Analysis:
    """Activation, kept provision edges and stage layers for one query."""

    def __init__(self, units: list[_Unit], q: Query):
        self.q = q
        by_id = {u.id: u for u in units}
        # discovery rounds
        avail, rounds, r = set(q.inputs), {}, 0
        remaining = sorted(by_id, key=_nat)
        while True:
            r += 1
            now = [k for k in remaining if by_id[k].inputs <= avail]
            if not now:
                break
            for k in now:
                rounds[k] = r
            for k in now:
                avail |= by_id[k].outputs
            remaining = [k for k in remaining if k not in rounds]
        self.units = {k: by_id[k] for k in rounds}
        self.rounds = rounds
        self.reachable = avail

        # raw provision edges among activated units
        raw = {}
        for u in self.units.values():
            for v in self.units.values():
                names = (u.outputs & v.inputs) - q.inputs
                if names:
                    raw[(u.id, v.id)] = frozenset(names)

        # signature-level back-edge removal in discovery order
        sig = {k: (x.inputs, x.outputs) for k, x in self.units.items()}
        rank = {}
        for k in sorted(self.units, key=lambda k: (rounds[k], _nat(k))):
            rank.setdefault(sig[k], (rounds[k], _nat(k)))
        sig_adj = {}
        for (a, b) in raw:
            sig_adj.setdefault(sig[a], set()).add(sig[b])
        back = [(s, t) for s in sig_adj for t in sig_adj[s] if rank[t] <= rank[s]]
        back.sort(key=lambda e: (rank[e[0]], rank[e[1]]))
        dropped = set()
        for s, t in back:
            if s == t or self._path(sig_adj, t, s):
                sig_adj[s].remove(t)
                dropped.add((s, t))
        self.edges = {e: n for e, n in raw.items() if (sig[e[0]], sig[e[1]]) not in dropped}

        # longest-path layers over kept edges (memoised recursion)
        preds = {k: [] for k in self.units}
        for a, b in self.edges:
            preds[b].append(a)
        self.layer = {}

        def depth(k):
            if k not in self.layer:
                self.layer[k] = 1 + max((depth(p) for p in preds[k]), default=0)
            return self.layer[k]

        for k in self.units:
            depth(k)

        # providers of each (consumer, name) along kept edges
        self.providers = {}
        for (a, b), names in self.edges.items():
            for n in names:
                self.providers.setdefault((b, n), []).append(a)
        for key in self.providers:
            self.providers[key].sort(key=_nat)
        self.out_providers = {o: sorted((k for k, x in self.units.items() if o in x.outputs), key=_nat)
                              for o in q.outputs}

    @staticmethod
    def _path(adj, src, dst) -> bool:
        seen, todo = {src}, [src]
        while todo:
            x = todo.pop()
            if x == dst:
                return True
            for y in adj.get(x, ()):
                if y not in seen:
                    seen.add(y)
                    todo.append(y)
        return False

    def needs(self, k: str) -> list[str]:
        return sorted(self.units[k].inputs - self.q.inputs)

    def valid(self, s: frozenset) -> bool:
        if not s:
            return False
        for k in s:
            for n in self.needs(k):
                if not any(p in s for p in self.providers.get((k, n), ())):
                    return False
        produced = set().union(*(self.units[k].outputs for k in s))
        return self.q.outputs <= produced

    def relevant(self) -> set[str]:
        keep, todo = set(), [p for ps in self.out_providers.values() for p in ps]
        while todo:
            k = todo.pop()
            if k in keep:
                continue
            keep.add(k)
            for n in self.needs(k):
                todo.extend(self.providers.get((k, n), ()))
        return keep


def _minimal_sets(a: _Analysis, budget: list[int]) -> list[frozenset]:
    found: set[frozenset] = set()

    def search(chosen: frozenset, open_reqs: list):
        budget[0] -= 1
        if budget[0] < 0:
            raise OracleLimitExceeded("search exceeded the combination budget")
        # first unmet requirement
        while open_reqs:
            cons, name = open_reqs[0]
            provs = a.out_providers[name] if cons is None else a.providers.get((cons, name), [])
            if any(p in chosen for p in provs):
                open_reqs = open_reqs[1:]
                continue
            for p in provs:
                new = [(p, n) for n in a.needs(p)] if p not in chosen else []
                search(chosen | {p}, open_reqs[1:] + new)
            return
        found.add(chosen)

    search(frozenset(), [(None, o) for o in sorted(a.q.outputs)])
    minimal = [s for s in found if a.valid(s) and not any(a.valid(s - {k}) for k in s)]
    return sorted(minimal, key=lambda s: (len(s), sorted(map(_nat, s))))


def _prepare(repo, q: Query, params, limits: OracleLimits) -> tuple[_Analysis, ParamSet]:
    params = tuple(params or repo.params)
    if len(params) > limits.max_params:
        raise OracleLimitExceeded(f"{len(params)} parameters exceed the oracle limit of {limits.max_params}")
    a = _Analysis(_units(repo), q)
    sigs = {(a.units[k].inputs, a.units[k].outputs) for k in a.relevant()}
    if len(sigs) > limits.max_services:
        raise OracleLimitExceeded(f"{len(sigs)} relevant services exceed the oracle limit of {limits.max_services}")
    return a, params


def enumerate_solutions(repo, q: Query, params: ParamSet | None = None,
                        limits: OracleLimits = OracleLimits()) -> list[SolutionGraph]:
    """Every minimal activation-valid service set (first tuple of each unit)."""
    a, params = _prepare(repo, q, params, limits)
    if not q.outputs <= a.reachable:
        return []
    sets = _minimal_sets(a, [limits.max_combinations])
    return [_solution(a, s, {k: 0 for k in s}) for s in sets]


def _solution(a: _Analysis, s: frozenset, choice: dict) -> SolutionGraph:
    nodes = []
    for k in sorted(s, key=lambda k: (a.layer[k], _nat(k))):
        u = a.units[k]
        qos, src = u.tuples[choice[k]]
        nodes.append(SolutionNode(k, src, u.inputs, u.outputs, tuple(qos), choice[k], a.layer[k]))
    edges = tuple((x, y, n) for (x, y), n in sorted(a.edges.items()) if x in s and y in s)
    return SolutionGraph(tuple(nodes), edges)


def _stage_qos(a: _Analysis, picks: list, params: ParamSet) -> tuple:
    stages: dict[int, list] = {}
    for k, qos in picks:
        stages.setdefault(a.layer[k], []).append(qos)
    acc = seq_identity(params)
    for lay in sorted(stages):
        acc = compose_seq(acc, compose_par(stages[lay], params), params)
    return acc


def oracle_front(repo, q: Query, params: ParamSet | None = None,
                 limits: OracleLimits = OracleLimits()) -> FrontSet:
    a, params = _prepare(repo, q, params, limits)
    if not q.outputs <= a.reachable:
        return FrontSet(())
    budget = [limits.max_combinations]
    sets = _minimal_sets(a, budget)
    entries = []
    for s in sets:
        ks = sorted(s, key=_nat)
        for idx in itertools.product(*(range(len(a.units[k].tuples)) for k in ks)):
            budget[0] -= 1
            if budget[0] < 0:
                raise OracleLimitExceeded("tuple combinations exceed the oracle budget")
            picks = [(k, a.units[k].tuples[i][0]) for k, i in zip(ks, idx)]
            if not all(check_constraints(t, q.locals, params) for _, t in picks):
                continue
            t = _stage_qos(a, picks, params)
            if check_constraints(t, q.globals, params):
                entries.append(FrontEntry(t, _solution(a, s, dict(zip(ks, idx)))))
    kept = non_dominated_items(entries, lambda e: e.qos, params)
    return FrontSet(tuple(kept), {"minimal_sets": len(sets)})


def oracle_layers(repo, q: Query) -> dict[str, int]:
    return dict(_Analysis(_units(repo), q).layer)
