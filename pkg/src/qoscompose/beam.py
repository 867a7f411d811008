"""Width-bounded LPG sweep.

Same backward sweep as the exact solver, but after each layer only
``beam_width`` (cumulative tuple, LPG node) pairs survive.  Selection uses the
normalised-utility score, recomputed over whatever pool is being ranked.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, NamedTuple

import numpy as np

from .depgraph import DependencyGraph
from .metrics import utility, utility_array
from .model import FrontSet, ParamSet, compare, Relation
from .optimal import _Budget, end_node, expand_level, member_key, start_front, upstream_bounds
from .preprocess import natural_key

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BeamConfig:
    beam_width: int = 100
    max_combinations: int | None = None   # per LPG node; None keeps all
    max_lpg_nodes: int | None = 200_000
    lookahead: bool = True                # drop pairs no upstream completion can make feasible

    def __post_init__(self):
        if self.beam_width < 1:
            raise ValueError("beam width must be at least 1")


class Candidate(NamedTuple):
    qos: tuple
    node: Any            # LPG node key (frozenset) or any sortable label
    entry: Any = None    # CumEntry back-pointer


def _node_order(node) -> tuple:
    if isinstance(node, frozenset):
        return member_key(node)
    return (natural_key(str(node)),)


def _ident(c: Candidate) -> tuple:
    return (_node_order(c.node), tuple(c.qos))


def _rank(pool: list[Candidate], params: ParamSet) -> list[Candidate]:
    u = utility([c.qos for c in pool], params)
    order = sorted(range(len(pool)), key=lambda i: (-u[i], tuple(pool[i].qos), _node_order(pool[i].node)))
    return [pool[i] for i in order]


def _dedup(cands) -> list[Candidate]:
    seen, out = set(), []
    for c in cands:
        k = _ident(c)
        if k not in seen:
            seen.add(k)
            out.append(c)
    return out


def select_last_level(candidates, k1: int, params: ParamSet) -> list[Candidate]:
    """Keep the non-dominated pairs first; top up with the best of the rest."""
    cands = _dedup(Candidate(*c) if not isinstance(c, Candidate) else c for c in candidates)
    nd = [c for c in cands
          if not any(compare(o.qos, c.qos, params) is Relation.DOMINATES for o in cands)]
    picked = _rank(nd, params)[:k1]
    if len(picked) < k1:
        chosen = {_ident(c) for c in picked}
        rest = [c for c in cands if _ident(c) not in chosen]
        picked += _rank(rest, params)[:k1 - len(picked)] if rest else []
    return picked


def select_inner_level(pools, k1: int, params: ParamSet) -> list[Candidate]:
    """Rank position j draws from the predecessors of successor ranks 1..j.

    ``pools[x]`` lists the candidates feeding the successor ranked x+1.  Past
    the last successor rank, every pool is open.  If the open pools are used
    up before position j, the next pool is opened rather than leaving the
    position empty.
    """
    # each distinct pair once, tagged with the first pool that offers it
    first: dict[tuple, int] = {}
    uniq: list[Candidate] = []
    for x, pool in enumerate(pools):
        for c in pool:
            c = c if isinstance(c, Candidate) else Candidate(*c)
            k = _ident(c)
            if k not in first:
                first[k] = x
                uniq.append(c)
    if not uniq:
        return []
    n, kp = len(uniq), len(pools)
    qos = np.array([c.qos for c in uniq], dtype=float).reshape(n, len(params))
    opens_at = np.array([first[_ident(c)] for c in uniq])
    order = sorted(range(n), key=lambda i: (tuple(uniq[i].qos), _node_order(uniq[i].node)))
    static = np.empty(n, dtype=np.int64)
    static[order] = np.arange(n)
    free = np.ones(n, dtype=bool)
    picked: list[Candidate] = []
    opened = 0
    while len(picked) < k1:
        opened = min(kp, max(opened, len(picked) + 1))
        mask = free & (opens_at < opened)
        while not mask.any() and opened < kp:
            opened += 1
            mask = free & (opens_at < opened)
        if not mask.any():
            break
        idx = np.flatnonzero(mask)
        u = utility_array(qos[idx], params)
        best = idx[np.lexsort((static[idx], -u))[0]]
        picked.append(uniq[best])
        free[best] = False
    return picked


def solve_beam(g: DependencyGraph, q=None, params: ParamSet | None = None,
               cfg: BeamConfig = BeamConfig()) -> FrontSet:
    q = q or g.query
    params = tuple(params or g.params)
    end = end_node(g, params)
    level = {end.key: end}
    ranked = [Candidate(end.cp[0].qos, end.key, end.cp[0])]
    budget = _Budget(cfg.max_lpg_nodes)
    bounds = upstream_bounds(g, params) if cfg.lookahead else None
    widths = []
    for layer in range(g.end_layer - 1, 0, -1):
        nxt, preds_of = expand_level(level, layer, g, q, params, budget, cfg.max_combinations, bounds)
        if layer == g.end_layer - 1:
            cands = [Candidate(e.qos, k, e) for k in sorted(nxt, key=member_key) for e in nxt[k].cp]
            ranked = select_last_level(cands, cfg.beam_width, params)
        else:
            pools = [[Candidate(e.qos, pk, e) for pk in preds_of.get(s.node, ()) for e in nxt[pk].cp]
                     for s in ranked]
            ranked = select_inner_level(pools, cfg.beam_width, params)
        widths.append(sum(len(n.cp) for n in nxt.values()))
        keep: dict[frozenset, set] = {}
        for c in ranked:
            keep.setdefault(c.node, set()).add(id(c.entry))
        level = {}
        for k, node in nxt.items():
            if k in keep:
                node.cp = [e for e in node.cp if id(e) in keep[k]]
                level[k] = node
        log.debug("beam layer %d: %d of %d pairs kept", layer, len(ranked), widths[-1])
        if not level:
            break
    stats = {"lpg_nodes": budget.used, "level_widths": list(reversed(widths)), "beam_width": cfg.beam_width}
    return start_front(level, g, q, params, stats)
