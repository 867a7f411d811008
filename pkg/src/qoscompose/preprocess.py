"""Equivalence clustering and per-cluster skyline reduction."""
from __future__ import annotations

import re
from functools import lru_cache
from dataclasses import dataclass, field

from .model import ParamSet, Repository, non_dominated_items


@dataclass(frozen=True)
class RepresentativeService:
    id: str
    inputs: frozenset
    outputs: frozenset
    tuples: tuple   # ((qos, source_service_id), ...)


@dataclass(frozen=True)
class ReductionStats:
    services_before: int
    services_after: int
    tuples_before: int
    tuples_after: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class ClusteredRepository:
    params: ParamSet
    representatives: tuple
    cluster_map: dict = field(compare=False)   # rep id -> member ids (all, incl. dominated)
    stats: ReductionStats | None = field(default=None, compare=False)

    def by_id(self) -> dict[str, RepresentativeService]:
        return {r.id: r for r in self.representatives}

    @property
    def tuple_count(self) -> int:
        return sum(len(r.tuples) for r in self.representatives)


@lru_cache(maxsize=None)
def natural_key(s: str):
    """Sort key that orders W8 before W10."""
    return tuple(int(tok) if tok.isdigit() else tok for tok in re.split(r"(\d+)", s))


def _members(repo) -> list[tuple[str, frozenset, frozenset, list]]:
    # Flatten either input kind into (id, inputs, outputs, [(qos, source)]).
    if isinstance(repo, ClusteredRepository):
        return [(r.id, r.inputs, r.outputs, list(r.tuples)) for r in repo.representatives]
    return [(s.id, s.inputs, s.outputs, [(s.qos, s.id)]) for s in repo.services]


def _group(repo) -> list[tuple[str, frozenset, frozenset, list, list]]:
    groups: dict[tuple, list] = {}
    for sid, ins, outs, tuples in _members(repo):
        groups.setdefault((ins, outs), []).append((sid, tuples))
    out = []
    for (ins, outs), members in groups.items():
        members.sort(key=lambda m: natural_key(m[0]))
        ids = [m[0] for m in members]
        tuples = [t for _, ts in members for t in ts]
        out.append((ids[0], ins, outs, ids, tuples))
    out.sort(key=lambda g: natural_key(g[0]))
    return out


def _source_ids(repo, member_ids: list[str]) -> tuple:
    if isinstance(repo, ClusteredRepository):
        return tuple(m for rid in member_ids for m in repo.cluster_map[rid])
    return tuple(member_ids)


def cluster_equivalent(repo) -> ClusteredRepository:
    """Group services with identical input and output sets; keep every tuple."""
    reps, cmap = [], {}
    for rid, ins, outs, ids, tuples in _group(repo):
        reps.append(RepresentativeService(rid, ins, outs, tuple(tuples)))
        cmap[rid] = _source_ids(repo, ids)
    return ClusteredRepository(repo.params, tuple(reps), cmap)


def skyline(items, params: ParamSet) -> list:
    """Non-dominated (qos, id) pairs; on exact ties the first listed id is kept."""
    return non_dominated_items(items, lambda it: it[0], params)


def preprocess(repo) -> ClusteredRepository:
    members = _members(repo)
    if not members:
        raise ValueError("cannot preprocess an empty repository")
    clustered = cluster_equivalent(repo)
    reps = tuple(RepresentativeService(r.id, r.inputs, r.outputs, tuple(skyline(r.tuples, repo.params)))
                 for r in clustered.representatives)
    before = repo.stats.services_before if isinstance(repo, ClusteredRepository) and repo.stats else len(members)
    tuples_before = (repo.stats.tuples_before if isinstance(repo, ClusteredRepository) and repo.stats
                     else sum(len(m[3]) for m in members))
    stats = ReductionStats(before, len(reps), tuples_before, sum(len(r.tuples) for r in reps))
    return ClusteredRepository(repo.params, reps, clustered.cluster_map, stats)


def singletons(repo: Repository) -> ClusteredRepository:
    """One representative per raw service: the no-preprocessing baseline."""
    reps = tuple(RepresentativeService(s.id, s.inputs, s.outputs, ((s.qos, s.id),))
                 for s in sorted(repo.services, key=lambda s: natural_key(s.id)))
    n = len(reps)
    return ClusteredRepository(repo.params, reps, {s.id: (s.id,) for s in repo.services},
                               ReductionStats(n, n, n, n))


def to_document(crepo: ClusteredRepository) -> dict:
    return {
        "params": [p.id for p in crepo.params],
        "representatives": [
            {"id": r.id, "inputs": sorted(r.inputs), "outputs": sorted(r.outputs),
             "members": list(crepo.cluster_map[r.id]),
             "tuples": [{"qos": list(q), "source": src} for q, src in r.tuples]}
            for r in crepo.representatives
        ],
        "stats": crepo.stats.to_dict() if crepo.stats else None,
    }
