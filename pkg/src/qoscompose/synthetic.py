"""Seeded synthetic repositories for tests and benchmarks.

Names live on tiers: a service on tier t consumes names from lower tiers and
produces names of tier t, so every instance is acyclic by construction.
"""
from __future__ import annotations

import random

from .model import RELIABILITY, RESPONSE_TIME, THROUGHPUT, Comparator, Constraint, Query, Repository, Scope, Service

PARAMS = (RESPONSE_TIME, THROUGHPUT, RELIABILITY)


def _qos(rng: random.Random, params) -> list[float]:
    out = []
    for p in params:
        if p.id == "RT":
            out.append(float(rng.randint(100, 2000)))
        elif p.id == "T":
            out.append(float(rng.randint(1, 20)))
        else:
            out.append(round(rng.uniform(0.65, 0.99), 3))
    return out


def random_instance(seed: int, max_services: int = 15, n_params: int | None = None,
                    max_per_cluster: int = 2) -> tuple[Repository, Query]:
    """A small instance within oracle limits (acyclic, at most
    ``max_per_cluster`` services per input/output signature)."""
    rng = random.Random(seed)
    subsets = [PARAMS[:2], (RESPONSE_TIME, RELIABILITY), (THROUGHPUT, RELIABILITY), PARAMS, PARAMS]
    params = rng.choice([s for s in subsets if n_params is None or len(s) == n_params])
    tiers = [[f"i{j}" for j in range(1, rng.randint(2, 3) + 1)]]
    services: list[Service] = []
    sid = 0
    n_tiers = rng.randint(2, 4)
    for t in range(1, n_tiers + 1):
        tier_names = [f"x{t}_{j}" for j in range(rng.randint(1, 3))]
        tiers.append(tier_names)
        lower = [n for tier in tiers[:t] for n in tier]
        for _ in range(rng.randint(1, 3)):
            ins = set(rng.sample(lower, min(len(lower), rng.randint(1, 2))))
            if t > 1 and rng.random() < 0.7:
                ins.add(rng.choice(tiers[t - 1]))
            outs = set(rng.sample(tier_names, rng.randint(1, len(tier_names))))
            for _ in range(rng.randint(1, max_per_cluster)):
                if sid >= max_services:
                    break
                sid += 1
                services.append(Service(f"S{sid}", ins, outs, _qos(rng, params)))
    if not services:
        services.append(Service("S1", set(tiers[0][:1]), {"x1_0"}, _qos(rng, params)))
    produced = sorted({n for s in services for n in s.outputs})
    top = [n for n in produced if n.startswith(f"x{n_tiers}_")] or produced
    outs = set(rng.sample(top, 1))
    if rng.random() < 0.5 and len(produced) > 1:
        outs.add(rng.choice(produced))
    locals_, globals_ = [], []
    ids = [p.id for p in params]
    if "R" in ids and rng.random() < 0.3:
        locals_.append(Constraint(Scope.LOCAL, "R", Comparator.GT, round(rng.uniform(0.6, 0.75), 2)))
    if "RT" in ids and rng.random() < 0.4:
        globals_.append(Constraint(Scope.GLOBAL, "RT", Comparator.LT, float(rng.randint(1500, 6000))))
    if "R" in ids and rng.random() < 0.3:
        globals_.append(Constraint(Scope.GLOBAL, "R", Comparator.GT, round(rng.uniform(0.3, 0.6), 2)))
    if "T" in ids and rng.random() < 0.2:
        globals_.append(Constraint(Scope.GLOBAL, "T", Comparator.GE, float(rng.randint(2, 8))))
    query = Query(frozenset(tiers[0]), frozenset(outs), tuple(locals_), tuple(globals_))
    return Repository(tuple(params), tuple(services), {"generator": "random_instance", "seed": seed}), query


def layered_repository(n_services: int, seed: int, tiers: int = 5, names_per_tier: int | None = None,
                       cluster_max: int = 3, n_outputs: int = 2) -> tuple[Repository, Query]:
    """A larger tiered repository with about ``n_services`` services.

    Each signature consumes one or two names (mostly from the tier just
    below) and produces one or two names of its own tier.  The query asks for
    ``n_outputs`` names from the top tier.
    """
    rng = random.Random(seed)
    params = PARAMS
    per_tier = names_per_tier or max(3, n_services // (tiers * 4))
    names = [[f"q{j}" for j in range(4)]]
    for t in range(1, tiers + 1):
        names.append([f"n{t}_{j}" for j in range(per_tier)])
    services: list[Service] = []
    sid = 0
    t = 1
    while sid < n_services:
        below = names[t - 1]
        ins = {rng.choice(below)}
        if rng.random() < 0.4:
            ins.add(rng.choice([n for tier in names[:t] for n in tier]))
        outs = set(rng.sample(names[t], rng.randint(1, 2)))
        for _ in range(rng.randint(1, cluster_max)):
            if sid >= n_services:
                break
            sid += 1
            services.append(Service(f"S{sid}", ins, outs, _qos(rng, params)))
        t = t % tiers + 1
    produced = sorted({n for s in services for n in s.outputs if n.startswith(f"n{tiers}_")})
    outs = frozenset(rng.sample(produced, min(n_outputs, len(produced))))
    query = Query(frozenset(names[0]), outs, (),
                  (Constraint(Scope.GLOBAL, "RT", Comparator.LT, 8000.0),))
    return Repository(params, tuple(services), {"generator": "layered_repository", "seed": seed}), query
