"""
Exact front versus the two heuristics
=====================================

On a synthetic tiered repository we compare the exact front with the beam
sweep at several widths and with the genetic search, using the commonality
and average-distance statistics.
"""
import time

from qoscompose import (BeamConfig, GaConfig, build_graph, compare_fronts, evolve, preprocess, solve_beam,
                        solve_optimal)
from qoscompose.synthetic import layered_repository

repo, query = layered_repository(60, seed=3)
g = build_graph(preprocess(repo), query)
print(len(repo.services), "services,", len(g.nodes), "graph nodes,", g.end_layer - 1, "layers")


def timed(fn):
    t = time.perf_counter()
    out = fn()
    return out.tuples, time.perf_counter() - t


opt, t_opt = timed(lambda: solve_optimal(g))
print(f"optimal: {len(opt)} tuples in {t_opt:.2f} s")

runs = {f"beam {w}": timed(lambda w=w: solve_beam(g, cfg=BeamConfig(beam_width=w))) for w in (2, 10, 50)}
runs["nsga"] = timed(lambda: evolve(g, cfg=GaConfig(population=60, iterations=300, seed=1)))

# cr: shared tuples; cn: share of the joint skyline; ad > 1 means the exact run scores higher
print(f"{'run':10s} {'n':>4s} {'cr':>6s} {'cn1':>6s} {'cn2':>6s} {'ad':>6s} {'speedup':>8s}")
for name, (ts, dt) in runs.items():
    r = compare_fronts(opt, ts, g.params, time1=dt, time2=t_opt)
    print(f"{name:10s} {len(ts):4d} {r.cr:6.2f} {r.cn1:6.2f} {r.cn2:6.2f} {r.ad:6.2f} {r.speedup:8.1f}")
