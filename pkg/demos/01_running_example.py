"""
The 30-service running example
==============================

Thirty services with (response time, throughput, reliability) values and a
query with one local and two global constraints.  We shrink the repository,
build the dependency graph and compute the exact Pareto front.
"""
from qoscompose import BeamConfig, build_graph, load_running_example, preprocess, solve_beam, solve_optimal

repo, query = load_running_example()
print(len(repo.services), "services;", "inputs", sorted(query.inputs), "-> outputs", sorted(query.outputs))

# services sharing an input/output signature collapse into one representative
crepo = preprocess(repo)
print(crepo.stats)
for r in crepo.representatives:
    print(f"  {r.id:4s} {len(r.tuples)} skyline tuple(s)")

# the graph drops tuples that break local constraints, then layers what is left
g = build_graph(crepo, query)
for key, qos, *_ in g.removed_tuples:
    print("removed", key, qos)
for layer in range(1, g.end_layer):
    print("layer", layer, sorted(k for k, n in g.nodes.items() if n.layer == layer))

front = solve_optimal(g)
for e in front:
    print(e.qos, [n.service for n in e.solution.nodes])

# a narrow beam keeps fewer partial compositions per level
for width in (1, 2, 4):
    print("beam", width, solve_beam(g, cfg=BeamConfig(beam_width=width)).tuples)
