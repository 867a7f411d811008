"""
Loading challenge-style data
============================

A tiny WSC-style problem: a concept taxonomy, service descriptions, a QoS
file and a problem file.  Concepts are flattened through the taxonomy, the
missing QoS values are filled from a seeded generator, then the query is
solved like any other.
"""
from pathlib import Path

from qoscompose import build_graph, gen_qos, parse_wsc, preprocess, solve_optimal
from qoscompose.datasets import QosGenConfig, missing_values

wsc = Path(__file__).parents[1] / "tests" / "fixtures" / "wsc"
repo, query = parse_wsc(wsc / "services.xml", wsc / "taxonomy.xml", wsc / "qos.xml",
                        params=("RT", "T"), query_file=wsc / "problem.xml")
for s in repo.services:
    print(f"{s.id:7s} {sorted(s.inputs)} -> {sorted(s.outputs)} qos={s.qos}")
print("query:", sorted(query.inputs), "->", sorted(query.outputs))

# 'dealer' has no QoS record; fill it, keeping the measured values of the others
print("missing:", missing_values(repo))
repo = gen_qos(repo, QosGenConfig(seed=7))
print("after gen_qos:", {s.id: s.qos for s in repo.services})

front = solve_optimal(build_graph(preprocess(repo), query))
for e in front:
    print(e.qos, [n.service for n in e.solution.nodes])
