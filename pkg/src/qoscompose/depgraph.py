"""Query-specific dependency graph: activation closure, filtering, pruning, layering.

Stage semantics used throughout the package: a service runs in the stage given
by its structural layer, the longest-path depth in the query's activation
graph *before* any constraint filtering.  Query inputs are always available and
never create edges.  The oracle recomputes the same layering from the raw
repository, so the two pipelines compose solutions identically.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, replace

from .model import (
    NoFeasibleSolutionError,
    NoSolutionError,
    ParamSet,
    Query,
    Repository,
    check_constraints,
    early_constraints,
    seq_identity,
)
from .preprocess import ClusteredRepository, natural_key, singletons

log = logging.getLogger(__name__)

START = "<start>"
END = "<end>"


@dataclass(frozen=True)
class DepNode:
    id: str
    kind: str                 # "service", "dummy", "start" or "end"
    inputs: frozenset
    outputs: frozenset
    tuples: tuple = ()        # ((qos, source_service_id), ...)
    layer: int = 0
    origin: str | None = None  # dummy: the real node it forwards for

    @property
    def is_real(self) -> bool:
        return self.kind == "service"


class DependencyGraph:
    def __init__(self, params: ParamSet, query: Query, nodes: dict, edges: dict, *,
                 rounds: dict, structure: dict, struct_nodes: dict,
                 removed_tuples: tuple = (), dropped_edges: tuple = (), layered: bool = False):
        self.params = tuple(params)
        self.query = query
        self.nodes: dict[str, DepNode] = nodes
        self.edges: dict[tuple[str, str], frozenset] = edges
        self.rounds = rounds                # discovery round per activated node (unfiltered)
        self.structure = structure          # unfiltered provision edges among activated nodes
        self.struct_nodes = struct_nodes    # id -> (inputs, outputs) of every activated node
        self.removed_tuples = removed_tuples
        self.dropped_edges = dropped_edges
        self.layered = layered
        self._reps: dict | None = None        # kept so cycle breaking can reassemble
        self._survivors: dict | None = None
        self._in: dict[str, list] = {v: [] for v in nodes}
        self._out: dict[str, list] = {v: [] for v in nodes}
        for (u, v), names in sorted(edges.items()):
            self._out[u].append((v, names))
            self._in[v].append((u, names))

    def _derive(self, **changes) -> "DependencyGraph":
        kw = dict(rounds=self.rounds, structure=self.structure, struct_nodes=self.struct_nodes,
                  removed_tuples=self.removed_tuples, dropped_edges=self.dropped_edges,
                  layered=self.layered)
        nodes = changes.pop("nodes", self.nodes)
        edges = changes.pop("edges", self.edges)
        kw.update(changes)
        out = DependencyGraph(self.params, self.query, nodes, edges, **kw)
        out._reps, out._survivors = self._reps, self._survivors
        return out

    def in_edges(self, v: str) -> list:
        return self._in[v]

    def out_edges(self, v: str) -> list:
        return self._out[v]

    def preds(self, v: str) -> list[str]:
        return [u for u, _ in self._in[v]]

    def succs(self, v: str) -> list[str]:
        return [w for w, _ in self._out[v]]

    def required(self, v: str) -> frozenset:
        """Names a node must receive along edges (query inputs excluded)."""
        n = self.nodes[v]
        if n.kind == "end":
            return self.query.outputs
        if n.kind == "start":
            return frozenset()
        return n.inputs - self.query.inputs

    def providers(self, v: str, name: str) -> list[str]:
        return [u for u, names in self._in[v] if name in names]

    def real_nodes(self) -> list[str]:
        return sorted((k for k, n in self.nodes.items() if n.is_real), key=natural_key)

    @property
    def end_layer(self) -> int:
        return self.nodes[END].layer

    def layer_nodes(self, k: int) -> list[str]:
        return sorted((n.id for n in self.nodes.values() if n.layer == k), key=natural_key)

    def level_sizes(self) -> list[int]:
        return [len(self.layer_nodes(k)) for k in range(self.end_layer + 1)]

    def to_dot(self) -> str:
        lines = ["digraph dependency {", "  rankdir=LR;"]
        for k in range(self.end_layer + 1 if self.layered else 1):
            ids = self.layer_nodes(k) if self.layered else sorted(self.nodes, key=natural_key)
            for v in ids:
                n = self.nodes[v]
                tup = "; ".join("(" + ", ".join(f"{x:g}" for x in q) + ")" for q, _ in n.tuples)
                shape = {"dummy": "point", "start": "box", "end": "box"}.get(n.kind, "ellipse")
                lines.append(f'  "{v}" [label="{v}\\nL{n.layer}\\n{tup}", shape={shape}];')
        for (u, v), names in sorted(self.edges.items()):
            lines.append(f'  "{u}" -> "{v}" [label="{",".join(sorted(names))}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _as_clustered(repo) -> ClusteredRepository:
    return singletons(repo) if isinstance(repo, Repository) else repo


def activation_rounds(signatures: dict[str, tuple[frozenset, frozenset]], given: frozenset) -> dict[str, int]:
    """Synchronous forward closure: round r activates everything whose inputs
    are available after round r-1."""
    available = set(given)
    pending = dict(signatures)
    rounds: dict[str, int] = {}
    r = 0
    while True:
        r += 1
        fired = [k for k, (ins, _) in pending.items() if ins <= available]
        if not fired:
            return rounds
        for k in fired:
            rounds[k] = r
            available |= pending.pop(k)[1]


def provision_edges(signatures: dict, given: frozenset) -> dict[tuple[str, str], frozenset]:
    consumers: dict[str, list[str]] = {}
    for k, (ins, _) in signatures.items():
        for name in ins - given:
            consumers.setdefault(name, []).append(k)
    edges: dict[tuple[str, str], set] = {}
    for u, (_, outs) in signatures.items():
        for name in outs - given:
            for v in consumers.get(name, ()):
                edges.setdefault((u, v), set()).add(name)
    return {e: frozenset(n) for e, n in edges.items()}


def _forward_support(candidates: list[str], required: dict, edges: dict) -> set[str]:
    """Least fixpoint: a node is active once every required name has an
    active provider along an existing edge."""
    providers: dict[str, dict[str, list[str]]] = {v: {} for v in candidates}
    for (u, v), names in edges.items():
        if v in providers and u in providers:
            for name in names:
                providers[v].setdefault(name, []).append(u)
    active: set[str] = set()
    changed = True
    while changed:
        changed = False
        for v in candidates:
            if v in active:
                continue
            if all(any(u in active for u in providers[v].get(name, ())) for name in required[v]):
                active.add(v)
                changed = True
    return active


def build(crepo, q: Query, params: ParamSet | None = None, *, filter_constraints: bool = True) -> DependencyGraph:
    crepo = _as_clustered(crepo)
    params = tuple(params or crepo.params)
    q.validate_params(params)
    reps = {r.id: r for r in crepo.representatives}
    sigs = {k: (r.inputs, r.outputs) for k, r in reps.items()}

    rounds = activation_rounds(sigs, q.inputs)
    struct_nodes = {k: sigs[k] for k in rounds}
    structure = provision_edges(struct_nodes, q.inputs)
    reachable = set(q.inputs).union(*(sigs[k][1] for k in rounds)) if rounds else set(q.inputs)
    if not q.outputs <= reachable:
        missing = sorted(q.outputs - reachable)
        raise NoSolutionError(f"query outputs {missing} cannot be produced from {sorted(q.inputs)}")

    cs = tuple(q.locals) + early_constraints(q.globals, params)
    removed = []
    survivors = {}
    for k in sorted(rounds, key=lambda k: (rounds[k], natural_key(k))):
        keep = []
        for qos, src in reps[k].tuples:
            if not filter_constraints or check_constraints(qos, cs, params):
                keep.append((qos, src))
            else:
                bad = [str(c) for c in cs if not c.holds(qos, params)]
                removed.append((k, tuple(qos), src, "; ".join(bad)))
        if keep:
            survivors[k] = tuple(keep)
        else:
            log.debug("node %s dropped: every tuple violates a constraint", k)

    g = DependencyGraph(params, q, {}, {}, rounds=rounds, structure=structure, struct_nodes=struct_nodes,
                        removed_tuples=tuple(removed))
    return _assemble(g, reps, survivors)


def _assemble(g: DependencyGraph, reps: dict, survivors: dict) -> DependencyGraph:
    """Create the filtered node/edge set from surviving tuples and the
    (possibly cycle-broken) structure."""
    q = g.query
    cands = sorted(survivors, key=natural_key)
    required = {k: reps[k].inputs - q.inputs for k in cands}
    active = _forward_support(cands, required, g.structure)
    produced = set(q.inputs).union(*(reps[k].outputs for k in active)) if active else set(q.inputs)
    if not q.outputs <= produced:
        missing = sorted(q.outputs - produced)
        raise NoFeasibleSolutionError(f"constraints leave no way to produce {missing}")

    nodes = {START: DepNode(START, "start", frozenset(), q.inputs),
             END: DepNode(END, "end", q.outputs, frozenset())}
    edges = {}
    for k in sorted(active, key=natural_key):
        r = reps[k]
        nodes[k] = DepNode(k, "service", r.inputs, r.outputs, survivors[k])
        if not required[k]:
            edges[(START, k)] = r.inputs
        final = r.outputs & q.outputs
        if final:
            edges[(k, END)] = final
    for (u, v), names in g.structure.items():
        if u in active and v in active:
            edges[(u, v)] = names
    g._reps, g._survivors = reps, survivors
    return g._derive(nodes=nodes, edges=edges)


def cycle_drops(rounds: dict, struct_nodes: dict, structure: dict) -> set[tuple]:
    """Signature-level back edges closing a cycle, in discovery order.

    Nodes sharing an input/output signature are interchangeable, so the
    decision is taken once per signature pair.  That keeps the result the
    same whether the repository was clustered or not.
    """
    order: dict[tuple, tuple] = {}
    for k in sorted(rounds, key=natural_key):
        order.setdefault(struct_nodes[k], (rounds[k], natural_key(k)))
    sig_edges: dict[tuple, set] = {}
    for (u, v) in structure:
        su, sv = struct_nodes[u], struct_nodes[v]
        sig_edges.setdefault(su, set()).add(sv)
    candidates = sorted(((su, sv) for su, outs in sig_edges.items() for sv in outs
                         if order[sv] <= order[su]),
                        key=lambda e: (order[e[0]], order[e[1]]))
    dropped = set()
    for su, sv in candidates:
        if su == sv or _reaches(sig_edges, sv, su):
            sig_edges[su].discard(sv)
            dropped.add((su, sv))
    return dropped


def _reaches(adj: dict, src, dst) -> bool:
    seen = {src}
    stack = [src]
    while stack:
        x = stack.pop()
        if x == dst:
            return True
        for y in adj.get(x, ()):
            if y not in seen:
                seen.add(y)
                stack.append(y)
    return False


def break_cycles(g: DependencyGraph) -> DependencyGraph:
    drops = cycle_drops(g.rounds, g.struct_nodes, g.structure)
    if not drops:
        return g
    structure = {}
    dropped = list(g.dropped_edges)
    for (u, v), names in g.structure.items():
        if (g.struct_nodes[u], g.struct_nodes[v]) in drops:
            dropped.append((u, v))
            log.info("cycle broken: dropped edge %s -> %s (%s)", u, v, ",".join(sorted(names)))
        else:
            structure[(u, v)] = names
    h = g._derive(structure=structure, dropped_edges=tuple(sorted(dropped)))
    return _assemble(h, g._reps, g._survivors)


def prune_backward(g: DependencyGraph) -> DependencyGraph:
    keep = {END}
    queue = deque([END])
    while queue:
        v = queue.popleft()
        for u in g.preds(v):
            if u not in keep:
                keep.add(u)
                queue.append(u)
    if len(keep) == 1:
        raise NoSolutionError("no service contributes to the requested outputs")
    keep.add(START)
    nodes = {k: n for k, n in g.nodes.items() if k in keep}
    edges = {e: n for e, n in g.edges.items() if e[0] in keep and e[1] in keep}
    removed = sorted(set(g.nodes) - keep, key=natural_key)
    if removed:
        log.debug("backward pruning removed %s", removed)
    return g._derive(nodes=nodes, edges=edges)


def structural_layers(rounds: dict, structure: dict) -> dict[str, int]:
    preds: dict[str, list[str]] = {k: [] for k in rounds}
    for u, v in structure:
        preds[v].append(u)
    layer: dict[str, int] = {}
    # Kahn-order longest path; the structure is a DAG once cycles are broken.
    indeg = {k: len(preds[k]) for k in rounds}
    succ: dict[str, list[str]] = {k: [] for k in rounds}
    for u, v in structure:
        succ[u].append(v)
    ready = deque(sorted((k for k, d in indeg.items() if d == 0), key=natural_key))
    for k in ready:
        layer[k] = 1
    while ready:
        u = ready.popleft()
        for v in succ[u]:
            layer[v] = max(layer.get(v, 1), layer[u] + 1)
            indeg[v] -= 1
            if indeg[v] == 0:
                ready.append(v)
    if len(layer) != len(rounds) or any(indeg.values()):
        raise ValueError("structure still cyclic; break cycles before layering")
    return layer


def layerize(g: DependencyGraph) -> DependencyGraph:
    if cycle_drops(g.rounds, g.struct_nodes, g.structure):
        g = break_cycles(g)
    L = structural_layers(g.rounds, g.structure)
    nodes = {START: replace(g.nodes[START], layer=0)}
    for k, n in g.nodes.items():
        if n.is_real:
            nodes[k] = replace(n, layer=L[k])
    end_layer = 1 + max(L[u] for u in g.preds(END))
    nodes[END] = replace(g.nodes[END], layer=end_layer)

    carried: dict[tuple[str, int], set] = {}
    edges: dict[tuple[str, str], frozenset] = {}
    for (u, v), names in g.edges.items():
        lu, lv = nodes[u].layer, nodes[v].layer
        if lv - lu == 1:
            edges[(u, v)] = names
            continue
        for k in range(lu + 1, lv):
            carried.setdefault((u, k), set()).update(names)
        edges[(f"{u}@{lv - 1}", v)] = names
    ident = ((seq_identity(g.params), None),)
    for (u, k), names in carried.items():
        did = f"{u}@{k}"
        names = frozenset(names)
        nodes[did] = DepNode(did, "dummy", names, names, ident, k, origin=u)
        prev = u if k == nodes[u].layer + 1 else f"{u}@{k - 1}"
        edges[(prev, did)] = names
    return g._derive(nodes=nodes, edges=edges, layered=True)


def build_graph(crepo, q: Query, params: ParamSet | None = None, *, filter_constraints: bool = True) -> DependencyGraph:
    """build, break cycles, prune and layer in one call."""
    g = build(crepo, q, params, filter_constraints=filter_constraints)
    g = break_cycles(g)
    g = prune_backward(g)
    return layerize(g)
