"""QoS parameters, tuples, dominance, aggregation, constraints and solutions.

Everything in here is immutable and side-effect free, so the solvers can share
these objects between threads without locking.
"""
from __future__ import annotations

import math
import operator
from dataclasses import dataclass, field
from enum import Enum
from functools import reduce
from typing import Callable, Iterable, Sequence, TypeVar

EQ_TOL = 1e-9

QosTuple = tuple  # tuple[float, ...]; kept loose so numpy scalars pass through


class QosComposeError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(QosComposeError, ValueError):
    pass


class InvalidSolutionError(QosComposeError):
    pass


class NoSolutionError(QosComposeError):
    """The query outputs cannot be produced from the query inputs at all."""


class NoFeasibleSolutionError(QosComposeError):
    """A functional composition exists, but constraints reject every one."""


class ResourceLimitError(QosComposeError):
    pass


class InvalidGenotypeError(QosComposeError):
    pass


class Direction(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


class Aggregator(str, Enum):
    SUM = "sum"
    PRODUCT = "product"
    MIN = "min"
    MAX = "max"

    @property
    def identity(self) -> float:
        return _IDENTITY[self]

    def fold(self, values: Iterable[float]) -> float:
        return reduce(_BINOP[self], values, self.identity)

    def apply(self, a: float, b: float) -> float:
        return _BINOP[self](a, b)


_IDENTITY = {
    Aggregator.SUM: 0.0,
    Aggregator.PRODUCT: 1.0,
    Aggregator.MIN: math.inf,
    Aggregator.MAX: 0.0,
}
_BINOP: dict[Aggregator, Callable[[float, float], float]] = {
    Aggregator.SUM: operator.add,
    Aggregator.PRODUCT: operator.mul,
    Aggregator.MIN: min,
    Aggregator.MAX: max,
}


@dataclass(frozen=True)
class QosParamSpec:
    id: str
    name: str
    direction: Direction
    seq_agg: Aggregator
    par_agg: Aggregator

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))
        object.__setattr__(self, "seq_agg", Aggregator(self.seq_agg))
        object.__setattr__(self, "par_agg", Aggregator(self.par_agg))

    @property
    def positive(self) -> bool:
        return self.direction is Direction.POSITIVE

    @property
    def monotone(self) -> bool:
        """True when composing more services can only make this value worse.

        With values >= 0 (and <= 1 for products), Sum and Max only grow and
        Min and Product only shrink.  Early constraint rejection is safe only
        for such parameters.
        """
        worse_up = {Aggregator.SUM, Aggregator.MAX}
        worse_down = {Aggregator.MIN, Aggregator.PRODUCT}
        aggs = {self.seq_agg, self.par_agg}
        if self.positive:
            return aggs <= worse_down
        return aggs <= worse_up


ParamSet = tuple  # tuple[QosParamSpec, ...]

RESPONSE_TIME = QosParamSpec("RT", "Response time", Direction.NEGATIVE, Aggregator.SUM, Aggregator.MAX)
THROUGHPUT = QosParamSpec("T", "Throughput", Direction.POSITIVE, Aggregator.MIN, Aggregator.MIN)
RELIABILITY = QosParamSpec("R", "Reliability", Direction.POSITIVE, Aggregator.PRODUCT, Aggregator.PRODUCT)
AVAILABILITY = QosParamSpec("A", "Availability", Direction.POSITIVE, Aggregator.PRODUCT, Aggregator.PRODUCT)

PRESETS = {p.id: p for p in (RESPONSE_TIME, THROUGHPUT, RELIABILITY, AVAILABILITY)}


def param_index(params: ParamSet, param_id: str) -> int:
    for i, p in enumerate(params):
        if p.id == param_id:
            return i
    raise KeyError(f"unknown QoS parameter {param_id!r}")


# -- dominance ---------------------------------------------------------------

class Relation(str, Enum):
    DOMINATES = "dominates"
    DOMINATED_BY = "dominated_by"
    EQUAL = "equal"
    INCOMPARABLE = "incomparable"


def _check_dims(params: ParamSet, *tuples: Sequence[float]) -> None:
    for t in tuples:
        if len(t) != len(params):
            raise DimensionError(f"tuple {tuple(t)} has {len(t)} values, expected {len(params)}")


def compare(a: Sequence[float], b: Sequence[float], params: ParamSet) -> Relation:
    _check_dims(params, a, b)
    a_better = b_better = False
    for x, y, p in zip(a, b, params):
        if abs(x - y) <= EQ_TOL or x == y:
            continue
        if (x > y) == p.positive:
            a_better = True
        else:
            b_better = True
        if a_better and b_better:
            return Relation.INCOMPARABLE
    if a_better:
        return Relation.DOMINATES
    if b_better:
        return Relation.DOMINATED_BY
    return Relation.EQUAL


def dominates(a, b, params: ParamSet) -> bool:
    return compare(a, b, params) is Relation.DOMINATES


def tuples_equal(a, b, tol: float = EQ_TOL) -> bool:
    return len(a) == len(b) and all(x == y or abs(x - y) <= tol for x, y in zip(a, b))


T = TypeVar("T")


def non_dominated_items(items: Iterable[T], key: Callable[[T], Sequence[float]], params: ParamSet) -> list[T]:
    """Maximal items under dominance, one per distinct tuple value.

    Among items with equal tuples the earliest one wins, so callers control
    which payload survives by ordering their input.  Output is sorted by tuple.
    """
    kept: list[T] = []
    for item in items:
        t = key(item)
        _check_dims(params, t)
        skip = False
        survivors = []
        for k in kept:
            rel = compare(t, key(k), params)
            if rel is Relation.DOMINATED_BY or rel is Relation.EQUAL:
                skip = True
                break
            if rel is not Relation.DOMINATES:
                survivors.append(k)
        if not skip:
            survivors.append(item)
            kept = survivors
    kept.sort(key=lambda it: tuple(key(it)))
    return kept


def non_dominated(tuples: Iterable[Sequence[float]], params: ParamSet) -> list[tuple]:
    return [tuple(t) for t in non_dominated_items(tuples, lambda t: t, params)]


# -- aggregation -------------------------------------------------------------

def seq_identity(params: ParamSet) -> tuple:
    return tuple(p.seq_agg.identity for p in params)


def par_identity(params: ParamSet) -> tuple:
    return tuple(p.par_agg.identity for p in params)


def compose_seq(a, b, params: ParamSet) -> tuple:
    _check_dims(params, a, b)
    return tuple(p.seq_agg.apply(x, y) for x, y, p in zip(a, b, params))


def compose_par(tuples: Sequence[Sequence[float]], params: ParamSet) -> tuple:
    if not tuples:
        raise ValueError("compose_par needs at least one tuple")
    _check_dims(params, *tuples)
    return tuple(p.par_agg.fold(col) for p, col in zip(params, zip(*tuples)))


def compose_stages(stages: Sequence[Sequence[Sequence[float]]], params: ParamSet) -> tuple:
    """Sequential composition of parallel stages; empty stages are skipped."""
    acc = seq_identity(params)
    for stage in stages:
        if stage:
            acc = compose_seq(acc, compose_par(stage, params), params)
    return acc


# -- constraints and queries ---------------------------------------------------

class Scope(str, Enum):
    LOCAL = "local"
    GLOBAL = "global"


class Comparator(str, Enum):
    LT = "lt"
    LE = "le"
    GT = "gt"
    GE = "ge"

    def holds(self, value: float, threshold: float) -> bool:
        return _CMP[self](value, threshold)

    @property
    def symbol(self) -> str:
        return {"lt": "<", "le": "<=", "gt": ">", "ge": ">="}[self.value]


_CMP = {Comparator.LT: operator.lt, Comparator.LE: operator.le,
        Comparator.GT: operator.gt, Comparator.GE: operator.ge}


@dataclass(frozen=True)
class Constraint:
    scope: Scope
    param_id: str
    comparator: Comparator
    threshold: float

    def __post_init__(self):
        object.__setattr__(self, "scope", Scope(self.scope))
        object.__setattr__(self, "comparator", Comparator(self.comparator))
        if not math.isfinite(self.threshold):
            raise ValueError(f"constraint threshold must be finite, got {self.threshold}")

    def holds(self, t: Sequence[float], params: ParamSet) -> bool:
        return self.comparator.holds(t[param_index(params, self.param_id)], self.threshold)

    def early_applicable(self, params: ParamSet) -> bool:
        """Can a single service (or a partial composition) already violate this?

        Only when the parameter is monotone toward worse and the bound is the
        one that composing more services can push a value across.
        """
        p = params[param_index(params, self.param_id)]
        if not p.monotone:
            return False
        upper_bound = self.comparator in (Comparator.LT, Comparator.LE)
        return upper_bound != p.positive

    def __str__(self):
        return f"{self.scope.value} {self.param_id} {self.comparator.symbol} {self.threshold:g}"


def check_constraints(t: Sequence[float], cs: Iterable[Constraint], params: ParamSet) -> bool:
    return all(c.holds(t, params) for c in cs)


def early_constraints(cs: Iterable[Constraint], params: ParamSet) -> tuple[Constraint, ...]:
    return tuple(c for c in cs if c.early_applicable(params))


@dataclass(frozen=True)
class Service:
    id: str
    inputs: frozenset
    outputs: frozenset
    qos: tuple

    def __post_init__(self):
        object.__setattr__(self, "inputs", frozenset(self.inputs))
        object.__setattr__(self, "outputs", frozenset(self.outputs))
        object.__setattr__(self, "qos", tuple(float(v) for v in self.qos))
        if not self.inputs or not self.outputs:
            raise ValueError(f"service {self.id} needs non-empty inputs and outputs")


@dataclass(frozen=True)
class Repository:
    params: ParamSet
    services: tuple
    provenance: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        object.__setattr__(self, "services", tuple(self.services))
        seen = set()
        for s in self.services:
            if s.id in seen:
                raise ValueError(f"duplicate service id {s.id!r}")
            seen.add(s.id)
            _check_dims(self.params, s.qos)

    def by_id(self) -> dict[str, Service]:
        return {s.id: s for s in self.services}


@dataclass(frozen=True)
class Query:
    inputs: frozenset
    outputs: frozenset
    locals: tuple = ()
    globals: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "inputs", frozenset(self.inputs))
        object.__setattr__(self, "outputs", frozenset(self.outputs))
        object.__setattr__(self, "locals", tuple(self.locals))
        object.__setattr__(self, "globals", tuple(self.globals))
        if not self.outputs:
            raise ValueError("query needs at least one requested output")
        given = self.outputs & self.inputs
        if given:
            raise ValueError(f"requested outputs already given as inputs: {sorted(given)}")
        for c in self.locals:
            if c.scope is not Scope.LOCAL:
                raise ValueError(f"{c} listed as local")
        for c in self.globals:
            if c.scope is not Scope.GLOBAL:
                raise ValueError(f"{c} listed as global")

    def validate_params(self, params: ParamSet) -> None:
        for c in self.locals + self.globals:
            param_index(params, c.param_id)


# -- solutions -----------------------------------------------------------------

@dataclass(frozen=True)
class SolutionNode:
    id: str             # graph node id (a representative or a raw service)
    service: str        # concrete service whose tuple was chosen
    inputs: frozenset
    outputs: frozenset
    qos: tuple
    tuple_index: int = 0
    layer: int | None = None


@dataclass(frozen=True)
class SolutionGraph:
    nodes: tuple
    edges: tuple        # (src, dst, frozenset of names)

    @property
    def node_ids(self) -> tuple:
        return tuple(n.id for n in self.nodes)

    @property
    def services(self) -> tuple:
        return tuple(n.service for n in self.nodes)

    def stages(self) -> list[list[SolutionNode]]:
        if self.nodes and all(n.layer is not None for n in self.nodes):
            layer = {n.id: n.layer for n in self.nodes}
        else:
            layer = _longest_path_layers(self)
        out: dict[int, list[SolutionNode]] = {}
        for n in self.nodes:
            out.setdefault(layer[n.id], []).append(n)
        return [sorted(out[k], key=lambda n: n.id) for k in sorted(out)]

    def to_dict(self) -> dict:
        return {
            "stages": [[{"node": n.id, "service": n.service, "qos": list(n.qos)} for n in st]
                       for st in self.stages()],
            "edges": [[u, v, sorted(names)] for u, v, names in self.edges],
        }


def _longest_path_layers(s: SolutionGraph) -> dict[str, int]:
    preds: dict[str, set[str]] = {n.id: set() for n in s.nodes}
    for u, v, _ in s.edges:
        if u == v:
            raise InvalidSolutionError(f"self loop on {u}")
        preds[v].add(u)
    layer: dict[str, int] = {}
    visiting: set[str] = set()

    def visit(v: str) -> int:
        if v in layer:
            return layer[v]
        if v in visiting:
            raise InvalidSolutionError(f"cycle through {v}")
        visiting.add(v)
        layer[v] = 1 + max((visit(u) for u in preds[v]), default=0)
        visiting.discard(v)
        return layer[v]

    for n in s.nodes:
        visit(n.id)
    return layer


def solution_qos(s: SolutionGraph, params: ParamSet) -> tuple:
    """QoS of a solution: parallel composition within a stage, sequential across."""
    return compose_stages([[n.qos for n in st] for st in s.stages()], params)


def solution_from_services(services: Sequence[Service], query: Query | None = None,
                           layers: dict[str, int] | None = None) -> SolutionGraph:
    """Build a SolutionGraph from concrete services, deriving provision edges.

    Query inputs never create edges.  Without ``layers`` the stages follow the
    solution's own longest-path layering.
    """
    given = query.inputs if query is not None else frozenset()
    nodes = tuple(SolutionNode(s.id, s.id, s.inputs, s.outputs, s.qos, 0,
                               None if layers is None else layers[s.id])
                  for s in sorted(services, key=lambda s: s.id))
    edges = []
    for u in nodes:
        for v in nodes:
            if u.id == v.id:
                continue
            names = (u.outputs & v.inputs) - given
            if names and (layers is None or layers[u.id] < layers[v.id]):
                edges.append((u.id, v.id, frozenset(names)))
    return SolutionGraph(nodes, tuple(sorted(edges, key=lambda e: (e[0], e[1]))))


def is_activation_valid(s: SolutionGraph, query: Query) -> bool:
    """Replay activation: every node's inputs must be available when it runs."""
    try:
        stages = s.stages()
    except InvalidSolutionError:
        return False
    if not s.nodes:
        return False
    provided: dict[str, set[str]] = {n.id: set() for n in s.nodes}
    for u, v, names in s.edges:
        provided[v] |= set(names)
    available = set(query.inputs)
    for st in stages:
        for n in st:
            need = n.inputs - query.inputs
            if not need <= provided[n.id] or not need <= available:
                return False
        for n in st:
            available |= n.outputs
    return query.outputs <= available


@dataclass(frozen=True)
class FrontEntry:
    qos: tuple
    solution: SolutionGraph | None = None


@dataclass(frozen=True)
class FrontSet:
    entries: tuple
    stats: dict = field(default_factory=dict, compare=False)

    @property
    def tuples(self) -> list[tuple]:
        return [e.qos for e in self.entries]

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def make_front(entries: Iterable[FrontEntry], params: ParamSet, stats: dict | None = None) -> FrontSet:
    kept = non_dominated_items(entries, lambda e: e.qos, params)
    return FrontSet(tuple(kept), dict(stats or {}))
