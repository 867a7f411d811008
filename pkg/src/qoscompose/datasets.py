"""Repository and query documents, challenge-format adapters, QoS seeding.

The canonical repository document is JSON::

    {"format": "qoscompose.repository/1",
     "params": ["RT", "T", {"id": "C", "name": "Cost", "direction": "negative",
                           "seq_agg": "sum", "par_agg": "sum"}],
     "services": [{"id": "W1", "inputs": ["i1"], "outputs": ["io4"],
                   "qos": [500, 7, "93%"]}],
     "provenance": {...}}

Parameters may be given as preset ids (RT, T, R, A) or full objects.  QoS
values may be numbers or percent strings.  ``null`` marks a value that still
has to be generated with :func:`gen_qos`.
"""
from __future__ import annotations

import json
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import (
    PRESETS,
    Comparator,
    Constraint,
    QosParamSpec,
    Query,
    Repository,
    Scope,
    Service,
)

REPO_FORMAT = "qoscompose.repository/1"
QUERY_FORMAT = "qoscompose.query/1"


class DatasetError(ValueError):
    pass


def parse_value(v) -> float:
    """Accept 0.93, "0.93" or "93%"; None becomes NaN (to be generated)."""
    if v is None:
        return math.nan
    if isinstance(v, str):
        s = v.strip()
        if s.endswith("%"):
            return float(s[:-1]) / 100.0
        return float(s)
    if isinstance(v, bool):
        raise DatasetError(f"boolean is not a QoS value: {v!r}")
    return float(v)


def parse_param(obj) -> QosParamSpec:
    if isinstance(obj, str):
        if obj not in PRESETS:
            raise DatasetError(f"unknown preset parameter {obj!r}; known: {sorted(PRESETS)}")
        return PRESETS[obj]
    try:
        agg = obj.get("agg")
        return QosParamSpec(obj["id"], obj.get("name", obj["id"]), obj["direction"],
                            obj.get("seq_agg", agg), obj.get("par_agg", obj.get("seq_agg", agg)))
    except (KeyError, ValueError, TypeError) as e:
        raise DatasetError(f"bad parameter declaration {obj!r}: {e}") from None


def parse_canonical(doc) -> Repository:
    if isinstance(doc, (str, Path)):
        doc = json.loads(Path(doc).read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise DatasetError("repository document must be a JSON object")
    fmt = doc.get("format", REPO_FORMAT)
    if fmt != REPO_FORMAT:
        raise DatasetError(f"unsupported repository format {fmt!r}")
    params = tuple(parse_param(p) for p in doc.get("params", ()))
    if not params:
        raise DatasetError("repository declares no QoS parameters")
    raw = doc.get("services")
    if not raw:
        raise DatasetError("repository has no services")
    services, seen = [], set()
    for s in raw:
        sid = s.get("id")
        if not sid:
            raise DatasetError(f"service without id: {s!r}")
        if sid in seen:
            raise DatasetError(f"duplicate service id {sid!r}")
        seen.add(sid)
        qos = s.get("qos", [])
        if len(qos) != len(params):
            raise DatasetError(f"service {sid}: {len(qos)} QoS values for {len(params)} parameters")
        try:
            services.append(Service(sid, s["inputs"], s["outputs"], [parse_value(v) for v in qos]))
        except (KeyError, ValueError) as e:
            raise DatasetError(f"service {sid}: {e}") from None
    return Repository(params, tuple(services), doc.get("provenance"))


def _num(x: float):
    if math.isnan(x):
        return None
    return int(x) if float(x).is_integer() and abs(x) < 2**53 else x


def param_to_dict(p: QosParamSpec) -> dict:
    return {"id": p.id, "name": p.name, "direction": p.direction.value,
            "seq_agg": p.seq_agg.value, "par_agg": p.par_agg.value}


def serialize(repo: Repository) -> dict:
    doc = {
        "format": REPO_FORMAT,
        "params": [param_to_dict(p) for p in repo.params],
        "services": [{"id": s.id, "inputs": sorted(s.inputs), "outputs": sorted(s.outputs),
                      "qos": [_num(v) for v in s.qos]} for s in repo.services],
    }
    if repo.provenance:
        doc["provenance"] = repo.provenance
    return doc


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


_OPS = {"<": "lt", "<=": "le", ">": "gt", ">=": "ge", "lt": "lt", "le": "le", "gt": "gt", "ge": "ge"}


def parse_query(doc) -> Query:
    """Query document: inputs, outputs and a list of constraints, e.g.
    ``{"scope": "local", "param": "R", "op": ">", "value": "70%"}``."""
    if isinstance(doc, (str, Path)):
        doc = json.loads(Path(doc).read_text(encoding="utf-8"))
    try:
        locals_, globals_ = [], []
        for c in doc.get("constraints", ()):
            op = _OPS.get(str(c["op"]).strip())
            if op is None:
                raise DatasetError(f"unknown comparator {c['op']!r}")
            con = Constraint(Scope(c["scope"]), c["param"], Comparator(op), parse_value(c["value"]))
            (locals_ if con.scope is Scope.LOCAL else globals_).append(con)
        return Query(frozenset(doc["inputs"]), frozenset(doc["outputs"]), tuple(locals_), tuple(globals_))
    except (KeyError, TypeError) as e:
        raise DatasetError(f"bad query document: missing {e}") from None


def query_to_dict(q: Query) -> dict:
    return {
        "format": QUERY_FORMAT,
        "inputs": sorted(q.inputs),
        "outputs": sorted(q.outputs),
        "constraints": [{"scope": c.scope.value, "param": c.param_id, "op": c.comparator.symbol,
                         "value": c.threshold} for c in q.locals + q.globals],
    }


# -- Web Service Challenge 2009-10 ---------------------------------------------

def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _parse_xml(path) -> ET.Element:
    try:
        return ET.parse(path).getroot()
    except ET.ParseError as e:
        line, col = e.position
        raise DatasetError(f"{path}:{line}:{col}: malformed XML ({e})") from None


@dataclass
class Taxonomy:
    parent: dict = field(default_factory=dict)      # concept -> parent concept (None at roots)
    instance_of: dict = field(default_factory=dict)  # instance -> concept

    def concept(self, name: str) -> str:
        if name in self.parent:
            return name
        if name in self.instance_of:
            return self.instance_of[name]
        raise DatasetError(f"unknown concept or instance {name!r}")

    def ancestors(self, concept: str) -> list[str]:
        out = []
        while concept is not None:
            out.append(concept)
            concept = self.parent[concept]
        return out


def parse_taxonomy(path) -> Taxonomy:
    tax = Taxonomy()

    def walk(el, parent):
        for child in el:
            tag = _local(child.tag).lower()
            name = child.get("name")
            if tag == "concept" and name:
                tax.parent[name] = parent
                walk(child, name)
            elif tag == "instance" and name:
                if parent is None:
                    raise DatasetError(f"instance {name!r} outside any concept")
                tax.instance_of[name] = parent
            else:
                walk(child, parent)

    walk(_parse_xml(path), None)
    return tax


def _names(el) -> list[str]:
    return [x.get("name") for x in el.iter() if _local(x.tag).lower() in ("instance", "concept") and x.get("name")]


def _parse_wsc_qos(path) -> dict[str, dict[str, float]]:
    """Best effort: any element named like a service with a ``name`` attribute,
    whose attributes or descendants mention response time / throughput."""
    keys = {"responsetime": "RT", "throughput": "T"}
    found: dict[str, dict[str, float]] = {}
    for el in _parse_xml(path).iter():
        tag = _local(el.tag).lower()
        sid = el.get("name") or el.get("serviceName")
        if tag not in ("service", "servicedefinition", "sla") or not sid:
            continue
        vals = {}
        for k, v in el.attrib.items():
            if k.lower() in keys:
                vals[keys[k.lower()]] = float(v)
        for d in el.iter():
            label = (d.get("name") or _local(d.tag)).lower()
            if label in keys and keys[label] not in vals:
                text = d.get("value") or "".join(d.itertext()).strip()
                try:
                    vals[keys[label]] = float(text)
                except ValueError:
                    pass
        if vals:
            found.setdefault(sid, {}).update(vals)
    return found


def parse_wsc(services_file, taxonomy_file, qos_file=None, params=("RT", "T", "R", "A"),
              query_file=None) -> Repository | tuple[Repository, Query]:
    """Read a challenge repository.  Provided concepts are expanded to all their
    ancestors, so a required concept is met exactly when some provided concept
    equals it or descends from it.  Values not found in ``qos_file`` are left
    missing (NaN) for :func:`gen_qos`."""
    tax = parse_taxonomy(taxonomy_file)
    specs = tuple(parse_param(p) for p in params)
    qos = _parse_wsc_qos(qos_file) if qos_file else {}
    services = []
    for el in _parse_xml(services_file).iter():
        if _local(el.tag).lower() != "service" or not el.get("name"):
            continue
        ins, outs = set(), set()
        for part in el:
            kind = _local(part.tag).lower()
            names = [tax.concept(n) for n in _names(part)]
            if kind == "inputs":
                ins.update(names)
            elif kind == "outputs":
                for c in names:
                    outs.update(tax.ancestors(c))
        sid = el.get("name")
        vals = qos.get(sid, {})
        services.append(Service(sid, ins, outs, [vals.get(p.id, math.nan) for p in specs]))
    if not services:
        raise DatasetError(f"{services_file}: no services found")
    repo = Repository(specs, tuple(services), {"source": "wsc", "services": str(services_file)})
    if query_file is None:
        return repo
    root = _parse_xml(query_file)
    q_in, q_out = set(), set()
    for part in root.iter():
        kind = _local(part.tag).lower()
        if kind in ("provided", "inputs"):
            for n in _names(part):
                q_in.update(tax.ancestors(tax.concept(n)))
        elif kind in ("wanted", "outputs"):
            q_out.update(tax.concept(n) for n in _names(part))
    return repo, Query(frozenset(q_in), frozenset(q_out - q_in))


# -- ICEBE 2005 -----------------------------------------------------------------

def parse_icebe(directory, pattern: str = "**/*.wsdl", part_attr: str = "name",
                params=("RT", "T", "R", "A")) -> Repository:
    """Read WSDL descriptions: one service per portType operation, named after
    the file (plus ``#operation`` when a file declares several)."""
    directory = Path(directory)
    files = sorted(p for p in directory.glob(pattern) if p.is_file())
    if not files:
        raise DatasetError(f"{directory}: no files match {pattern!r}")
    specs = tuple(parse_param(p) for p in params)
    services = []
    for f in files:
        root = _parse_xml(f)
        messages = {}
        for m in root.iter():
            if _local(m.tag) == "message" and m.get("name"):
                messages[m.get("name")] = {p.get(part_attr) or p.get("name")
                                           for p in m if _local(p.tag) == "part"}
        ops = [op for pt in root.iter() if _local(pt.tag) == "portType"
               for op in pt if _local(op.tag) == "operation"]
        for op in ops:
            io = {"input": set(), "output": set()}
            for el in op:
                kind = _local(el.tag)
                if kind in io and el.get("message"):
                    ref = el.get("message").split(":")[-1]
                    if ref not in messages:
                        raise DatasetError(f"{f}: operation {op.get('name')} references missing message {ref!r}")
                    io[kind] |= {n.split(":")[-1] for n in messages[ref] if n}
            sid = f.stem if len(ops) == 1 else f"{f.stem}#{op.get('name')}"
            if io["input"] and io["output"]:
                services.append(Service(sid, io["input"], io["output"], [math.nan] * len(specs)))
    if not services:
        raise DatasetError(f"{directory}: no operations with both inputs and outputs")
    return Repository(specs, tuple(services), {"source": "icebe", "directory": str(directory)})


# -- QoS generation --------------------------------------------------------------

DEFAULT_RANGES = {
    "RT": (100, 2000, "integer"),
    "T": (1, 20, "integer"),
    "R": (0.65, 0.99, "uniform"),
    "A": (0.65, 0.99, "uniform"),
}


@dataclass(frozen=True)
class QosGenConfig:
    seed: int
    ranges: dict = field(default_factory=dict)   # param id -> (lo, hi, "uniform" | "integer")
    overwrite: bool = False

    def range_for(self, pid: str):
        lo, hi, dist = self.ranges.get(pid) or DEFAULT_RANGES.get(pid) or (0.0, 1.0, "uniform")
        if lo > hi:
            raise ValueError(f"range for {pid}: lo {lo} > hi {hi}")
        if dist not in ("uniform", "integer"):
            raise ValueError(f"range for {pid}: unknown distribution {dist!r}")
        return lo, hi, dist


def gen_qos(repo: Repository, cfg: QosGenConfig) -> Repository:
    """Fill missing (or, with ``overwrite``, all) QoS values deterministically."""
    rng = np.random.default_rng(cfg.seed)
    ranges = {p.id: cfg.range_for(p.id) for p in repo.params}
    services = []
    for s in repo.services:
        vals = []
        for p, old in zip(repo.params, s.qos):
            lo, hi, dist = ranges[p.id]
            # always draw so the stream does not depend on which values were missing
            new = float(rng.integers(lo, hi, endpoint=True)) if dist == "integer" else round(float(rng.uniform(lo, hi)), 4)
            vals.append(new if cfg.overwrite or math.isnan(old) else old)
        services.append(Service(s.id, s.inputs, s.outputs, vals))
    prov = dict(repo.provenance or {})
    prov["gen_qos"] = {"seed": cfg.seed, "overwrite": cfg.overwrite,
                       "ranges": {k: list(v) for k, v in sorted(ranges.items())}}
    return Repository(repo.params, tuple(services), prov)


def missing_values(repo: Repository) -> list[str]:
    return [s.id for s in repo.services if any(math.isnan(v) for v in s.qos)]
