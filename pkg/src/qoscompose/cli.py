"""Command-line front end.

Every subcommand writes one JSON report (``qoscompose.report/1``, sorted
keys) to stdout or ``--out``; diagnostics go to stderr.  Set
``QOSCOMPOSE_LOG=debug`` (or info, warning) for verbose traces.

Exit codes:
  0  success
  1  verify found a mismatch, or an unexpected library error
  2  unreadable or invalid input: bad path, malformed document, bad flags
  3  no feasible solution (outputs reachable, constraints reject everything)
  4  no solution (query outputs cannot be produced at all)
  5  resource limit reached (LPG node cap)
  6  verify refused: the instance exceeds the oracle limits
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import secrets
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

from .beam import BeamConfig, solve_beam
from .datasets import (
    DatasetError,
    QosGenConfig,
    dumps,
    gen_qos,
    missing_values,
    param_to_dict,
    parse_canonical,
    parse_param,
    parse_query,
    query_to_dict,
    serialize,
)
from .depgraph import build_graph
from .metrics import compare_fronts
from .model import (
    EQ_TOL,
    NoFeasibleSolutionError,
    NoSolutionError,
    QosComposeError,
    Repository,
    ResourceLimitError,
    non_dominated,
    tuples_equal,
)
from .nsga import GaConfig, evolve
from .optimal import solve_optimal
from .oracle import OracleLimitExceeded, OracleLimits, oracle_front
from .preprocess import preprocess, singletons, to_document

REPORT_SCHEMA = "qoscompose.report/1"
BENCH_WIDTHS = (100, 300, 500)

EXIT_OK, EXIT_MISMATCH, EXIT_INPUT, EXIT_NO_FEASIBLE, EXIT_NO_SOLUTION, EXIT_RESOURCE, EXIT_REFUSED = range(7)

log = logging.getLogger("qoscompose")


class InputError(Exception):
    """Bad path or malformed document; maps to exit code 2."""


# -- plumbing -------------------------------------------------------------------

def _setup_logging(verbose: int) -> None:
    level = os.environ.get("QOSCOMPOSE_LOG", "").strip().upper()
    if verbose:
        level = "DEBUG" if verbose > 1 else "INFO"
    logging.basicConfig(stream=sys.stderr, level=getattr(logging, level, logging.WARNING) if level else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"no such file: {path}") from None
    except (OSError, UnicodeDecodeError) as e:
        raise InputError(f"cannot read {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from None


def _load_repo(path) -> Repository:
    try:
        return parse_canonical(_read_json(path))
    except (DatasetError, ValueError) as e:
        raise InputError(f"{path}: {e}") from None


def _load_query(path):
    try:
        return parse_query(_read_json(path))
    except (DatasetError, ValueError) as e:
        raise InputError(f"{path}: {e}") from None


def _emit(doc: dict, out: str | None) -> None:
    text = dumps(doc)
    if out:
        _write_atomic(Path(out), text)
    else:
        sys.stdout.write(text)


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _pick_seed(seed: int | None) -> int:
    if seed is None:
        seed = secrets.randbits(32)
        print(f"seed: {seed}", file=sys.stderr)
    return seed


def _report(command: str, **fields) -> dict:
    return {"schema": REPORT_SCHEMA, "command": command, **fields}


def _ms(t0: float) -> float:
    return round((time.perf_counter() - t0) * 1000.0, 3)


def _front_doc(front) -> list[dict]:
    return [{"qos": list(e.qos), "services": sorted(e.solution.services), "solution": e.solution.to_dict()}
            for e in front]


def _status(exc: Exception) -> tuple[str, int]:
    if isinstance(exc, NoSolutionError):
        return "no_solution", EXIT_NO_SOLUTION
    if isinstance(exc, NoFeasibleSolutionError):
        return "no_feasible_solution", EXIT_NO_FEASIBLE
    if isinstance(exc, ResourceLimitError):
        return "resource_limit", EXIT_RESOURCE
    return "error", EXIT_MISMATCH


# -- solving ----------------------------------------------------------------------

def _algo_config(args) -> tuple[str, object]:
    if args.algo == "optimal":
        return "optimal", {"max_lpg_nodes": args.max_lpg_nodes, "lookahead": not args.no_lookahead}
    if args.algo == "beam":
        return "beam", BeamConfig(args.beam_width, max_lpg_nodes=args.max_lpg_nodes, lookahead=not args.no_lookahead)
    return "nsga", GaConfig(args.pop, args.iters, args.pc, args.pm, args.seed, args.workers)


def _config_doc(cfg) -> dict:
    d = dict(cfg) if isinstance(cfg, dict) else asdict(cfg)
    d.pop("workers", None)      # never affects results, so keep reports identical across worker counts
    return d


def run_solver(algo: str, cfg, g, q):
    if algo == "optimal":
        return solve_optimal(g, q, max_lpg_nodes=cfg["max_lpg_nodes"], lookahead=cfg["lookahead"])
    if algo == "beam":
        return solve_beam(g, q, cfg=cfg)
    return evolve(g, q, cfg=cfg)


def solve_instance(repo: Repository, q, algo: str, cfg, use_preprocess: bool = True) -> tuple[dict, int]:
    """Full pipeline for one query; returns the report body and exit code."""
    body: dict = {"algorithm": {"id": algo, "config": _config_doc(cfg)},
                  "params": [param_to_dict(p) for p in repo.params], "query": query_to_dict(q)}
    timings: dict = {}
    t0 = time.perf_counter()
    crepo = preprocess(repo) if use_preprocess else singletons(repo)
    timings["preprocess"] = _ms(t0)
    body["reduction"] = crepo.stats.to_dict()
    code = EXIT_OK
    try:
        t1 = time.perf_counter()
        g = build_graph(crepo, q)
        timings["graph"] = _ms(t1)
        body["constraint_log"] = [{"node": n, "qos": list(t), "source": s, "violates": why}
                                  for n, t, s, why in g.removed_tuples]
        body["graph"] = {"levels": g.level_sizes(), "real_nodes": len(g.real_nodes()),
                         "dropped_edges": sorted([u, v] for u, v in g.dropped_edges)}
        t2 = time.perf_counter()
        front = run_solver(algo, cfg, g, q)
        timings["solve"] = _ms(t2)
        body.update(status="ok", front=_front_doc(front), stats=front.stats)
    except QosComposeError as e:
        status, code = _status(e)
        log.error("%s", e)
        body.update(status=status, message=str(e), front=[])
    timings["total"] = _ms(t0)
    body["timings_ms"] = timings
    return body, code


def _strip_timings(doc: dict, keep: bool) -> dict:
    if not keep:
        doc.pop("timings_ms", None)
    return doc


# -- subcommands ------------------------------------------------------------------

def cmd_preprocess(args) -> int:
    repo = _load_repo(args.repository)
    t0 = time.perf_counter()
    crepo = preprocess(repo)
    doc = _report("preprocess", reduction=crepo.stats.to_dict(), clustered=to_document(crepo),
                  timings_ms={"preprocess": _ms(t0)})
    _emit(_strip_timings(doc, args.with_timings), args.out)
    return EXIT_OK


def cmd_solve(args) -> int:
    repo, q = _load_repo(args.repository), _load_query(args.query)
    if missing_values(repo):
        raise InputError(f"{len(missing_values(repo))} services have missing QoS values; run gen-qos first")
    if args.algo == "nsga":
        args.seed = _pick_seed(args.seed)
    algo, cfg = _algo_config(args)
    body, code = solve_instance(repo, q, algo, cfg, not args.no_preprocess)
    doc = _report("solve", seed=args.seed if algo == "nsga" else None, **body)
    _emit(_strip_timings(doc, args.with_timings), args.out)
    return code


def _report_front(doc: dict, path: str):
    if doc.get("schema") != REPORT_SCHEMA or "front" not in doc or "params" not in doc:
        raise InputError(f"{path}: not a solve report")
    try:
        params = tuple(parse_param(p) for p in doc["params"])
    except DatasetError as e:
        raise InputError(f"{path}: {e}") from None
    return params, [tuple(e["qos"]) for e in doc["front"]]


def cmd_compare(args) -> int:
    a, b = _read_json(args.report_a), _read_json(args.report_b)
    pa, ta = _report_front(a, args.report_a)
    pb, tb = _report_front(b, args.report_b)
    if [p.id for p in pa] != [p.id for p in pb]:
        raise InputError(f"parameter sets differ: {[p.id for p in pa]} vs {[p.id for p in pb]}")
    if not ta or not tb:
        raise InputError("both reports need a non-empty front")
    time_a = (a.get("timings_ms") or {}).get("solve")
    time_b = (b.get("timings_ms") or {}).get("solve")
    rep = compare_fronts(ta, tb, pa, time_a, time_b) if time_a and time_b else compare_fronts(ta, tb, pa)
    doc = _report("compare", a=a.get("algorithm"), b=b.get("algorithm"), metrics=rep.to_dict())
    _emit(doc, args.out)
    return EXIT_OK


def _parse_limits(text: str | None) -> OracleLimits:
    if not text:
        return OracleLimits()
    fields = {"services": "max_services", "params": "max_params", "combinations": "max_combinations"}
    kw = {}
    for part in text.split(","):
        key, _, val = part.partition("=")
        if key.strip() not in fields or not val.strip().isdigit():
            raise InputError(f"bad --limits entry {part!r}; use services=N,params=N,combinations=N")
        kw[fields[key.strip()]] = int(val)
    return OracleLimits(**kw)


def _same_front(a, b) -> bool:
    a, b = sorted(a), sorted(b)
    return len(a) == len(b) and all(tuples_equal(x, y, EQ_TOL) for x, y in zip(a, b))


def check_instance(repo: Repository, q, limits: OracleLimits) -> tuple[bool, list, list]:
    """Oracle on the raw repository against the optimal solver on the preprocessed one."""
    want = oracle_front(repo, q, limits=limits).tuples
    try:
        got = solve_optimal(build_graph(preprocess(repo), q), q).tuples
    except (NoSolutionError, NoFeasibleSolutionError):
        got = []
    return _same_front(want, got), want, got


def minimize(repo: Repository, q, limits: OracleLimits) -> Repository:
    """Greedily drop services while the two fronts still disagree."""
    services = list(repo.services)
    changed = True
    while changed:
        changed = False
        for s in list(services):
            rest = [x for x in services if x is not s]
            if not rest:
                continue
            cand = Repository(repo.params, tuple(rest), repo.provenance)
            try:
                same, _, _ = check_instance(cand, q, limits)
            except QosComposeError:
                continue
            if not same:
                services, changed = rest, True
    return Repository(repo.params, tuple(services), repo.provenance)


def _counterexample(repo, q, limits, want, got) -> dict:
    small = minimize(repo, q, limits)
    same, w, g = check_instance(small, q, limits)
    return {"oracle_front": [list(t) for t in want], "optimal_front": [list(t) for t in got],
            "minimized": {"repository": serialize(small), "query": query_to_dict(q),
                          "oracle_front": [list(t) for t in w], "optimal_front": [list(t) for t in g]}}


def cmd_verify(args) -> int:
    limits = _parse_limits(args.limits)
    if args.random is not None:
        return _verify_random(args, limits)
    if not args.repository or not args.query:
        raise InputError("verify needs REPOSITORY and QUERY, or --random N")
    repo, q = _load_repo(args.repository), _load_query(args.query)
    try:
        same, want, got = check_instance(repo, q, limits)
    except OracleLimitExceeded as e:
        print(f"refused: {e}", file=sys.stderr)
        _emit(_report("verify", status="refused", message=str(e)), args.out)
        return EXIT_REFUSED
    doc = _report("verify", status="pass" if same else "mismatch", front=[list(t) for t in want])
    if not same:
        doc["counterexample"] = _counterexample(repo, q, limits, want, got)
        print("mismatch between oracle and optimal fronts", file=sys.stderr)
    _emit(doc, args.out)
    return EXIT_OK if same else EXIT_MISMATCH


def _verify_random(args, limits: OracleLimits) -> int:
    from .synthetic import random_instance

    base = _pick_seed(args.seed)
    passed, refused, failures = 0, 0, []
    for i in range(args.random):
        repo, q = random_instance(base + i)
        try:
            same, want, got = check_instance(repo, q, limits)
        except OracleLimitExceeded:
            refused += 1
            continue
        if same:
            passed += 1
        else:
            failures.append({"seed": base + i, **_counterexample(repo, q, limits, want, got)})
    checked = args.random - refused
    doc = _report("verify", status="pass" if not failures else "mismatch", seed=base, instances=args.random,
                  passed=passed, refused=refused, pass_rate=passed / checked if checked else 1.0,
                  failures=failures)
    print(f"{passed}/{checked} instances agree ({refused} refused)", file=sys.stderr)
    _emit(doc, args.out)
    return EXIT_OK if not failures else EXIT_MISMATCH


def _load_suite(path) -> list[dict]:
    doc = _read_json(path)
    base = Path(path).parent
    items = doc.get("instances") if isinstance(doc, dict) else None
    if not isinstance(items, list) or not items:
        raise InputError(f"{path}: expected {{\"instances\": [{{name, repository, query}}, ...]}}")
    out, seen = [], set()
    for it in items:
        try:
            name = str(it["name"])
            rp, qp = base / it["repository"], base / it["query"]
        except (KeyError, TypeError):
            raise InputError(f"{path}: every instance needs name, repository and query") from None
        if name in seen or not name or "/" in name:
            raise InputError(f"{path}: bad or duplicate instance name {name!r}")
        seen.add(name)
        out.append({"name": name, "repository": str(rp), "query": str(qp)})
    return out


def bench_instance(item: dict, widths, ga: GaConfig, max_lpg_nodes: int | None, skip_optimal: bool) -> dict:
    """All runs for one suite instance plus comparison rows against a reference front."""
    repo, q = _load_repo(item["repository"]), _load_query(item["query"])
    runs: dict[str, dict] = {}
    plan = [] if skip_optimal else [("optimal", "optimal", {"max_lpg_nodes": max_lpg_nodes, "lookahead": True})]
    plan += [(f"beam-{w}", "beam", BeamConfig(w, max_lpg_nodes=max_lpg_nodes)) for w in widths]
    plan += [("nsga", "nsga", ga)]
    for label, algo, cfg in plan:
        body, _ = solve_instance(repo, q, algo, cfg)
        runs[label] = {"algorithm": body["algorithm"], "status": body["status"],
                       "front": [e["qos"] for e in body["front"]], "n": len(body["front"]),
                       "seconds": body["timings_ms"]["solve"] / 1000.0 if "solve" in body["timings_ms"] else None,
                       "reduction": body["reduction"]}
    ok = {k: r for k, r in runs.items() if r["status"] == "ok" and r["front"]}
    params = repo.params
    if "optimal" in ok:
        ref_name, ref = "optimal", [tuple(t) for t in ok["optimal"]["front"]]
    else:
        ref_name = "union"
        ref = non_dominated([tuple(t) for r in ok.values() for t in r["front"]], params)
    rows = {}
    for label, r in ok.items():
        if label == "optimal":
            continue
        rep = compare_fronts(ref, [tuple(t) for t in r["front"]], params)
        row = {"n": rep.n2, "ad": rep.to_dict()["ad"], "cr": rep.cr, "cn_reference": rep.cn1, "cn": rep.cn2}
        if ref_name == "optimal" and runs["optimal"]["seconds"] and r["seconds"]:
            row["speedup"] = runs["optimal"]["seconds"] / r["seconds"]
        rows[label] = row
    return {"name": item["name"], "runs": runs, "reference": ref_name, "rows": rows}


def _bench_one(job):
    item, widths, ga, cap, skip, keep_time, path = job
    doc = _report("bench", **bench_instance(item, widths, ga, cap, skip))
    if not keep_time:
        for r in doc["runs"].values():
            r.pop("seconds", None)
        for row in doc["rows"].values():
            row.pop("speedup", None)
    _write_atomic(Path(path), dumps(doc))
    return item["name"]


def cmd_bench(args) -> int:
    suite = _load_suite(args.suite)
    seed = _pick_seed(args.seed)
    ga = GaConfig(args.pop, args.iters, args.pc, args.pm, seed, args.workers)
    widths = tuple(args.widths) if args.widths else BENCH_WIDTHS
    out_dir = Path(args.out_dir)
    jobs, done = [], []
    for item in suite:
        path = out_dir / f"{item['name']}.json"
        if path.exists() and not args.force:
            log.info("skipping %s: report exists", item["name"])
            done.append(item["name"])
            continue
        jobs.append((item, widths, ga, args.max_lpg_nodes, args.skip_optimal, args.with_timings, str(path)))
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            done += list(ex.map(_bench_one, jobs))
    else:
        done += [_bench_one(j) for j in jobs]
    doc = _report("bench", seed=seed, reports={n: f"{n}.json" for n in sorted(done)})
    _emit(doc, args.out)
    return EXIT_OK


def _parse_range(text: str):
    try:
        pid, spec = text.split("=", 1)
        parts = spec.split(":")
        lo, hi = float(parts[0]), float(parts[1])
        dist = parts[2] if len(parts) > 2 else "uniform"
    except (ValueError, IndexError):
        raise argparse.ArgumentTypeError(f"bad range {text!r}; use PARAM=LO:HI[:uniform|integer]") from None
    return pid, (lo, hi, dist)


def cmd_gen_qos(args) -> int:
    repo = _load_repo(args.repository)
    seed = _pick_seed(args.seed)
    try:
        cfg = QosGenConfig(seed, dict(args.range or ()), args.overwrite)
        for p in repo.params:
            cfg.range_for(p.id)
    except ValueError as e:
        raise InputError(str(e)) from None
    _emit(serialize(gen_qos(repo, cfg)), args.out)
    return EXIT_OK


# -- argument parsing -------------------------------------------------------------

def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _ga_flags(p: argparse.ArgumentParser) -> None:
    d = GaConfig()
    p.add_argument("--pop", type=int, default=d.population, help="NSGA population size")
    p.add_argument("--iters", type=int, default=d.iterations, help="NSGA generations")
    p.add_argument("--pc", type=float, default=d.crossover_prob, help="crossover probability")
    p.add_argument("--pm", type=float, default=d.mutation_prob, help="mutation probability")
    p.add_argument("--workers", type=_positive, default=1, help="processes for fitness evaluation")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qoscompose", description="QoS-aware service composition fronts.",
                                 formatter_class=argparse.RawDescriptionHelpFormatter, epilog=__doc__.split("\n\n", 2)[2])
    ap.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="cluster equivalent services and reduce each cluster to its skyline")
    p.add_argument("repository")
    p.add_argument("--out")
    p.add_argument("--with-timings", action="store_true")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("solve", help="compute a front with the optimal, beam or NSGA solver")
    p.add_argument("repository")
    p.add_argument("query")
    p.add_argument("--algo", choices=("optimal", "beam", "nsga"), default="optimal")
    p.add_argument("--beam-width", type=_positive, default=BeamConfig().beam_width)
    p.add_argument("--max-lpg-nodes", type=int, default=200_000)
    p.add_argument("--no-lookahead", action="store_true", help="disable optimistic upstream pruning")
    p.add_argument("--no-preprocess", action="store_true", help="one representative per raw service")
    _ga_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--with-timings", action="store_true", help="include wall-clock timings (not reproducible)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("compare", help="CR, CN, AD and speed-up between two solve reports")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("verify", help="check the optimal solver against brute-force enumeration")
    p.add_argument("repository", nargs="?")
    p.add_argument("query", nargs="?")
    p.add_argument("--limits", help="services=15,params=3,combinations=1000000")
    p.add_argument("--random", type=int, metavar="N", help="check N seeded random instances instead")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="run beam widths and NSGA over a suite, one report per instance")
    p.add_argument("suite", help='JSON file: {"instances": [{"name", "repository", "query"}]}')
    p.add_argument("--out-dir", required=True)
    p.add_argument("--widths", type=_positive, nargs="+")
    _ga_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-lpg-nodes", type=int, default=200_000)
    p.add_argument("--skip-optimal", action="store_true")
    p.add_argument("--jobs", type=_positive, default=1, help="instances run in parallel")
    p.add_argument("--force", action="store_true", help="rerun instances that already have a report")
    p.add_argument("--with-timings", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen-qos", help="fill missing QoS values from a seeded generator")
    p.add_argument("repository")
    p.add_argument("--seed", type=int)
    p.add_argument("--range", type=_parse_range, action="append", metavar="PARAM=LO:HI[:DIST]")
    p.add_argument("--overwrite", action="store_true", help="regenerate every value, not just missing ones")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_qos)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose)
    try:
        return args.func(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except QosComposeError as e:
        status, code = _status(e)
        print(f"error ({status}): {e}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
