"""Comparison statistics between two solution sets or runs."""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .model import EQ_TOL, ParamSet, non_dominated, tuples_equal


def utility_array(values, params: ParamSet) -> np.ndarray:
    """Vectorised :func:`utility` over an (n, d) array."""
    v = np.asarray(values, dtype=float).reshape(-1, len(params))
    scores = np.zeros(len(v))
    for j, p in enumerate(params):
        col = v[:, j]
        fin = np.isfinite(col)
        hi = col[fin].max() if fin.any() else 0.0
        lo = col[fin].min() if fin.any() else 0.0
        if hi == lo:
            nv = np.ones(len(col))
        else:
            with np.errstate(invalid="ignore"):
                nv = (col - lo) / (hi - lo) if p.positive else (hi - col) / (hi - lo)
        inf = np.isinf(col)
        nv[inf] = np.where((col[inf] > 0) == p.positive, 1.0, 0.0)
        scores += nv
    return scores


def utility(candidates, params: ParamSet) -> list[float]:
    """Sum of per-parameter normalised values over the candidate pool.

    For each parameter A is the pool maximum and B the minimum; a value maps
    to (v - B)/(A - B) when larger is better, (A - v)/(A - B) otherwise, and
    to 1 when A == B.  Infinite values (identity tuples) saturate: +inf is the
    best a positive parameter can be and the worst for a negative one.
    """
    cands = [tuple(c) for c in candidates]
    if not cands:
        return []
    return utility_array(cands, params).tolist()


def _unique(ts, tol):
    out = []
    for t in ts:
        if not any(tuples_equal(t, u, tol) for u in out):
            out.append(tuple(t))
    return out


def _count_in(ts, pool, tol) -> int:
    return sum(1 for t in ts if any(tuples_equal(t, u, tol) for u in pool))


def commonality_ratio(t1, t2, tol: float = EQ_TOL) -> float:
    a, b = _unique(t1, tol), _unique(t2, tol)
    union = _unique(a + b, tol)
    if not union:
        return 1.0
    return _count_in(a, b, tol) / len(union)


def commonality_nd_ratio(t1, t2, params: ParamSet, tol: float = EQ_TOL) -> tuple[float, float]:
    a, b = _unique(t1, tol), _unique(t2, tol)
    t3 = non_dominated(a + b, params)
    if not t3:
        return (1.0, 1.0)
    return (_count_in(a, t3, tol) / len(t3), _count_in(b, t3, tol) / len(t3))


def average_distance_ratio(t1, t2, params: ParamSet) -> float:
    """mean utility of t1 over mean utility of t2, one shared normalisation."""
    a, b = [tuple(t) for t in t1], [tuple(t) for t in t2]
    if not a or not b:
        raise ValueError("average distance ratio needs two non-empty sets")
    u = utility(a + b, params)
    ua = sum(u[:len(a)]) / len(a)
    ub = sum(u[len(a):]) / len(b)
    if ub == 0:
        if ua == 0:
            return 1.0
        warnings.warn("average distance ratio: second set has zero mean utility; returning +inf", RuntimeWarning)
        return math.inf
    return ua / ub


def speedup(time1: float, time2: float) -> float:
    """time2 / time1: how many times faster run 1 was than run 2."""
    if time1 <= 0:
        raise ValueError("speedup needs a positive time for the first run")
    return time2 / time1


@dataclass(frozen=True)
class ComparisonReport:
    n1: int
    n2: int
    cr: float
    cn1: float
    cn2: float
    ad: float
    speedup: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(d["ad"]):
            d["ad"] = "inf"
        return d


def compare_fronts(t1, t2, params: ParamSet, time1: float | None = None, time2: float | None = None) -> ComparisonReport:
    cn1, cn2 = commonality_nd_ratio(t1, t2, params)
    s = speedup(time1, time2) if time1 is not None and time2 is not None else None
    return ComparisonReport(len(t1), len(t2), commonality_ratio(t1, t2), cn1, cn2,
                            average_distance_ratio(t1, t2, params), s)
