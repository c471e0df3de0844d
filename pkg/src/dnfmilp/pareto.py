"""Sensitivity/specificity trade-off curve over a clause pool.

Two master problems select at most K pooled clauses:

* :func:`max_sens_given_spec` maximizes sensitivity subject to a lower bound
  on specificity;
* :func:`max_spec_given_sens` is the mirror image.

Both break ties lexicographically in favour of the other metric, so every
point they return is non-dominated among pool selections.  The curve starts from
the two extreme points and keeps probing between adjacent points.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import List, Optional, Tuple, Union

from .dataset import BinaryDataset
from .ireland import ClausePool, master_skeleton, selected_rule
from .milp import MilpModel, Status, solve_branch_and_bound
from .rules import DnfRule, confusion, sensitivity, specificity


class ParetoError(ValueError):
    pass


@dataclass(frozen=True)
class ParetoPoint:
    sensitivity: Fraction
    specificity: Fraction
    rule: DnfRule
    tp: int
    tn: int
    seconds: float = 0.0
    optimal: bool = True

    @property
    def key(self) -> Tuple[int, int]:
        return self.tp, self.tn


@dataclass(frozen=True)
class CurveConfig:
    eps_gap: float = 0.02
    K: int = 2
    per_solve_time_limit: float = 120.0
    time_budget: float = math.inf

    def __post_init__(self):
        if not self.eps_gap > 0:
            raise ParetoError("eps_gap must be positive")
        if self.K < 1:
            raise ParetoError("K must be at least 1")


@dataclass
class Curve:
    points: List[ParetoPoint]
    complete: bool
    n_solves: int = 0
    seconds: float = 0.0


def _frac(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(str(v))


def _solve(pool: ClausePool, ds: BinaryDataset, K: int, primary: str, count_lb: int,
           time_limit: float) -> Optional[ParetoPoint]:
    """Lexicographic max of TP then TN ('sens') or TN then TP ('spec').

    ``count_lb`` is the minimum TN (for 'sens') or TP (for 'spec').
    """
    z = pool.coverage()
    m = MilpModel(f"max_{primary}", "max")
    _, yc, yk = master_skeleton(m, z, ds, K)
    n0, n1 = ds.n_controls, ds.n_cases
    # TN = n0 - sum(yhat over controls)
    if primary == "sens":
        if count_lb > 0:
            m.add_constraint({i: 1.0 for i in yk.values()}, "<=", float(n0 - count_lb), "spec_lb")
        obj = {i: float(n0 + 1) for i in yc.values()}
        obj.update({i: -1.0 for i in yk.values()})
    else:
        if count_lb > 0:
            m.add_constraint({i: 1.0 for i in yc.values()}, ">=", float(count_lb), "sens_lb")
        obj = {i: -float(n1 + 1) for i in yk.values()}
        obj.update({i: 1.0 for i in yc.values()})
    m.set_objective(obj)
    res = solve_branch_and_bound(m, time_limit)
    if not res.has_solution:
        return None
    rule = selected_rule(m, pool, res.x)
    cc = confusion(rule.predict(ds.X), ds)
    return ParetoPoint(sensitivity(cc), specificity(cc), rule, cc.tp, cc.tn,
                       res.runtime, res.status is Status.OPTIMAL)


def max_sens_given_spec(pool: ClausePool, ds: BinaryDataset, spec_lb, K: int,
                        time_limit: float = math.inf) -> ParetoPoint:
    """Best sensitivity among selections with specificity >= ``spec_lb``.

    Never infeasible: the empty selection has specificity 1.
    """
    lb = _frac(spec_lb)
    if not 0 <= lb <= 1:
        raise ParetoError(f"spec_lb must be in [0, 1], got {spec_lb}")
    pt = _solve(pool, ds, K, "sens", math.ceil(lb * ds.n_controls), time_limit)
    if pt is None:
        raise ParetoError("no selection found within the time limit")
    return pt


def max_spec_given_sens(pool: ClausePool, ds: BinaryDataset, sens_lb, K: int,
                        time_limit: float = math.inf) -> Optional[ParetoPoint]:
    """Best specificity among selections with sensitivity >= ``sens_lb``; None if infeasible."""
    lb = _frac(sens_lb)
    if not 0 <= lb <= 1:
        raise ParetoError(f"sens_lb must be in [0, 1], got {sens_lb}")
    return _solve(pool, ds, K, "spec", math.ceil(lb * ds.n_cases), time_limit)


@dataclass
class _Gap:
    """Unexplored region between adjacent points lo (higher spec) and hi (higher sens).

    A non-dominated point between them has TN in (tn_lo, tn_hi) and TP in
    (tp_lo, tp_hi); both windows shrink as probes come back empty.
    """

    lo: ParetoPoint
    hi: ParetoPoint
    tn_lo: int = field(init=False)
    tn_hi: int = field(init=False)
    tp_lo: int = field(init=False)
    tp_hi: int = field(init=False)

    def __post_init__(self):
        self.tn_lo, self.tn_hi = self.hi.tn, self.lo.tn
        self.tp_lo, self.tp_hi = self.lo.tp, self.hi.tp

    def spec_open(self, n0: int, eps: float) -> bool:
        return self.tn_hi - self.tn_lo >= 2 and Fraction(self.tn_hi - self.tn_lo, n0) > _frac(eps)

    def sens_open(self, n1: int, eps: float) -> bool:
        return self.tp_hi - self.tp_lo >= 2 and Fraction(self.tp_hi - self.tp_lo, n1) > _frac(eps)


def trade_off_curve(pool: ClausePool, ds: BinaryDataset, cfg: CurveConfig) -> Curve:
    """Non-dominated (sensitivity, specificity) points, sorted by sensitivity.

    Gaps wider than ``cfg.eps_gap`` in specificity (sensitivity) are probed
    with a specificity (sensitivity) bound at the midpoint of the window still
    unexplored.  A probe that returns an endpoint proves part of the window
    empty, so with ``eps_gap`` below 1/max(n_cases, n_controls) the result is
    the complete non-dominated set of the pool.
    """
    if len(pool) == 0:
        raise ParetoError("the clause pool is empty")
    t0 = time.perf_counter()
    n0, n1 = ds.n_controls, ds.n_cases
    eps = cfg.eps_gap
    complete = True
    n_solves = 0

    def limit() -> float:
        left = cfg.time_budget - (time.perf_counter() - t0)
        return max(0.0, min(cfg.per_solve_time_limit, left))

    def out_of_time() -> bool:
        return time.perf_counter() - t0 >= cfg.time_budget

    top_sens = _solve(pool, ds, cfg.K, "sens", 0, limit())
    top_spec = _solve(pool, ds, cfg.K, "spec", 0, limit())
    n_solves += 2
    if top_sens is None:
        # out of time before any incumbent: the empty selection is always valid
        top_sens = ParetoPoint(Fraction(0), Fraction(1), DnfRule(()), 0, n0, 0.0, False)
    points = {top_sens.key: top_sens}
    if top_spec is not None:
        points.setdefault(top_spec.key, top_spec)
    complete = complete and top_sens.optimal and (top_spec is None or top_spec.optimal)
    gaps = []
    if top_spec is not None and top_spec.key != top_sens.key:
        gaps.append(_Gap(top_spec, top_sens))
    while gaps:
        if out_of_time():
            complete = False
            break
        g = gaps.pop()
        if g.tn_hi - g.tn_lo < 2 or g.tp_hi - g.tp_lo < 2:
            continue  # no count left strictly between the endpoints
        if g.spec_open(n0, eps):
            need = -(-(g.tn_lo + g.tn_hi) // 2)  # ceil of the midpoint count
            pt = _solve(pool, ds, cfg.K, "sens", need, limit())
            n_solves += 1
            if pt is None or not pt.optimal:
                complete = False
            if pt is None or pt.key == g.lo.key or pt.key in points:
                g.tn_hi = need
                gaps.append(g)
            else:
                points[pt.key] = pt
                gaps += [_Gap(g.lo, pt), _Gap(pt, g.hi)]
        elif g.sens_open(n1, eps):
            need = -(-(g.tp_lo + g.tp_hi) // 2)
            pt = _solve(pool, ds, cfg.K, "spec", need, limit())
            n_solves += 1
            if pt is not None and not pt.optimal:
                complete = False
            if pt is None or pt.key == g.hi.key or pt.key in points:
                g.tp_hi = need
                gaps.append(g)
            else:
                points[pt.key] = pt
                gaps += [_Gap(g.lo, pt), _Gap(pt, g.hi)]
        # otherwise the gap is closed
    pts = sorted(points.values(), key=lambda p: (p.sensitivity, -p.specificity))
    return Curve(pts, complete, n_solves, time.perf_counter() - t0)


CURVE_HEADER = ("sensitivity", "specificity", "rule", "seconds")


def write_curve(curve: Curve, path: Union[str, Path]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(CURVE_HEADER)
        for p in curve.points:
            wr.writerow([f"{float(p.sensitivity):.10g}", f"{float(p.specificity):.10g}",
                         str(p.rule), f"{p.seconds:.6f}"])

