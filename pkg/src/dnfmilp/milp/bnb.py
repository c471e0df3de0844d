"""LP relaxation and exact branch-and-bound for :class:`MilpModel`."""
from __future__ import annotations

import heapq
import math
import threading
import time
from typing import Callable, Optional

import numpy as np

from .model import INT_TOL, MIP_GAP, MilpModel, SolveResult, Status
from .simplex import BoundedSimplex

TraceHook = Callable[[int, float, float], None]

_LP_STATUS = {
    "optimal": Status.OPTIMAL,
    "infeasible": Status.INFEASIBLE,
    "unbounded": Status.UNBOUNDED,
    "numerical-failure": Status.NUMERICAL_FAILURE,
}


def solve_lp_relaxation(model: MilpModel, engine: str = "simplex") -> SolveResult:
    """Solve the model with binaries relaxed to [0, 1].

    ``engine="highs"`` routes through :func:`scipy.optimize.linprog`; it is
    kept for cross-checking the built-in simplex.
    """
    t0 = time.perf_counter()
    arr = model.arrays()
    if engine == "highs":
        return _highs_lp(model, t0)
    if engine != "simplex":
        raise ValueError(f"unknown LP engine {engine!r}")
    sol = BoundedSimplex(arr).solve()
    status = _LP_STATUS[sol.status]
    return SolveResult(status, sol.x, sol.objective,
                       sol.objective if status is Status.OPTIMAL else math.nan,
                       time.perf_counter() - t0, 0, basis=sol.basis)


def _highs_lp(model: MilpModel, t0: float) -> SolveResult:
    from scipy.optimize import linprog

    arr = model.arrays()
    sign = -1.0 if arr.maximize else 1.0
    ub_rows = arr.rel != 2
    flip = np.where(arr.rel == 1, -1.0, 1.0)
    A_ub = (arr.A * flip[:, None])[ub_rows]
    b_ub = (arr.b * flip)[ub_rows]
    A_eq, b_eq = arr.A[~ub_rows], arr.b[~ub_rows]
    bounds = [(lo, None if math.isinf(hi) else hi) for lo, hi in zip(arr.lb, arr.ub)]
    res = linprog(sign * arr.c,
                  A_ub=A_ub if len(b_ub) else None, b_ub=b_ub if len(b_ub) else None,
                  A_eq=A_eq if len(b_eq) else None, b_eq=b_eq if len(b_eq) else None,
                  bounds=bounds, method="highs")
    dt = time.perf_counter() - t0
    if res.status == 0:
        obj = sign * res.fun + arr.c0
        return SolveResult(Status.OPTIMAL, np.asarray(res.x), obj, obj, dt)
    if res.status == 2:
        return SolveResult(Status.INFEASIBLE, runtime=dt)
    if res.status == 3:
        return SolveResult(Status.UNBOUNDED, runtime=dt)
    return SolveResult(Status.NUMERICAL_FAILURE, runtime=dt, message=res.message)


def _objective_is_integral(model: MilpModel) -> bool:
    for j, a in model.objective.items():
        if model.variables[j].kind != "binary" or a != round(a):
            return False
    return True


def solve_branch_and_bound(model: MilpModel, time_limit: float = math.inf, *,
                           max_open_nodes: int = 200_000,
                           gap: float = MIP_GAP,
                           trace: Optional[TraceHook] = None,
                           cancel: Optional[threading.Event] = None) -> SolveResult:
    """Exact branch-and-bound over the binary variables.

    Nodes are explored depth-first until the first incumbent, then in
    best-bound order.  Branching picks the most fractional binary (lowest
    index on ties).  ``trace(node_count, best_bound, incumbent)`` is called
    after every processed node with values in the model's own sense.
    Exceeding ``max_open_nodes`` stops the search with ``MEMORY_ABORT``.
    """
    t0 = time.perf_counter()
    deadline = t0 + time_limit
    arr = model.arrays()
    sgn = -1.0 if arr.maximize else 1.0  # internal values are minimized
    is_bin = arr.is_binary
    bin_idx = np.flatnonzero(is_bin)
    engine = BoundedSimplex(arr)
    integral = _objective_is_integral(model) and bin_idx.size > 0

    inc_x: Optional[np.ndarray] = None
    inc_val = math.inf

    def cutoff() -> float:
        if inc_x is None:
            return math.inf
        if integral:
            return inc_val - 1.0 + 1e-6
        return inc_val - gap * max(1.0, abs(inc_val))

    def offer(x: np.ndarray) -> bool:
        nonlocal inc_x, inc_val
        if not model.is_feasible(x):
            return False
        val = sgn * model.objective_value(x)
        if val < inc_val - 1e-12:
            inc_x, inc_val = x.copy(), val
            return True
        return False

    def result(status: Status, bound: float, nodes: int, msg: str = "") -> SolveResult:
        obj = sgn * inc_val if inc_x is not None else math.nan
        return SolveResult(status, inc_x, obj, sgn * bound, time.perf_counter() - t0, nodes, msg)

    root = engine.solve()
    if root.status != "optimal":
        st = _LP_STATUS[root.status]
        return SolveResult(st, runtime=time.perf_counter() - t0, node_count=1)

    # open node: (bound, seq, depth, lb, ub, basis)
    open_nodes = [(root.objective * sgn, 0, 0, arr.lb.copy(), arr.ub.copy(), root.basis)]
    seq = 1
    diving = True
    nodes = 0
    first = True
    bound = root.objective * sgn

    while open_nodes:
        if cancel is not None and cancel.is_set():
            return result(Status.CANCELLED, bound, nodes)
        if time.perf_counter() > deadline:
            st = Status.FEASIBLE_TIME_LIMIT if inc_x is not None else Status.TIME_LIMIT
            return result(st, bound, nodes)
        if diving:
            node = open_nodes.pop()
        else:
            node = heapq.heappop(open_nodes)
        nb, _, depth, lb, ub, basis = node
        if nb < cutoff():
            if first:
                sol, first = root, False
            else:
                sol = engine.solve(lb, ub, basis)
            nodes += 1
            if sol.status == "optimal":
                val = max(sgn * sol.objective, nb)
                if val < cutoff():
                    x = sol.x
                    frac = np.abs(x[bin_idx] - np.round(x[bin_idx]))
                    if frac.size == 0 or frac.max() <= INT_TOL:
                        cand = x.copy()
                        cand[bin_idx] = np.round(cand[bin_idx])
                        if not offer(cand):
                            offer(x)  # keeps LP-exact point if rounding broke a row
                    else:
                        cand = x.copy()
                        cand[bin_idx] = np.round(cand[bin_idx])
                        offer(cand)
                        if model.repair is not None:
                            rep = model.repair(x)
                            if rep is not None:
                                offer(np.asarray(rep, dtype=float))
                        if val < cutoff():
                            f = x[bin_idx] - np.floor(x[bin_idx])
                            score = np.minimum(f, 1.0 - f)
                            k = int(np.argmax(score))
                            j = int(bin_idx[k])
                            down_ub = ub.copy()
                            down_ub[j] = math.floor(x[j])
                            up_lb = lb.copy()
                            up_lb[j] = math.ceil(x[j])
                            down = (val, seq, depth + 1, lb, down_ub, sol.basis)
                            up = (val, seq + 1, depth + 1, up_lb, ub, sol.basis)
                            seq += 2
                            if diving:
                                # preferred child goes last so it pops first
                                pair = (down, up) if f[k] >= 0.5 else (up, down)
                                open_nodes.extend(pair)
                            else:
                                heapq.heappush(open_nodes, down)
                                heapq.heappush(open_nodes, up)
            elif sol.status == "numerical-failure":
                return result(Status.NUMERICAL_FAILURE, bound, nodes, "LP failure at node")
        if diving and inc_x is not None:
            diving = False
            heapq.heapify(open_nodes)
        if open_nodes:
            lowest = open_nodes[0][0] if not diving else min(n[0] for n in open_nodes)
            bound = max(bound, min(lowest, inc_val))
        else:
            bound = inc_val if inc_x is not None else bound
        if trace is not None:
            trace(nodes, sgn * bound, sgn * inc_val if inc_x is not None else math.nan)
        if inc_x is not None and bound >= cutoff():
            return result(Status.OPTIMAL, inc_val, nodes)
        if len(open_nodes) > max_open_nodes:
            return result(Status.MEMORY_ABORT, bound, nodes, "open-node cap exceeded")

    if inc_x is None:
        return SolveResult(Status.INFEASIBLE, runtime=time.perf_counter() - t0, node_count=nodes)
    return result(Status.OPTIMAL, inc_val, nodes)
