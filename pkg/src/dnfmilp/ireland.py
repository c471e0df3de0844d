"""IRELAND: grow a pool of AND clauses with small sub problems, then pick the best rule.

For every false-positive budget UB_u a sub-routine alternates two solves:

* (MP)_u picks at most K pooled clauses covering as many cases as possible
  while the union covers at most UB_u controls;
* (SP)_u generates one new clause, distinct from every pooled clause, that
  covers as many of the still-missed cases (a subsample of size N_s) as
  possible without covering more than UB_u controls.

A final master then minimizes balanced error over the merged pool.

Sub-routines advance in synchronous rounds: all active bounds solve against
the pool as it stood at the start of the round and their new clauses are
appended afterwards in bound order.  The outcome therefore does not depend on
whether the rounds are executed serially or on a thread pool.
"""
from __future__ import annotations

import csv
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .dataset import BinaryDataset
from .milp import MilpModel, SolveResult, Status, solve_branch_and_bound
from .rules import AndClause, DnfRule, balanced_error, bits_from_bool

log = logging.getLogger(__name__)

DEFAULT_UB_FRACTIONS = (0.005, 0.01, 0.02, 0.03, 0.04, 0.05)


class IrelandError(ValueError):
    pass


class ClausePool:
    """Ordered, duplicate-free clause list with cached coverage bit sets.

    Bit n of ``bits[k]`` is set iff sample n satisfies clause k.  Appends are
    serialized by a lock; :meth:`snapshot` gives an independent copy.
    """

    def __init__(self, ds: BinaryDataset, clauses: Sequence[AndClause] = ()):
        self.ds = ds
        self.clauses: List[AndClause] = []
        self.bits: List[int] = []
        self._index = set()
        self._lock = threading.Lock()
        for c in clauses:
            self.add(c)

    def add(self, clause: AndClause) -> bool:
        """Append ``clause`` unless it is already pooled. Returns True if added."""
        if clause.features[-1] >= self.ds.J:
            raise IrelandError(f"clause {clause} exceeds {self.ds.J} features")
        with self._lock:
            if clause in self._index:
                return False
            self._index.add(clause)
            self.clauses.append(clause)
            self.bits.append(bits_from_bool(clause.covers(self.ds.X)))
            return True

    def __len__(self) -> int:
        return len(self.clauses)

    def __iter__(self):
        return iter(list(self.clauses))

    def __contains__(self, clause) -> bool:
        return clause in self._index

    def snapshot(self) -> "ClausePool":
        with self._lock:
            other = ClausePool.__new__(ClausePool)
            other.ds = self.ds
            other.clauses = list(self.clauses)
            other.bits = list(self.bits)
            other._index = set(self._index)
            other._lock = threading.Lock()
            return other

    def coverage(self) -> np.ndarray:
        """N x len(pool) boolean matrix z."""
        N = self.ds.N
        z = np.zeros((N, len(self.bits)), dtype=bool)
        for k, b in enumerate(self.bits):
            raw = np.frombuffer(b.to_bytes((N + 7) // 8, "little"), dtype=np.uint8)
            z[:, k] = np.unpackbits(raw, bitorder="little")[:N].astype(bool)
        return z


@dataclass(frozen=True)
class IrelandConfig:
    """Run parameters.

    ``upper_bounds`` holds false-positive budgets, either absolute counts or
    (if any entry is non-integral) fractions of the number of controls, which
    are rounded up.  ``tau`` gives the tolerated false negatives per bound;
    None means zero for every bound.
    """

    upper_bounds: Tuple[float, ...] = DEFAULT_UB_FRACTIONS
    K: int = 2
    M: int = 2
    N_s: int = 100
    per_solve_time_limit: float = 120.0
    tau: Optional[Tuple[int, ...]] = None
    global_time_budget: float = 14400.0
    seed: int = 0
    parallel: int = 1
    max_iterations: int = 10_000

    def __post_init__(self):
        ubs = tuple(self.upper_bounds)
        object.__setattr__(self, "upper_bounds", ubs)
        if not ubs:
            raise IrelandError("at least one upper bound is required")
        if any(b < 0 for b in ubs):
            raise IrelandError("upper bounds must be nonnegative")
        if any(b2 <= b1 for b1, b2 in zip(ubs, ubs[1:])):
            raise IrelandError(f"upper bounds must be strictly increasing: {ubs}")
        if self.fractional and any(b > 1 for b in ubs):
            raise IrelandError("fractional upper bounds must lie in [0, 1]")
        if self.tau is not None:
            tau = tuple(int(t) for t in self.tau)
            if len(tau) != len(ubs):
                raise IrelandError(f"{len(tau)} tau values for {len(ubs)} upper bounds")
            if any(t < 0 for t in tau):
                raise IrelandError("tau values must be nonnegative")
            object.__setattr__(self, "tau", tau)
        for name in ("K", "M", "N_s", "parallel", "max_iterations"):
            if int(getattr(self, name)) < 1:
                raise IrelandError(f"{name} must be at least 1")
        if self.per_solve_time_limit <= 0 or self.global_time_budget <= 0:
            raise IrelandError("time limits must be positive")

    @property
    def fractional(self) -> bool:
        return any(float(b) != int(b) for b in self.upper_bounds)

    def resolved_bounds(self, ds: BinaryDataset) -> List[int]:
        """Absolute false-positive budgets for ``ds``."""
        if not self.fractional:
            return [int(b) for b in self.upper_bounds]
        n0 = ds.n_controls
        return [int(math.ceil(Fraction(str(b)) * n0)) for b in self.upper_bounds]

    def taus(self) -> Tuple[int, ...]:
        return self.tau if self.tau is not None else (0,) * len(self.upper_bounds)


@dataclass
class TraceRow:
    bound: int          # index u, -1 for the final master
    ub: int
    iteration: int
    kind: str           # "init-SP", "SP", "MP_u" or "MP"
    status: str
    objective: float
    best_bound: float
    seconds: float
    pool_size: int


TRACE_HEADER = ("bound", "ub", "iteration", "kind", "status", "objective", "best_bound",
                "seconds", "pool_size")


@dataclass
class BoundTrace:
    u: int
    ub: int
    tau: int
    mp_tp: List[int] = field(default_factory=list)
    sp_tp: List[int] = field(default_factory=list)
    stop_reason: str = ""


@dataclass
class IrelandResult:
    rule: DnfRule
    pool: ClausePool
    objective: Fraction
    normalized_objective: Fraction
    bounds: List[BoundTrace]
    trace: List[TraceRow]
    budget_limited: bool
    master_status: str
    runtime: float


def _subset_rng(seed: int, u: int, iteration: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & (2**63 - 1), u, iteration])


def _sample(idx: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    if idx.size <= size:
        return idx
    return np.sort(rng.choice(idx, size=size, replace=False))


# -- (SP)_u -------------------------------------------------------------------

def build_subproblem(ds: BinaryDataset, case_subset: Sequence[int], UB: int,
                     pool: Optional[ClausePool], M: int) -> MilpModel:
    """Clause generator: max covered cases of ``case_subset`` with at most UB covered controls.

    Only ``s_j`` is binary.  A chosen case gets ``yhat_n + s_j <= 1`` for each
    feature it lacks, so with integral s its continuous ``yhat_n`` is capped at
    the clause indicator; a control's ``yhat_n`` is pushed up to the indicator
    and the FP budget row bounds their sum.  The per-feature case rows give a
    much tighter relaxation than one aggregated row per case.
    """
    J = ds.J
    subset = [int(n) for n in case_subset]
    ys = ds.y
    if any(ys[n] != 1 for n in subset):
        raise IrelandError("case_subset must contain cases only")
    if UB < 0:
        raise IrelandError("UB must be nonnegative")
    if not 1 <= M <= J:
        raise IrelandError(f"M must be in [1, {J}]")
    m = MilpModel("sp", "max")
    s = [m.add_var(f"s_{j}", "binary") for j in range(J)]
    yc = {n: m.add_var(f"yhat_{n}", "continuous", 0.0, 1.0) for n in subset}
    controls = ds.controls
    yk = {int(n): m.add_var(f"yhat_{n}", "continuous", 0.0, 1.0) for n in controls}
    miss = 1 - ds.X
    for n in subset:
        for j in np.flatnonzero(miss[n]):
            m.add_constraint({yc[n]: 1.0, s[j]: 1.0}, "<=", 1.0, f"case_{n}_{j}")
    for n in yk:
        row = {yk[n]: 1.0}
        row.update({s[j]: 1.0 for j in range(J) if miss[n, j]})
        m.add_constraint(row, ">=", 1.0, f"ctrl_{n}")
    m.add_constraint({i: 1.0 for i in yk.values()}, "<=", float(UB), "fp_budget")
    for k, c in enumerate(pool.clauses if pool is not None else ()):
        if len(c) > M:
            continue  # cannot be reproduced under the size bound
        # Hamming distance to the pooled clause must be at least one
        on = set(c.features)
        m.add_constraint({s[j]: (1.0 if j in on else -1.0) for j in range(J)}, "<=",
                         float(len(on) - 1), f"exclude_{k}")
    m.add_constraint({i: 1.0 for i in s}, "<=", float(M), "size")
    m.add_constraint({i: 1.0 for i in s}, ">=", 1.0, "nonempty")
    m.set_objective({i: 1.0 for i in yc.values()})

    X = ds.X

    def repair(x):
        vals = np.asarray(x)[s]
        on = np.flatnonzero(vals > 0.5)
        if on.size == 0:
            on = np.array([int(np.argmax(vals))])
        if on.size > M:
            on = on[np.argsort(-vals[on], kind="stable")[:M]]
        cand = np.zeros(m.n_vars)
        cand[np.asarray(s)[on]] = 1.0
        cov = np.all(X[:, on] == 1, axis=1)
        for n, i in yc.items():
            cand[i] = float(cov[n])
        for n, i in yk.items():
            cand[i] = float(cov[n])
        return cand

    m.repair = repair
    m.s_vars = s
    return m


def solve_subproblem(ds: BinaryDataset, case_subset, UB: int, pool, M: int,
                     time_limit: float) -> Tuple[Optional[AndClause], SolveResult, int]:
    """Returns (clause or None, solver result, true positives on the full case set)."""
    m = build_subproblem(ds, case_subset, UB, pool, M)
    res = solve_branch_and_bound(m, time_limit)
    if not res.has_solution:
        return None, res, 0
    feats = [j for j, i in enumerate(m.s_vars) if res.x[i] > 0.5]
    if not feats:
        return None, res, 0
    clause = AndClause(feats)
    if pool is not None and clause in pool:
        return None, res, 0
    tp = int(clause.covers(ds.X)[ds.y == 1].sum())
    return clause, res, tp


# -- masters ------------------------------------------------------------------

def master_skeleton(m: MilpModel, z: np.ndarray, ds: BinaryDataset, K: int):
    Kt = z.shape[1]
    q = [m.add_var(f"q_{k}", "binary") for k in range(Kt)]
    yc = {int(n): m.add_var(f"yhat_{n}", "continuous", 0.0, 1.0) for n in ds.cases}
    # with binary q both indicator sets are integral at any optimum
    yk = {int(n): m.add_var(f"yhat_{n}", "continuous", 0.0, 1.0) for n in ds.controls}
    for n, i in yc.items():
        row = {i: 1.0}
        row.update({q[k]: -1.0 for k in np.flatnonzero(z[n])})
        m.add_constraint(row, "<=", 0.0, f"case_{n}")
    for n, i in yk.items():
        for k in np.flatnonzero(z[n]):
            m.add_constraint({i: 1.0, q[k]: -1.0}, ">=", 0.0, f"ctrl_{n}_{k}")
    if Kt:
        m.add_constraint({i: 1.0 for i in q}, "<=", float(K), "max_clauses")

    def repair(x):
        vals = np.asarray(x)[q] if Kt else np.zeros(0)
        on = np.flatnonzero(vals > 0.5)
        if on.size > K:
            on = on[np.argsort(-vals[on], kind="stable")[:K]]
        cand = np.zeros(m.n_vars)
        cov = z[:, on].any(axis=1) if on.size else np.zeros(z.shape[0], dtype=bool)
        for k in on:
            cand[q[k]] = 1.0
        for n, i in yc.items():
            cand[i] = float(cov[n])
        for n, i in yk.items():
            cand[i] = float(cov[n])
        return cand

    m.repair = repair
    m.q_vars = q
    return q, yc, yk


def build_subroutine_master(pool: ClausePool, ds: BinaryDataset, UB: int, K: int) -> MilpModel:
    """(MP)_u: at most K pooled clauses, at most UB covered controls, max covered cases."""
    z = pool.coverage()
    m = MilpModel("mp_u", "max")
    _, yc, yk = master_skeleton(m, z, ds, K)
    if yk:
        m.add_constraint({i: 1.0 for i in yk.values()}, "<=", float(UB), "fp_budget")
    m.set_objective({i: 1.0 for i in yc.values()})
    return m


def build_final_master(pool: ClausePool, ds: BinaryDataset, K: int) -> MilpModel:
    """(MP): at most K pooled clauses minimizing balanced error."""
    z = pool.coverage()
    w = ds.class_weights()
    wc, wk = float(w.control_weight), float(w.case_weight)
    m = MilpModel("mp", "min")
    _, yc, yk = master_skeleton(m, z, ds, K)
    obj = {i: -wk for i in yc.values()}
    obj.update({i: wc for i in yk.values()})
    m.set_objective(obj, wk * len(yc))
    return m


def selected_rule(model: MilpModel, pool: ClausePool, x) -> DnfRule:
    if x is None:
        return DnfRule(())
    return DnfRule(tuple(pool.clauses[k] for k, i in enumerate(model.q_vars) if x[i] > 0.5))


# -- driver -------------------------------------------------------------------

class _Clock:
    def __init__(self, budget: float):
        self.t0 = time.perf_counter()
        self.budget = budget

    def elapsed(self) -> float:
        return time.perf_counter() - self.t0

    def remaining(self) -> float:
        return self.budget - self.elapsed()

    def limit(self, per_solve: float) -> float:
        return max(0.0, min(per_solve, self.remaining()))


def _row(u, ub, it, kind, res: SolveResult, pool_size) -> TraceRow:
    return TraceRow(u, ub, it, kind, res.status.value, float(res.objective),
                    float(res.best_bound), round(res.runtime, 6), pool_size)


def initialize_pool(ds: BinaryDataset, cfg: IrelandConfig, *, trace: Optional[list] = None,
                    clock: Optional[_Clock] = None) -> ClausePool:
    """One clause per upper bound, each generated from all controls and a random case subset."""
    clock = clock or _Clock(cfg.global_time_budget)
    pool = ClausePool(ds)
    cases = ds.cases
    for u, ub in enumerate(cfg.resolved_bounds(ds)):
        if clock.remaining() <= 0:
            break
        subset = _sample(cases, cfg.N_s, _subset_rng(cfg.seed, u, 0))
        clause, res, _ = solve_subproblem(ds, subset, ub, pool, cfg.M,
                                          clock.limit(cfg.per_solve_time_limit))
        if clause is not None:
            pool.add(clause)
        if trace is not None:
            trace.append(_row(u, ub, 0, "init-SP", res, len(pool)))
    return pool


class _BoundState:
    def __init__(self, u: int, ub: int, tau: int):
        self.info = BoundTrace(u, ub, tau)
        self.iteration = 0
        self.active = True
        self.last_tp: Optional[int] = None

    def step(self, ds: BinaryDataset, snap: ClausePool, cfg: IrelandConfig,
             clock: _Clock) -> Tuple[Optional[AndClause], List[TraceRow]]:
        """One (MP)_u solve and, unless a stop rule fires, one (SP)_u solve."""
        info, rows = self.info, []
        self.iteration += 1
        it = self.iteration
        mp = build_subroutine_master(snap, ds, info.ub, cfg.K)
        res = solve_branch_and_bound(mp, clock.limit(cfg.per_solve_time_limit))
        rows.append(_row(info.u, info.ub, it, "MP_u", res, len(snap)))
        rule = selected_rule(mp, snap, res.x if res.has_solution else None)
        yhat = rule.predict(ds.X)
        tp = int(np.sum(yhat & (ds.y == 1)))
        info.mp_tp.append(tp)
        missed = np.flatnonzero((ds.y == 1) & ~yhat)
        if missed.size <= info.tau:
            return self._stop("fn<=tau"), rows
        if self.last_tp is not None and tp <= self.last_tp:
            return self._stop("stalled"), rows
        if clock.remaining() <= 0:
            return self._stop("budget"), rows
        if it >= cfg.max_iterations:
            return self._stop("max-iterations"), rows
        self.last_tp = tp
        subset = _sample(missed, cfg.N_s, _subset_rng(cfg.seed, info.u, it))
        clause, sres, sp_tp = solve_subproblem(ds, subset, info.ub, snap, cfg.M,
                                               clock.limit(cfg.per_solve_time_limit))
        rows.append(_row(info.u, info.ub, it, "SP", sres, len(snap)))
        info.sp_tp.append(sp_tp)
        if clause is None:
            return self._stop("no-clause"), rows
        return clause, rows

    def _stop(self, reason: str):
        self.active = False
        self.info.stop_reason = reason
        return None


def _rounds(ds, pool, states, cfg, clock, trace, executor=None):
    while any(s.active for s in states):
        if clock.remaining() <= 0:
            for s in states:
                if s.active:
                    s._stop("budget")
            break
        snap = pool.snapshot()
        active = [s for s in states if s.active]
        if executor is None:
            outs = [s.step(ds, snap, cfg, clock) for s in active]
        else:
            outs = list(executor.map(lambda s: s.step(ds, snap, cfg, clock), active))
        for clause, rows in outs:
            trace.extend(rows)
            if clause is not None:
                pool.add(clause)


def run_subroutine(u: int, ds: BinaryDataset, pool: ClausePool, cfg: IrelandConfig, *,
                   trace: Optional[list] = None, clock: Optional[_Clock] = None) -> BoundTrace:
    """Run the sub-routine of bound index ``u`` alone, appending to ``pool`` in place."""
    clock = clock or _Clock(cfg.global_time_budget)
    ub = cfg.resolved_bounds(ds)[u]
    state = _BoundState(u, ub, cfg.taus()[u])
    rows: list = [] if trace is None else trace
    _rounds(ds, pool, [state], cfg, clock, rows)
    return state.info


def run(ds: BinaryDataset, cfg: IrelandConfig) -> IrelandResult:
    """Full heuristic: initial pool, every sub-routine, final master."""
    ds.class_weights()  # rejects single-class data
    if cfg.M > ds.J:
        raise IrelandError(f"M={cfg.M} exceeds J={ds.J}")
    clock = _Clock(cfg.global_time_budget)
    trace: List[TraceRow] = []
    pool = initialize_pool(ds, cfg, trace=trace, clock=clock)
    ubs = cfg.resolved_bounds(ds)
    states = [_BoundState(u, ub, t) for u, (ub, t) in enumerate(zip(ubs, cfg.taus()))]
    if cfg.parallel > 1:
        with ThreadPoolExecutor(max_workers=cfg.parallel) as ex:
            _rounds(ds, pool, states, cfg, clock, trace, ex)
    else:
        _rounds(ds, pool, states, cfg, clock, trace)
    budget_limited = clock.remaining() <= 0

    final = build_final_master(pool, ds, cfg.K)
    # the final master always gets a little time so a rule can be returned
    limit = max(clock.limit(cfg.per_solve_time_limit), min(1.0, cfg.per_solve_time_limit))
    res = solve_branch_and_bound(final, limit)
    trace.append(_row(-1, -1, 0, "MP", res, len(pool)))
    rule = selected_rule(final, pool, res.x if res.has_solution else None)
    if not res.has_solution:
        rule = _best_single(pool, ds)
    if res.status is not Status.OPTIMAL:
        budget_limited = budget_limited or res.status in (Status.FEASIBLE_TIME_LIMIT,
                                                          Status.TIME_LIMIT)
    obj = balanced_error(rule.predict(ds.X), ds)
    return IrelandResult(rule, pool, obj, obj / ds.N, [s.info for s in states], trace,
                         budget_limited, res.status.value, clock.elapsed())


def _best_single(pool: ClausePool, ds: BinaryDataset) -> DnfRule:
    best = DnfRule(())
    best_val = balanced_error(best.predict(ds.X), ds)
    for c in pool.clauses:
        r = DnfRule((c,))
        v = balanced_error(r.predict(ds.X), ds)
        if v < best_val:
            best, best_val = r, v
    return best


def write_trace(rows: Sequence[TraceRow], path: Union[str, Path]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(TRACE_HEADER)
        for r in rows:
            wr.writerow([getattr(r, h) for h in TRACE_HEADER])


def write_pool(pool: ClausePool, path: Union[str, Path]) -> None:
    """One clause per line in rule text syntax."""
    Path(path).write_text("".join(f"{c}\n" for c in pool.clauses), encoding="utf-8")


def read_pool(ds: BinaryDataset, path: Union[str, Path]) -> ClausePool:
    lines = [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines()]
    return ClausePool(ds, [AndClause.parse(ln) for ln in lines if ln and not ln.startswith("#")])
