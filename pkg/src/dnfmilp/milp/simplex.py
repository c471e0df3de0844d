"""Dense bounded-variable simplex.

Every row gets a slack so the system reads ``[A | S] z = b`` with
``l <= z <= u``.  Nonbasic variables sit at one of their bounds.  The primal
method (Dantzig pricing, Bland's rule after a run of degenerate pivots) is
used for cold starts; a dual simplex restarts from a stored basis after
bound changes, which is what branch-and-bound needs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import FEAS_TOL, ModelArrays

OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
DEGENERATE_RUN = 50
REFACTOR_EVERY = 200


@dataclass
class Basis:
    basic: np.ndarray     # column index basic in each row
    at_upper: np.ndarray  # nonbasic-at-upper flags over all columns


@dataclass
class LPSolution:
    status: str  # optimal | infeasible | unbounded | numerical-failure
    x: Optional[np.ndarray]
    objective: float
    basis: Optional[Basis]
    iterations: int


class _Infeasible(Exception):
    pass


class _Unbounded(Exception):
    pass


class _Stalled(Exception):
    pass


class BoundedSimplex:
    """LP engine for one constraint matrix; bounds may change between solves."""

    def __init__(self, arrays: ModelArrays, max_iter: Optional[int] = None):
        A, b, rel = arrays.A, arrays.b, arrays.rel
        m, n = A.shape
        self.m, self.n = m, n
        sign = np.where(rel == 1, -1.0, 1.0)
        slack_ub = np.where(rel == 2, 0.0, math.inf)
        self.M = np.hstack([A, np.diag(sign)]) if m else np.zeros((0, n))
        self.b = b.astype(float).copy()
        self.cost = np.concatenate([-arrays.c if arrays.maximize else arrays.c, np.zeros(m)])
        self.base_lb = np.concatenate([arrays.lb, np.zeros(m)])
        self.base_ub = np.concatenate([arrays.ub, slack_ub])
        self.c0 = arrays.c0
        self.maximize = arrays.maximize
        self.max_iter = max_iter or 50 * (m + n + 10)
        self.n_art = 0

    # -- public -------------------------------------------------------------
    def solve(self, lb: Optional[np.ndarray] = None, ub: Optional[np.ndarray] = None,
              basis: Optional[Basis] = None) -> LPSolution:
        """Solve with structural bounds ``lb``/``ub`` (defaults: model bounds)."""
        l, u = self._full_bounds(lb, ub)
        if np.any(l > u + FEAS_TOL):
            return LPSolution("infeasible", None, math.nan, None, 0)
        self.iterations = 0
        try:
            if basis is not None and self._load(basis, l, u):
                try:
                    self._dual(l, u)
                    self._primal(l, u, self.cost_full)
                    return self._finish()
                except (_Stalled, np.linalg.LinAlgError):
                    pass
            return self._cold(l, u)
        except _Infeasible:
            return LPSolution("infeasible", None, math.nan, None, self.iterations)
        except _Unbounded:
            return LPSolution("unbounded", None, -math.inf if not self.maximize else math.inf,
                              None, self.iterations)
        except (_Stalled, np.linalg.LinAlgError):
            return LPSolution("numerical-failure", None, math.nan, None, self.iterations)

    # -- setup --------------------------------------------------------------
    def _full_bounds(self, lb, ub):
        l = self.base_lb.copy()
        u = self.base_ub.copy()
        if lb is not None:
            l[: self.n] = lb
        if ub is not None:
            u[: self.n] = ub
        if self.n_art:
            l = np.concatenate([l, np.zeros(self.n_art)])
            u = np.concatenate([u, np.zeros(self.n_art)])
        return l, u

    @property
    def cost_full(self) -> np.ndarray:
        if self.n_art:
            return np.concatenate([self.cost, np.zeros(self.n_art)])
        return self.cost

    def _cold(self, l, u) -> LPSolution:
        m, n = self.m, self.n
        # drop artificial columns from an earlier solve; rebuild as needed
        self.M = self.M[:, : n + m]
        self.n_art = 0
        l, u = l[: n + m], u[: n + m]
        ncol = n + m
        x = l.copy()
        slack_sign = np.diag(self.M[:, n:]) if m else np.zeros(0)
        resid = self.b - self.M[:, :n] @ x[:n] if m else np.zeros(0)
        # slack value that satisfies each row on its own
        s_val = resid * slack_sign
        bad = (s_val < l[n:] - FEAS_TOL) | (s_val > u[n:] + FEAS_TOL)
        rows_bad = np.flatnonzero(bad)
        art_cols = np.zeros((m, len(rows_bad)))
        for k, i in enumerate(rows_bad):
            art_cols[i, k] = 1.0 if resid[i] >= 0 else -1.0
        self.M = np.hstack([self.M, art_cols])
        self.n_art = len(rows_bad)
        ncol_all = ncol + self.n_art
        l_all = np.concatenate([l, np.zeros(self.n_art)])
        u_all = np.concatenate([u, np.full(self.n_art, math.inf)])
        at_upper = np.zeros(ncol_all, dtype=bool)
        x = np.concatenate([x, np.zeros(self.n_art)])
        basic = n + np.arange(m)
        for k, i in enumerate(rows_bad):
            basic[i] = ncol + k
            x[ncol + k] = abs(resid[i])
        good = np.flatnonzero(~bad)
        x[n + good] = s_val[good]
        self.basic = basic
        self.at_upper = at_upper
        self.x = x
        # basis columns are +-unit vectors; B^{-1} is diagonal with the same signs
        self.T = self.M.copy()
        if m:
            self.T /= self.M[np.arange(m), basic][:, None]
        if self.n_art:
            phase1 = np.concatenate([np.zeros(ncol), np.ones(self.n_art)])
            self._price(phase1)
            self._primal(l_all, u_all, phase1)
            infeas = float(np.sum(self.x[ncol:]))
            if infeas > FEAS_TOL * max(1.0, float(np.abs(self.b).max(initial=0.0))):
                raise _Infeasible
            u_all[ncol:] = 0.0
            self.x[ncol:] = 0.0
        self._price(self.cost_full)
        self._primal(l_all, u_all, self.cost_full)
        return self._finish()

    def _load(self, basis: Basis, l, u) -> bool:
        """Rebuild the tableau for ``basis``; False if it cannot be used."""
        ncol = self.M.shape[1]
        if len(basis.at_upper) != ncol or len(basis.basic) != self.m:
            return False
        basic = basis.basic.copy()
        at_upper = basis.at_upper.copy()
        at_upper[basic] = False
        at_upper &= np.isfinite(u)
        x = np.where(at_upper, u, l)
        if self.m:
            B = self.M[:, basic]
            try:
                sol = np.linalg.solve(B, np.hstack([self.M, self.b[:, None]]))
            except np.linalg.LinAlgError:
                return False
            self.T = sol[:, :-1]
            nonbasic = np.ones(ncol, dtype=bool)
            nonbasic[basic] = False
            x[basic] = sol[:, -1] - self.T[:, nonbasic] @ x[nonbasic]
        self.basic, self.at_upper, self.x = basic, at_upper, x
        cost = self.cost_full
        self._price(cost)
        # restore dual feasibility by bound flips where possible
        d = self.d
        nb = np.ones(ncol, dtype=bool)
        nb[basic] = False
        free_range = (u - l) > FEAS_TOL
        wrong_lo = nb & ~at_upper & (d < -OPT_TOL) & free_range
        wrong_hi = nb & at_upper & (d > OPT_TOL) & free_range
        if np.any(wrong_lo & ~np.isfinite(u)):
            return False
        flip = wrong_lo | wrong_hi
        if np.any(flip):
            at_upper[flip] = ~at_upper[flip]
            self._reset_values(l, u)
        return True

    def _reset_values(self, l, u):
        ncol = self.M.shape[1]
        x = np.where(self.at_upper, u, l)
        if self.m:
            B = self.M[:, self.basic]
            nonbasic = np.ones(ncol, dtype=bool)
            nonbasic[self.basic] = False
            rhs = self.b - self.M[:, nonbasic] @ x[nonbasic]
            x[self.basic] = np.linalg.solve(B, rhs)
        self.x = x

    def _refactor(self, l, u, cost):
        B = self.M[:, self.basic]
        self.T = np.linalg.solve(B, self.M)
        self._reset_values(l, u)
        self._price(cost)

    def _price(self, cost):
        if self.m:
            self.d = cost - cost[self.basic] @ self.T
        else:
            self.d = cost.copy()

    def _finish(self) -> LPSolution:
        xs = self.x[: self.n].copy()
        val = float(self.cost[: self.n] @ xs)
        obj = (-val if self.maximize else val) + self.c0
        return LPSolution("optimal", xs, obj,
                          Basis(self.basic.copy(), self.at_upper.copy()), self.iterations)

    # -- pivoting ------------------------------------------------------------
    def _pivot(self, r: int, j: int):
        T = self.T
        piv = T[r, j]
        T[r] /= piv
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        T[:, j] = 0.0
        T[r, j] = 1.0
        self.d -= self.d[j] * T[r]
        self.d[j] = 0.0
        self.basic[r] = j

    def _tick(self, l, u, cost):
        self.iterations += 1
        if self.iterations > self.max_iter:
            raise _Stalled
        if self.iterations % REFACTOR_EVERY == 0:
            self._refactor(l, u, cost)

    def _primal(self, l, u, cost):
        degenerate = 0
        bland = False
        ncol = self.M.shape[1]
        movable = (u - l) > FEAS_TOL
        while True:
            nb = np.ones(ncol, dtype=bool)
            nb[self.basic] = False
            d = self.d
            up = nb & movable & ~self.at_upper & (d < -OPT_TOL)
            down = nb & movable & self.at_upper & (d > OPT_TOL)
            cand = np.flatnonzero(up | down)
            if cand.size == 0:
                return
            if bland:
                j = int(cand[0])
            else:
                j = int(cand[np.argmax(np.abs(d[cand]))])
            direction = 1.0 if up[j] else -1.0
            alpha = direction * self.T[:, j] if self.m else np.zeros(0)
            xb = self.x[self.basic]
            lb_b, ub_b = l[self.basic], u[self.basic]
            ratios = np.full(self.m, math.inf)
            pos = alpha > PIVOT_TOL
            neg = alpha < -PIVOT_TOL
            ratios[pos] = np.maximum(xb[pos] - lb_b[pos], 0.0) / alpha[pos]
            fin = neg & np.isfinite(ub_b)
            ratios[fin] = np.maximum(ub_b[fin] - xb[fin], 0.0) / -alpha[fin]
            theta_flip = u[j] - l[j]
            r = -1
            theta = theta_flip
            if self.m:
                rmin = float(ratios.min())
                if rmin < theta:
                    theta = rmin
                    ties = np.flatnonzero(ratios <= rmin + 1e-12)
                    if bland:
                        r = int(ties[np.argmin(self.basic[ties])])
                    else:
                        r = int(ties[np.argmax(np.abs(alpha[ties]))])
            if not math.isfinite(theta):
                raise _Unbounded
            if theta < 1e-12:
                degenerate += 1
                if degenerate > DEGENERATE_RUN:
                    bland = True
            else:
                degenerate = 0
                bland = False
            if self.m:
                self.x[self.basic] = xb - theta * alpha
            self.x[j] += direction * theta
            if r < 0:
                self.at_upper[j] = not self.at_upper[j]
                self.x[j] = u[j] if self.at_upper[j] else l[j]
            else:
                leaving = int(self.basic[r])
                to_upper = alpha[r] < 0
                self._pivot(r, j)
                self.at_upper[j] = False
                self.at_upper[leaving] = to_upper
                self.x[leaving] = u[leaving] if to_upper else l[leaving]
            self._tick(l, u, cost)

    def _dual(self, l, u):
        ncol = self.M.shape[1]
        movable = (u - l) > FEAS_TOL
        cost = self.cost_full
        while self.m:
            xb = self.x[self.basic]
            below = l[self.basic] - xb
            above = xb - u[self.basic]
            viol = np.maximum(below, above)
            r = int(np.argmax(viol))
            if viol[r] <= FEAS_TOL:
                return
            go_lower = below[r] > above[r]
            target = l[self.basic[r]] if go_lower else u[self.basic[r]]
            row = self.T[r]
            nb = np.ones(ncol, dtype=bool)
            nb[self.basic] = False
            lo = nb & movable & ~self.at_upper
            hi = nb & movable & self.at_upper
            if go_lower:
                elig = (lo & (row < -PIVOT_TOL)) | (hi & (row > PIVOT_TOL))
            else:
                elig = (lo & (row > PIVOT_TOL)) | (hi & (row < -PIVOT_TOL))
            cand = np.flatnonzero(elig)
            if cand.size == 0:
                raise _Infeasible
            ratio = np.abs(self.d[cand]) / np.abs(row[cand])
            rmin = ratio.min()
            ties = cand[ratio <= rmin + 1e-12]
            j = int(ties[np.argmax(np.abs(row[ties]))])
            delta = (self.x[self.basic[r]] - target) / row[j]
            self.x[self.basic] -= self.T[:, j] * delta
            self.x[j] += delta
            leaving = int(self.basic[r])
            self._pivot(r, j)
            self.at_upper[j] = False
            self.at_upper[leaving] = not go_lower
            self.x[leaving] = target
            self._tick(l, u, cost)
