"""Mixed-binary linear program container and solver result types."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np

FEAS_TOL = 1e-7
INT_TOL = 1e-6
MIP_GAP = 1e-6


class ModelError(ValueError):
    """Raised for malformed models (unknown variables, bad bounds, ...)."""


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    FEASIBLE_TIME_LIMIT = "feasible-time-limit"
    TIME_LIMIT = "time-limit"  # limit reached before any incumbent was found
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MEMORY_ABORT = "memory-abort"
    NUMERICAL_FAILURE = "numerical-failure"
    CANCELLED = "cancelled"

    def __str__(self) -> str:
        return self.value

    @property
    def has_solution(self) -> bool:
        return self in (Status.OPTIMAL, Status.FEASIBLE_TIME_LIMIT)


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str  # "binary" | "continuous"
    lb: float
    ub: float


@dataclass(frozen=True)
class Constraint:
    name: str
    coefs: Dict[int, float]
    rel: str  # "<=" | ">=" | "="
    rhs: float


_RELATIONS = {"<=": "<=", ">=": ">=", "=": "=", "==": "=", "=<": "<=", "=>": ">="}


class MilpModel:
    """A linear objective over binary and continuous variables with linear rows.

    Variables are addressed by the integer index returned from :meth:`add_var`.
    An optional ``repair`` callable maps a (fractional) point to a candidate
    integer point; branch-and-bound checks it for feasibility and uses it as
    an incumbent when it is.
    """

    def __init__(self, name: str = "model", sense: str = "min"):
        if sense not in ("min", "max"):
            raise ModelError(f"unknown objective sense {sense!r}")
        self.name = name
        self.sense = sense
        self.variables: List[Variable] = []
        self.constraints: List[Constraint] = []
        self.objective: Dict[int, float] = {}
        self.objective_constant = 0.0
        self.repair: Optional[Callable[[np.ndarray], Optional[np.ndarray]]] = None
        self._names: Dict[str, int] = {}
        self._arrays = None

    # -- construction -----------------------------------------------------
    def add_var(self, name: str, kind: str = "continuous", lb: float = 0.0,
                ub: float = math.inf) -> int:
        if kind not in ("binary", "continuous"):
            raise ModelError(f"unknown variable kind {kind!r}")
        if name in self._names:
            raise ModelError(f"duplicate variable name {name!r}")
        if kind == "binary":
            lb, ub = max(0.0, lb), min(1.0, ub)
        if not math.isfinite(lb):
            raise ModelError(f"variable {name!r} needs a finite lower bound")
        if ub < lb:
            raise ModelError(f"variable {name!r} has empty domain [{lb}, {ub}]")
        self._names[name] = len(self.variables)
        self.variables.append(Variable(name, kind, float(lb), float(ub)))
        self._arrays = None
        return len(self.variables) - 1

    def add_constraint(self, coefs: Mapping[int, float], rel: str, rhs: float,
                       name: Optional[str] = None) -> int:
        if rel not in _RELATIONS:
            raise ModelError(f"unknown relation {rel!r}")
        clean: Dict[int, float] = {}
        for j, a in coefs.items():
            if not 0 <= j < len(self.variables):
                raise ModelError(f"constraint references undeclared variable {j}")
            if a != 0:
                clean[j] = clean.get(j, 0.0) + float(a)
        name = name or f"c{len(self.constraints)}"
        self.constraints.append(Constraint(name, clean, _RELATIONS[rel], float(rhs)))
        self._arrays = None
        return len(self.constraints) - 1

    def set_objective(self, coefs: Mapping[int, float], constant: float = 0.0,
                      sense: Optional[str] = None) -> None:
        if sense is not None:
            if sense not in ("min", "max"):
                raise ModelError(f"unknown objective sense {sense!r}")
            self.sense = sense
        for j in coefs:
            if not 0 <= j < len(self.variables):
                raise ModelError(f"objective references undeclared variable {j}")
        self.objective = {j: float(a) for j, a in coefs.items() if a != 0}
        self.objective_constant = float(constant)
        self._arrays = None

    # -- queries -----------------------------------------------------------
    def index(self, name: str) -> int:
        try:
            return self._names[name]
        except KeyError:
            raise ModelError(f"unknown variable {name!r}") from None

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    @property
    def n_binary(self) -> int:
        return sum(v.kind == "binary" for v in self.variables)

    @property
    def n_continuous(self) -> int:
        return sum(v.kind == "continuous" for v in self.variables)

    def arrays(self) -> "ModelArrays":
        if self._arrays is None:
            self._arrays = ModelArrays.from_model(self)
        return self._arrays

    def objective_value(self, x: Sequence[float]) -> float:
        return self.objective_constant + sum(a * x[j] for j, a in self.objective.items())

    def is_feasible(self, x: Sequence[float], tol: float = 1e-6) -> bool:
        """Bounds, integrality and rows, all within ``tol``."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_vars,):
            return False
        arr = self.arrays()
        if np.any(x < arr.lb - tol) or np.any(x > arr.ub + tol):
            return False
        xb = x[arr.is_binary]
        if np.any(np.abs(xb - np.round(xb)) > tol):
            return False
        if arr.A.shape[0] == 0:
            return True
        lhs = arr.A @ x
        scale = 1.0 + np.abs(arr.b)
        viol = np.where(arr.rel == 0, lhs - arr.b,
                        np.where(arr.rel == 1, arr.b - lhs, np.abs(lhs - arr.b)))
        return bool(np.all(viol <= tol * scale))

    def relaxed_copy(self) -> "MilpModel":
        """Same model with every binary variable replaced by a [0,1] continuous one."""
        out = MilpModel(self.name + "_relaxed", self.sense)
        for v in self.variables:
            out.add_var(v.name, "continuous", v.lb, v.ub)
        for c in self.constraints:
            out.add_constraint(c.coefs, c.rel, c.rhs, c.name)
        out.set_objective(self.objective, self.objective_constant)
        return out


@dataclass
class ModelArrays:
    """Dense numeric view of a model. ``rel`` codes: 0 is <=, 1 is >=, 2 is =."""

    A: np.ndarray
    b: np.ndarray
    rel: np.ndarray
    c: np.ndarray
    c0: float
    lb: np.ndarray
    ub: np.ndarray
    is_binary: np.ndarray
    maximize: bool

    @classmethod
    def from_model(cls, m: MilpModel) -> "ModelArrays":
        n, mrows = m.n_vars, m.n_constraints
        A = np.zeros((mrows, n))
        b = np.zeros(mrows)
        rel = np.zeros(mrows, dtype=np.int8)
        codes = {"<=": 0, ">=": 1, "=": 2}
        for i, con in enumerate(m.constraints):
            for j, a in con.coefs.items():
                A[i, j] = a
            b[i] = con.rhs
            rel[i] = codes[con.rel]
        c = np.zeros(n)
        for j, a in m.objective.items():
            c[j] = a
        lb = np.array([v.lb for v in m.variables], dtype=float)
        ub = np.array([v.ub for v in m.variables], dtype=float)
        is_bin = np.array([v.kind == "binary" for v in m.variables], dtype=bool)
        return cls(A, b, rel, c, m.objective_constant, lb, ub, is_bin, m.sense == "max")


@dataclass
class SolveResult:
    status: Status
    x: Optional[np.ndarray] = None
    objective: float = math.nan
    best_bound: float = math.nan
    runtime: float = 0.0
    node_count: int = 0
    message: str = ""
    basis: Optional[object] = field(default=None, repr=False)

    @property
    def has_solution(self) -> bool:
        return self.x is not None and self.status.has_solution

    def value(self, model: MilpModel, name: str) -> float:
        if self.x is None:
            raise ModelError("result carries no solution")
        return float(self.x[model.index(name)])

    def gap(self) -> float:
        if not (math.isfinite(self.objective) and math.isfinite(self.best_bound)):
            return math.inf
        return abs(self.objective - self.best_bound) / max(1.0, abs(self.objective))
