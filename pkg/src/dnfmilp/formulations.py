"""The six exact DNF-learning programs BP1..BP6.

Each program picks one objective (balanced accuracy or Hamming loss), one way
to link predictions to clause indicators ("OR" rows) and one way to link
clause indicators to feature selections ("AND" rows):

====  ========  ==============  ===========
id    objective OR rows         AND rows
====  ========  ==============  ===========
BP1   accuracy  aggregated      aggregated
BP2   accuracy  aggregated      per-feature
BP3   accuracy  per-clause      aggregated
BP4   accuracy  per-clause      per-feature
BP5   hamming   cases only      aggregated
BP6   hamming   cases only      per-feature
====  ========  ==============  ===========

Variables: ``s[k,j]`` (feature j in clause k), ``t[n,k]`` (sample n meets
clause k) and ``yhat[n]`` (prediction).  Every clause slot is always present;
a slot with no features is vacuously true for every sample.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from .dataset import BinaryDataset
from .milp import INT_TOL, MilpModel
from .rules import AndClause, DnfRule

MAX_NKJ = 2_000_000

ACCURACY, HAMMING = "accuracy", "hamming"
AGG, PER = "aggregated", "per"


class FormulationError(ValueError):
    pass


class ExtractionError(ValueError):
    pass


class BP(str, enum.Enum):
    BP1 = "BP1"
    BP2 = "BP2"
    BP3 = "BP3"
    BP4 = "BP4"
    BP5 = "BP5"
    BP6 = "BP6"

    @property
    def objective(self) -> str:
        return HAMMING if self in (BP.BP5, BP.BP6) else ACCURACY

    @property
    def or_rows(self) -> str:
        return PER if self in (BP.BP3, BP.BP4) else AGG

    @property
    def and_rows(self) -> str:
        return PER if self in (BP.BP2, BP.BP4, BP.BP6) else AGG


@dataclass(frozen=True)
class FormulationId:
    """Which program to build and how.

    ``relax_safe_vars`` turns into continuous variables every binary whose
    integrality is implied at an optimum.  ``relax_case_links`` additionally
    relaxes the case-side clause indicators of BP3, which reproduces the
    commonly quoted variable counts for that model but is *not*
    optimum-preserving (a case may then be "half covered").
    """

    bp: BP
    relax_safe_vars: bool = False
    use_combined_bp4: bool = False
    relax_case_links: bool = False

    def __post_init__(self):
        object.__setattr__(self, "bp", BP(self.bp))
        if self.use_combined_bp4 and self.bp is not BP.BP4:
            raise FormulationError("the combined OR/AND row only applies to BP4")
        if self.relax_case_links and (self.bp is not BP.BP3 or not self.relax_safe_vars):
            raise FormulationError("relax_case_links needs BP3 with relax_safe_vars")

    @classmethod
    def parse(cls, text: str, **flags) -> "FormulationId":
        try:
            return cls(BP(text.strip().upper()), **flags)
        except ValueError:
            raise FormulationError(f"unknown formulation {text!r}; expected BP1..BP6") from None


@dataclass(frozen=True)
class ModelDims:
    n_constraints: int
    n_binary: int
    n_continuous: int

    @classmethod
    def of(cls, model: MilpModel) -> "ModelDims":
        return cls(model.n_constraints, model.n_binary, model.n_continuous)


def expected_dims(fid: FormulationId, n0: int, n1: int, J: int, K: int) -> ModelDims:
    """Closed-form sizes of the model :func:`build` produces."""
    N = n0 + n1
    bp = fid.bp
    combined = fid.use_combined_bp4
    rows = K + n1  # clause-size rows and case OR rows
    rows += n1 * K if bp.and_rows == AGG else n1 * J * K
    rows += n0 * K  # control AND rows (or the combined row)
    if bp.objective == ACCURACY:
        if bp.or_rows == AGG:
            rows += n0
        elif not combined:
            rows += n0 * K
    t_ctrl = 0 if combined else n0 * K
    n_yhat = N if bp.objective == ACCURACY else n1
    total = J * K + n1 * K + t_ctrl + n_yhat
    if not fid.relax_safe_vars:
        return ModelDims(rows, total, 0)
    cont = t_ctrl + n1  # control indicators and case predictions
    if bp.and_rows == PER or fid.relax_case_links:
        cont += n1 * K
    if bp.objective == ACCURACY and bp.or_rows == PER:
        cont += n0
    return ModelDims(rows, total - cont, cont)


class FormulationModel(MilpModel):
    """A :class:`MilpModel` that remembers where s, t and yhat live."""

    fid: FormulationId
    dataset: BinaryDataset
    K: int
    M: int
    s_idx: np.ndarray            # K x J
    t_idx: Dict[tuple, int]      # (n, k) -> var
    yhat_idx: Dict[int, int]     # n -> var


def build(fid: FormulationId, ds: BinaryDataset, K: int, M: int,
          max_nkj: int = MAX_NKJ) -> FormulationModel:
    """Build the program ``fid`` for dataset ``ds`` with K clause slots of at most M features."""
    if K < 1:
        raise FormulationError("K must be at least 1")
    if not 1 <= M <= ds.J:
        raise FormulationError(f"M must be in [1, J={ds.J}]")
    if ds.N * K * ds.J > max_nkj:
        raise FormulationError(f"N*K*J = {ds.N * K * ds.J} exceeds the cap {max_nkj}")
    bp = fid.bp
    w = ds.class_weights()
    wc, wk = float(w.control_weight), float(w.case_weight)
    relax = fid.relax_safe_vars
    X, J = ds.X, ds.J
    cases, controls = ds.cases, ds.controls
    combined = fid.use_combined_bp4
    acc = bp.objective == ACCURACY

    m = FormulationModel(f"{bp.value.lower()}", "min")
    m.fid, m.dataset, m.K, m.M = fid, ds, K, M

    def kind(continuous_ok: bool) -> str:
        return "continuous" if relax and continuous_ok else "binary"

    s_idx = np.array([[m.add_var(f"s_{k}_{j}", "binary") for j in range(J)] for k in range(K)],
                     dtype=int).reshape(K, J)
    t_idx: Dict[tuple, int] = {}
    case_t_cont = bp.and_rows == PER or fid.relax_case_links
    for n in cases:
        for k in range(K):
            t_idx[(n, k)] = m.add_var(f"t_{n}_{k}", kind(case_t_cont), 0.0, 1.0)
    if not combined:
        for n in controls:
            for k in range(K):
                t_idx[(n, k)] = m.add_var(f"t_{n}_{k}", kind(True), 0.0, 1.0)
    yhat_idx: Dict[int, int] = {}
    for n in cases:
        yhat_idx[n] = m.add_var(f"yhat_{n}", kind(True), 0.0, 1.0)
    if acc:
        for n in controls:
            yhat_idx[n] = m.add_var(f"yhat_{n}", kind(bp.or_rows == PER), 0.0, 1.0)
    m.s_idx, m.t_idx, m.yhat_idx = s_idx, t_idx, yhat_idx

    miss = 1 - X  # miss[n, j] = 1 when sample n lacks feature j
    for k in range(K):
        m.add_constraint({int(s_idx[k, j]): 1.0 for j in range(J)}, "<=", M, f"size_{k}")
    for n in cases:
        row = {yhat_idx[n]: 1.0}
        for k in range(K):
            row[t_idx[(n, k)]] = -1.0
        m.add_constraint(row, "<=", 0.0, f"or_case_{n}")
    if acc and bp.or_rows == AGG:
        for n in controls:
            row = {yhat_idx[n]: float(K)}
            for k in range(K):
                row[t_idx[(n, k)]] = -1.0
            m.add_constraint(row, ">=", 0.0, f"or_ctrl_{n}")
    if acc and bp.or_rows == PER and not combined:
        for n in controls:
            for k in range(K):
                m.add_constraint({yhat_idx[n]: -1.0, t_idx[(n, k)]: 1.0}, "<=", 0.0,
                                 f"or_ctrl_{n}_{k}")
    for n in cases:
        for k in range(K):
            if bp.and_rows == AGG:
                row = {t_idx[(n, k)]: float(J)}
                row.update({int(s_idx[k, j]): 1.0 for j in range(J) if miss[n, j]})
                m.add_constraint(row, "<=", float(J), f"and_case_{n}_{k}")
            else:
                for j in range(J):
                    row = {t_idx[(n, k)]: 1.0}
                    if miss[n, j]:
                        row[int(s_idx[k, j])] = 1.0
                    m.add_constraint(row, "<=", 1.0, f"and_case_{n}_{k}_{j}")
    for n in controls:
        for k in range(K):
            lead = yhat_idx[n] if combined else t_idx[(n, k)]
            row = {lead: 1.0}
            row.update({int(s_idx[k, j]): 1.0 for j in range(J) if miss[n, j]})
            m.add_constraint(row, ">=", 1.0, f"and_ctrl_{n}_{k}")

    obj: Dict[int, float] = {}
    for n in cases:
        obj[yhat_idx[n]] = -wk
    const = wk * len(cases)
    if acc:
        for n in controls:
            obj[yhat_idx[n]] = wc
    else:
        for n in controls:
            for k in range(K):
                obj[t_idx[(n, k)]] = wc
    m.set_objective(obj, const)
    m.repair = lambda x: _repair(m, x)
    return m


def _masks_from_s(model: FormulationModel, x: np.ndarray) -> np.ndarray:
    """Round s row-wise, keeping at most M features per clause."""
    vals = x[model.s_idx]
    masks = np.zeros_like(vals, dtype=bool)
    for k in range(model.K):
        on = np.flatnonzero(vals[k] > 0.5)
        if on.size > model.M:
            on = on[np.argsort(-vals[k, on], kind="stable")[: model.M]]
        masks[k, on] = True
    return masks


def complete_solution(model: FormulationModel, masks: np.ndarray) -> np.ndarray:
    """Full variable vector implied by clause masks (K x J booleans)."""
    ds = model.dataset
    x = np.zeros(model.n_vars)
    cover = np.ones((ds.N, model.K), dtype=bool)
    for k in range(model.K):
        feats = np.flatnonzero(masks[k])
        x[model.s_idx[k, feats]] = 1.0
        if feats.size:
            cover[:, k] = np.all(ds.X[:, feats] == 1, axis=1)
    for (n, k), i in model.t_idx.items():
        x[i] = float(cover[n, k])
    for n, i in model.yhat_idx.items():
        x[i] = float(cover[n].any())
    return x


def _repair(model: FormulationModel, x: np.ndarray) -> Optional[np.ndarray]:
    return complete_solution(model, _masks_from_s(model, x))


def extract_rule(model: FormulationModel, x: Sequence[float], tol: float = INT_TOL) -> DnfRule:
    """Rule encoded by the s variables of a solution.

    Featureless slots and repeated clauses are dropped.  For the accuracy
    objectives a featureless slot makes every sample positive; that has the
    same balanced error as predicting every sample negative, so the empty
    rule is returned in that case.
    """
    x = np.asarray(x, dtype=float)
    vals = x[model.s_idx]
    frac = (vals > tol) & (vals < 1 - tol)
    if frac.any():
        k, j = map(int, np.argwhere(frac)[0])
        raise ExtractionError(f"s[{k},{j}] = {vals[k, j]:.6g} is fractional")
    clauses = []
    vacuous = False
    for k in range(model.K):
        feats = np.flatnonzero(vals[k] >= 1 - tol)
        if feats.size == 0:
            vacuous = True
            continue
        c = AndClause(feats.tolist())
        if c not in clauses:
            clauses.append(c)
    if vacuous and model.fid.bp.objective == ACCURACY:
        return DnfRule(())
    return DnfRule(tuple(clauses))


# -- relaxed-polyhedron membership ---------------------------------------------

@dataclass(frozen=True)
class RelaxPoint:
    """Values of one sample's variables: prediction, clause indicators, selections."""

    is_case: bool
    x_row: np.ndarray   # length J
    yhat: float
    t: np.ndarray       # length K
    s: np.ndarray       # K x J


def relaxation_point_check(family: str, p: RelaxPoint, tol: float = 1e-12) -> bool:
    """Is ``p`` inside the [0,1]-relaxed polyhedron of one constraint family?

    ``family`` is ``"OR1"``/``"OR2"`` (aggregated / per-clause OR rows) or
    ``"AND1"``/``"AND2"`` (aggregated / per-feature AND rows).
    """
    t = np.asarray(p.t, dtype=float).reshape(-1)
    s = np.atleast_2d(np.asarray(p.s, dtype=float))
    xr = np.asarray(p.x_row, dtype=float).reshape(-1)
    K, J = s.shape
    if t.shape[0] != K or xr.shape[0] != J:
        raise ValueError("point dimensions do not match")
    if not (-tol <= p.yhat <= 1 + tol and np.all((t >= -tol) & (t <= 1 + tol))
            and np.all((s >= -tol) & (s <= 1 + tol))):
        return False
    miss = 1.0 - xr
    fam = family.upper()
    if fam in ("OR1", "OR2"):
        if p.is_case:
            return p.yhat - t.sum() <= tol
        if fam == "OR1":
            return K * p.yhat - t.sum() >= -tol
        return bool(np.all(-p.yhat + t <= tol))
    if fam in ("AND1", "AND2"):
        missed = s @ miss  # per clause
        if not p.is_case:
            return bool(np.all(t + missed >= 1 - tol))
        if fam == "AND1":
            return bool(np.all(J * t + missed <= J + tol))
        return bool(np.all(t[:, None] + miss[None, :] * s <= 1 + tol))
    raise ValueError(f"unknown constraint family {family!r}")
