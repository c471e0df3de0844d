"""AND clauses, DNF rules and the classification metrics built on them.

Feature indices are 0-based in the API.  The text form is 1-based
(``x1`` is column 0) since that is how rules are usually read by people.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import TYPE_CHECKING, Iterable, Optional, Sequence, Tuple

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .dataset import BinaryDataset, SampleWeights


class RuleError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class AndClause:
    """Conjunction of positive literals; satisfied iff all listed features are 1."""

    features: Tuple[int, ...]

    def __init__(self, features: Iterable[int]):
        feats = tuple(int(j) for j in features)
        if not feats:
            raise RuleError("an AND clause needs at least one feature")
        if len(set(feats)) != len(feats):
            raise RuleError(f"duplicate feature in clause {feats}")
        if min(feats) < 0:
            raise RuleError(f"negative feature index in clause {feats}")
        object.__setattr__(self, "features", tuple(sorted(feats)))

    def __len__(self) -> int:
        return len(self.features)

    def __str__(self) -> str:
        return " AND ".join(f"x{j + 1}" for j in self.features)

    def mask(self, n_features: int) -> np.ndarray:
        if self.features[-1] >= n_features:
            raise RuleError(f"clause {self} exceeds {n_features} features")
        s = np.zeros(n_features, dtype=np.uint8)
        s[list(self.features)] = 1
        return s

    def covers(self, X: np.ndarray) -> np.ndarray:
        """Boolean vector: which rows of ``X`` satisfy the clause."""
        X = np.asarray(X)
        if self.features[-1] >= X.shape[1]:
            raise RuleError(f"clause {self} exceeds {X.shape[1]} features")
        return np.all(X[:, list(self.features)] == 1, axis=1)

    @classmethod
    def parse(cls, text: str) -> "AndClause":
        parts = [p.strip() for p in re.split(r"\bAND\b", text.strip())]
        feats = []
        for p in parts:
            mt = re.fullmatch(r"x(\d+)", p)
            if not mt or int(mt.group(1)) < 1:
                raise RuleError(f"bad literal {p!r} in clause {text!r}")
            feats.append(int(mt.group(1)) - 1)
        return cls(feats)


@dataclass(frozen=True)
class DnfRule:
    """OR of pairwise-distinct AND clauses. The empty rule predicts all zeros."""

    clauses: Tuple[AndClause, ...] = field(default=())

    def __post_init__(self):
        cl = tuple(self.clauses)
        if len(set(cl)) != len(cl):
            raise RuleError("DNF rule holds duplicate clauses")
        object.__setattr__(self, "clauses", cl)

    def __len__(self) -> int:
        return len(self.clauses)

    def __iter__(self):
        return iter(self.clauses)

    def __str__(self) -> str:
        return " OR ".join(f"({c})" for c in self.clauses) if self.clauses else "FALSE"

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X)
        out = np.zeros(X.shape[0], dtype=bool)
        for c in self.clauses:
            out |= c.covers(X)
        return out

    def max_clause_size(self) -> int:
        return max((len(c) for c in self.clauses), default=0)

    def to_text(self) -> str:
        return "\nOR\n".join(str(c) for c in self.clauses) + ("\n" if self.clauses else "")

    @classmethod
    def from_text(cls, text: str) -> "DnfRule":
        body = text.strip()
        if not body or body == "FALSE":
            return cls(())
        chunks = [c for c in re.split(r"^\s*OR\s*$|\bOR\b", body, flags=re.M) if c.strip()]
        return cls(tuple(AndClause.parse(c.strip().strip("()")) for c in chunks))


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int


def clause_satisfies(clause: AndClause, row: Sequence[int]) -> int:
    row = np.asarray(row)
    if clause.features[-1] >= row.shape[0]:
        raise RuleError(f"clause {clause} exceeds row length {row.shape[0]}")
    return int(all(row[j] == 1 for j in clause.features))


def rule_predict(rule: DnfRule, ds: "BinaryDataset") -> np.ndarray:
    return rule.predict(ds.X).astype(np.uint8)


def _weights(ds, w):
    return ds.class_weights() if w is None else w


def confusion(yhat: Sequence[int], ds: "BinaryDataset") -> ConfusionCounts:
    yhat = np.asarray(yhat).astype(bool)
    if yhat.shape != ds.y.shape:
        raise RuleError(f"prediction length {yhat.shape[0]} != {ds.N}")
    y = ds.y.astype(bool)
    tp = int(np.sum(yhat & y))
    fp = int(np.sum(yhat & ~y))
    return ConfusionCounts(tp, fp, ds.n_controls - fp, ds.n_cases - tp)


def balanced_error(yhat: Sequence[int], ds: "BinaryDataset",
                   w: Optional["SampleWeights"] = None) -> Fraction:
    """Weighted false positives plus weighted false negatives (exact)."""
    w = _weights(ds, w)
    cc = confusion(yhat, ds)
    return w.control_weight * cc.fp + w.case_weight * cc.fn


def normalized(value: Fraction, ds: "BinaryDataset") -> Fraction:
    """Objective value divided by the number of samples."""
    return Fraction(value) / ds.N


def hamming_loss(rule: DnfRule, ds: "BinaryDataset",
                 w: Optional["SampleWeights"] = None) -> Fraction:
    """Weighted clause hits on controls plus weighted missed cases."""
    w = _weights(ds, w)
    controls = ds.y == 0
    hits = sum(int(np.sum(c.covers(ds.X)[controls])) for c in rule.clauses)
    fn = confusion(rule.predict(ds.X), ds).fn
    return w.control_weight * hits + w.case_weight * fn


def sensitivity(cc: ConfusionCounts) -> Fraction:
    if cc.tp + cc.fn == 0:
        raise RuleError("sensitivity undefined without cases")
    return Fraction(cc.tp, cc.tp + cc.fn)


def specificity(cc: ConfusionCounts) -> Fraction:
    if cc.tn + cc.fp == 0:
        raise RuleError("specificity undefined without controls")
    return Fraction(cc.tn, cc.tn + cc.fp)


def coverage_matrix(pool: Sequence[AndClause], ds: "BinaryDataset") -> np.ndarray:
    """N x len(pool) boolean matrix, column k marks samples satisfying clause k."""
    if not pool:
        return np.zeros((ds.N, 0), dtype=bool)
    return np.column_stack([c.covers(ds.X) for c in pool])


def coverage_bits(clause: AndClause, ds: "BinaryDataset") -> int:
    """Coverage of ``clause`` packed into an int (bit n set iff sample n is covered)."""
    return bits_from_bool(clause.covers(ds.X))


def bits_from_bool(v: np.ndarray) -> int:
    packed = np.packbits(np.asarray(v, dtype=bool), bitorder="little")
    return int.from_bytes(packed.tobytes(), "little")

