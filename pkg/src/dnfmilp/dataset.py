"""Binary datasets, class-balancing weights, synthetic generation and CSV I/O."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from .rules import AndClause, DnfRule

PathLike = Union[str, Path]
LABEL_COLUMN = "label"


class DatasetError(ValueError):
    pass


class DegenerateDatasetError(DatasetError):
    """All samples share one class."""


class RetentionError(RuntimeError):
    """No dataset with an acceptable case/control ratio within ``max_attempts``."""


@dataclass(frozen=True)
class SampleWeights:
    w: np.ndarray
    control_weight: Fraction  # |N1| / N
    case_weight: Fraction     # |N0| / N

    def class_mass(self, n_controls: int, n_cases: int) -> Tuple[Fraction, Fraction]:
        return self.control_weight * n_controls, self.case_weight * n_cases


@dataclass(frozen=True, eq=False)
class BinaryDataset:
    """Immutable N x J 0/1 feature matrix with 0/1 labels (1 = case)."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.array(self.X)
        y = np.array(self.y).reshape(-1)
        if X.ndim != 2:
            raise DatasetError(f"X must be 2-D, got shape {X.shape}")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise DatasetError("dataset needs at least one sample and one feature")
        if y.shape[0] != X.shape[0]:
            raise DatasetError(f"{X.shape[0]} rows but {y.shape[0]} labels")
        if not np.isin(X, (0, 1)).all() or not np.isin(y, (0, 1)).all():
            raise DatasetError("X and y must contain only 0 and 1")
        X = X.astype(np.uint8)
        y = y.astype(np.uint8)
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def J(self) -> int:
        return self.X.shape[1]

    @property
    def n_cases(self) -> int:
        return int(self.y.sum())

    @property
    def n_controls(self) -> int:
        return self.N - self.n_cases

    @property
    def cases(self) -> np.ndarray:
        return np.flatnonzero(self.y == 1)

    @property
    def controls(self) -> np.ndarray:
        return np.flatnonzero(self.y == 0)

    def class_weights(self) -> SampleWeights:
        return class_weights(self)

    def relabel(self, y) -> "BinaryDataset":
        return BinaryDataset(self.X, y)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryDataset):
            return NotImplemented
        return np.array_equal(self.X, other.X) and np.array_equal(self.y, other.y)

    def __hash__(self) -> int:
        return hash((self.X.tobytes(), self.y.tobytes(), self.X.shape))


def class_weights(ds: BinaryDataset) -> SampleWeights:
    """Controls get |N1|/N, cases get |N0|/N, so both classes carry equal mass."""
    n1, n0 = ds.n_cases, ds.n_controls
    if n1 == 0 or n0 == 0:
        raise DegenerateDatasetError("dataset needs at least one case and one control")
    wc, wk = Fraction(n1, ds.N), Fraction(n0, ds.N)
    w = np.where(ds.y == 1, float(wk), float(wc))
    w.flags.writeable = False
    return SampleWeights(w, wc, wk)


@dataclass(frozen=True)
class GeneratorConfig:
    N: int
    J: int
    K_true: int
    M_true: int
    noise_rate: float = 0.0
    density: float = 0.5
    seed: int = 0
    max_attempts: int = 25

    def __post_init__(self):
        for name in ("N", "J", "K_true", "M_true", "max_attempts"):
            if int(getattr(self, name)) < 1:
                raise DatasetError(f"{name} must be a positive count")
        if self.M_true > self.J:
            raise DatasetError("M_true cannot exceed J")
        if not 0 <= self.noise_rate < 0.5:
            raise DatasetError(f"noise_rate must be in [0, 0.5), got {self.noise_rate}")
        if not 0 < self.density < 1:
            raise DatasetError(f"density must be in (0, 1), got {self.density}")
        n_possible = sum(math.comb(self.J, s) for s in range(1, self.M_true + 1))
        if self.K_true > n_possible:
            raise DatasetError(f"only {n_possible} distinct clauses exist for J={self.J}, "
                               f"M_true={self.M_true}")

    @property
    def n_flips(self) -> int:
        return int(math.floor(self.noise_rate * self.N + 0.5))

    def as_dict(self) -> dict:
        return asdict(self)


def _random_rule(rng: np.random.Generator, cfg: GeneratorConfig) -> DnfRule:
    clauses = []
    while len(clauses) < cfg.K_true:
        size = int(rng.integers(1, cfg.M_true + 1))
        c = AndClause(rng.choice(cfg.J, size=size, replace=False).tolist())
        if c not in clauses:
            clauses.append(c)
    return DnfRule(tuple(clauses))


def generate_synthetic(cfg: GeneratorConfig) -> Tuple[BinaryDataset, DnfRule]:
    """Random X, a planted DNF rule, y = rule(X) with exactly ``cfg.n_flips`` labels flipped.

    Datasets whose case fraction falls outside [0.25, 0.75] are redrawn, up
    to ``cfg.max_attempts`` times.
    """
    rng = np.random.default_rng(cfg.seed)
    for _ in range(cfg.max_attempts):
        X = (rng.random((cfg.N, cfg.J)) < cfg.density).astype(np.uint8)
        rule = _random_rule(rng, cfg)
        y = rule.predict(X).astype(np.uint8)
        if cfg.n_flips:
            flip = rng.choice(cfg.N, size=cfg.n_flips, replace=False)
            y[flip] ^= 1
        frac = y.mean()
        if 0.25 <= frac <= 0.75:
            return BinaryDataset(X, y), rule
    raise RetentionError(f"no balanced dataset after {cfg.max_attempts} attempts for "
                         f"N={cfg.N}, J={cfg.J}, K={cfg.K_true}, M={cfg.M_true}")


def save_csv(ds: BinaryDataset, path: PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"x{j + 1}" for j in range(ds.J)] + [LABEL_COLUMN])
        for row, lab in zip(ds.X, ds.y):
            wr.writerow([int(v) for v in row] + [int(lab)])


def load_csv(path: PathLike) -> BinaryDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetError(f"{path}: empty file (header row is mandatory)")
    header = [h.strip() for h in rows[0]]
    if LABEL_COLUMN not in header:
        raise DatasetError(f"{path}: missing '{LABEL_COLUMN}' column")
    li = header.index(LABEL_COLUMN)
    body = [r for r in rows[1:] if r and any(c.strip() for c in r)]
    if not body:
        raise DatasetError(f"{path}: dataset has no samples")
    if len(header) < 2:
        raise DatasetError(f"{path}: dataset has no feature columns")
    data = np.zeros((len(body), len(header)), dtype=np.uint8)
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise DatasetError(f"{path}: row {i} has {len(r)} cells, expected {len(header)}")
        for k, cell in enumerate(r):
            cell = cell.strip()
            if cell not in ("0", "1"):
                raise DatasetError(f"{path}: row {i}, column '{header[k]}': "
                                   f"expected 0 or 1, got {cell!r}")
            data[i - 2, k] = cell == "1"
    y = data[:, li]
    X = np.delete(data, li, axis=1)
    return BinaryDataset(X, y)


def write_rule_sidecar(path: PathLike, rule: DnfRule, cfg: GeneratorConfig) -> None:
    """Text file recording the planted rule and generation parameters."""
    lines = [f"# {k}={v}" for k, v in cfg.as_dict().items()]
    Path(path).write_text("\n".join(lines) + "\n" + rule.to_text(), encoding="utf-8")


def read_rule_sidecar(path: PathLike) -> DnfRule:
    text = Path(path).read_text(encoding="utf-8")
    body = "\n".join(ln for ln in text.splitlines() if not ln.startswith("#"))
    return DnfRule.from_text(body)
