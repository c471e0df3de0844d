"""Independent brute-force oracles shared by the test modules.

Nothing here calls the package's metric code: errors are recomputed from raw
counts so the oracles can catch mistakes in ``dnfmilp.rules`` too.
"""
from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
import pytest

from dnfmilp.dataset import BinaryDataset, GeneratorConfig, RetentionError, generate_synthetic


def clause_cover(X, feats):
    if not feats:
        return np.ones(X.shape[0], dtype=bool)
    return np.all(np.asarray(X)[:, list(feats)] == 1, axis=1)


def weighted_error(X, y, yhat):
    """Control-weighted FP plus case-weighted FN, exact."""
    y = np.asarray(y).astype(bool)
    yhat = np.asarray(yhat).astype(bool)
    n1 = int(y.sum())
    n0 = y.size - n1
    fp = int(np.sum(yhat & ~y))
    fn = int(np.sum(~yhat & y))
    return Fraction(n1 * fp + n0 * fn, y.size)


def all_clauses(J, M):
    return [c for s in range(1, M + 1) for c in itertools.combinations(range(J), s)]


def brute_accuracy(X, y, K, M):
    """Minimum balanced error over all rules of at most K distinct clauses of size <= M."""
    X = np.asarray(X)
    covs = [clause_cover(X, c) for c in all_clauses(X.shape[1], M)]
    best = weighted_error(X, y, np.zeros(X.shape[0], dtype=bool))
    for r in range(1, K + 1):
        for combo in itertools.combinations(range(len(covs)), r):
            yhat = np.zeros(X.shape[0], dtype=bool)
            for i in combo:
                yhat |= covs[i]
            best = min(best, weighted_error(X, y, yhat))
    return best


def brute_hamming(X, y, K, M):
    """Minimum Hamming-style loss over exactly K clause slots.

    A slot may hold any clause of size <= M or be left featureless, in which
    case every sample satisfies it.  Repeats are allowed (each repeat counts).
    """
    X = np.asarray(X)
    y = np.asarray(y).astype(bool)
    n1 = int(y.sum())
    n0 = y.size - n1
    slots = [()] + all_clauses(X.shape[1], M)
    covs = [clause_cover(X, c) for c in slots]
    best = None
    for combo in itertools.combinations_with_replacement(range(len(slots)), K):
        yhat = np.zeros(X.shape[0], dtype=bool)
        hits = 0
        for i in combo:
            yhat |= covs[i]
            hits += int(np.sum(covs[i] & ~y))
        val = Fraction(n1 * hits + n0 * int(np.sum(~yhat & y)), y.size)
        if best is None or val < best:
            best = val
    return best


def random_dataset(rng, N, J, p=0.5):
    while True:
        X = (rng.random((N, J)) < p).astype(int)
        y = rng.integers(0, 2, N)
        if 0 < y.sum() < N:
            return BinaryDataset(X, y)


def planted_suite(count=50, seed=0, N=(10, 40), J=(3, 8), K=(1, 2), M=(1, 2), noise=0.0):
    """Deterministic list of (dataset, planted rule, K, M) from the generator."""
    rng = np.random.default_rng(seed)
    out = []
    s = 1000 * seed
    while len(out) < count:
        s += 1
        n = int(rng.integers(N[0], N[1] + 1))
        j = int(rng.integers(J[0], J[1] + 1))
        k = int(rng.integers(K[0], K[1] + 1))
        m = int(rng.integers(M[0], M[1] + 1))
        try:
            ds, rule = generate_synthetic(GeneratorConfig(n, j, k, m, noise_rate=noise, seed=s))
        except RetentionError:
            continue
        out.append((ds, rule, k, m))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
