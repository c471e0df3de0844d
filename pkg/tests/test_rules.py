from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dnfmilp.dataset import BinaryDataset
from dnfmilp.rules import (AndClause, ConfusionCounts, DnfRule, RuleError, balanced_error,
                           clause_satisfies, confusion, coverage_bits, coverage_matrix,
                           hamming_loss, normalized, rule_predict, sensitivity, specificity)

from conftest import random_dataset, weighted_error


def test_clause_satisfies_examples():
    # features {1,3} in 1-based text are columns 0 and 2
    c = AndClause([0, 2])
    assert clause_satisfies(c, [1, 0, 1]) == 1
    assert clause_satisfies(c, [1, 1, 0]) == 0
    assert clause_satisfies(AndClause([1]), [0, 1]) == 1
    with pytest.raises(RuleError):
        clause_satisfies(c, [1, 1])


def test_clause_validation():
    with pytest.raises(RuleError):
        AndClause([])
    with pytest.raises(RuleError):
        AndClause([1, 1])
    with pytest.raises(RuleError):
        AndClause([-1])
    assert AndClause([3, 1]).features == (1, 3)
    with pytest.raises(RuleError):
        DnfRule((AndClause([0]), AndClause([0])))


def test_rule_predict_examples():
    ds = BinaryDataset([[1, 0], [0, 1], [0, 0]], [1, 1, 0])
    assert rule_predict(DnfRule(()), ds).tolist() == [0, 0, 0]
    r = DnfRule((AndClause([0]), AndClause([1])))
    assert rule_predict(r, ds).tolist() == [1, 1, 0]


def test_balanced_error_examples():
    ds = BinaryDataset([[0]] * 4, [1, 1, 0, 0])
    assert balanced_error([1, 1, 0, 0], ds) == 0
    assert balanced_error([1, 1, 1, 0], ds) == Fraction(1, 2)
    assert balanced_error([0, 0, 0, 0], ds) == Fraction(2 * 2, 4)
    assert normalized(balanced_error([0, 0, 0, 0], ds), ds) == Fraction(1, 4)


def test_hamming_example():
    # control satisfying both clauses (w=1/2 each hit), one missed case (w=1/2)
    X = [[1, 1], [0, 0], [1, 1], [0, 0]]
    ds = BinaryDataset(X, [1, 1, 0, 0])
    r = DnfRule((AndClause([0]), AndClause([1])))
    assert hamming_loss(r, ds) == Fraction(3, 2)


def test_hamming_zero_when_separating():
    ds = BinaryDataset([[1, 0], [1, 1], [0, 1]], [1, 1, 0])
    r = DnfRule((AndClause([0]),))
    assert balanced_error(rule_predict(r, ds), ds) == 0
    assert hamming_loss(r, ds) == 0


def _random_rule(rng, J, K, M):
    clauses = set()
    while len(clauses) < K:
        size = int(rng.integers(1, M + 1))
        clauses.add(AndClause(rng.choice(J, size=min(size, J), replace=False).tolist()))
    return DnfRule(tuple(sorted(clauses)))


def test_metric_relations_random(rng):
    for _ in range(300):
        N, J = int(rng.integers(2, 25)), int(rng.integers(1, 6))
        ds = random_dataset(rng, N, J)
        K = int(rng.integers(1, min(3, J) + 1))
        rule = _random_rule(rng, J, K, min(2, J))
        yhat = rule.predict(ds.X)
        be = balanced_error(yhat, ds)
        assert be == weighted_error(ds.X, ds.y, yhat)
        assert hamming_loss(rule, ds) >= be
        assert 0 <= be <= Fraction(2 * ds.n_cases * ds.n_controls, ds.N)
        # monotone: adding a clause never removes a positive
        extra = _random_rule(rng, J, 1, min(2, J)).clauses[0]
        if extra not in rule.clauses:
            bigger = DnfRule(rule.clauses + (extra,))
            assert np.all(bigger.predict(ds.X) >= yhat)


def test_permutation_invariance(rng):
    for _ in range(50):
        ds = random_dataset(rng, 15, 4)
        rule = _random_rule(rng, 4, 2, 2)
        perm = rng.permutation(ds.N)
        ds2 = BinaryDataset(ds.X[perm], ds.y[perm])
        assert balanced_error(rule.predict(ds.X), ds) == balanced_error(rule.predict(ds2.X), ds2)


def test_confusion_and_rates():
    ds = BinaryDataset([[0]] * 6, [1, 1, 1, 1, 0, 0])
    cc = confusion(ds.y, ds)
    assert sensitivity(cc) == specificity(cc) == 1
    cc = confusion(np.zeros(6), ds)
    assert (sensitivity(cc), specificity(cc)) == (0, 1)
    assert sensitivity(ConfusionCounts(3, 0, 0, 1)) == Fraction(3, 4)
    with pytest.raises(RuleError):
        sensitivity(ConfusionCounts(0, 1, 1, 0))
    with pytest.raises(RuleError):
        specificity(ConfusionCounts(1, 0, 0, 1))
    with pytest.raises(RuleError):
        confusion([1, 0], ds)


def test_coverage_matrix(rng):
    ds = random_dataset(rng, 20, 5)
    pool = [AndClause([0]), AndClause([1, 2]), AndClause([1, 2])]
    z = coverage_matrix(pool, ds)
    assert z.shape == (20, 3)
    for n in range(20):
        assert z[n, 1] == clause_satisfies(pool[1], ds.X[n])
    assert np.array_equal(z[:, 1], z[:, 2])
    bits = coverage_bits(pool[0], ds)
    assert [(bits >> n) & 1 for n in range(20)] == z[:, 0].astype(int).tolist()
    assert coverage_matrix([], ds).shape == (20, 0)


def test_hidden_rule_coverage_reproduces_labels():
    from dnfmilp.dataset import GeneratorConfig, generate_synthetic
    ds, rule = generate_synthetic(GeneratorConfig(40, 6, 2, 2, seed=4))
    z = coverage_matrix(list(rule.clauses), ds)
    assert np.array_equal(z.any(axis=1), ds.y.astype(bool))


literal = st.integers(0, 11)
clause_st = st.sets(literal, min_size=1, max_size=4).map(AndClause)


@settings(max_examples=100)
@given(st.lists(clause_st, max_size=4, unique=True))
def test_text_round_trip(clauses):
    rule = DnfRule(tuple(clauses))
    assert DnfRule.from_text(rule.to_text()) == rule
    assert DnfRule.from_text(str(rule)) == rule


def test_text_form():
    rule = DnfRule((AndClause([11, 2]), AndClause([0])))
    assert rule.to_text() == "x3 AND x12\nOR\nx1\n"
    assert str(AndClause([0, 2])) == "x1 AND x3"
    assert DnfRule.from_text("FALSE") == DnfRule(())
    with pytest.raises(RuleError):
        AndClause.parse("x0 AND x1")
