from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dnfmilp.dataset import (BinaryDataset, DatasetError, DegenerateDatasetError,
                             GeneratorConfig, RetentionError, class_weights, generate_synthetic,
                             load_csv, read_rule_sidecar, save_csv, write_rule_sidecar)


def _ds(n_cases, n_controls, J=2):
    X = np.zeros((n_cases + n_controls, J), dtype=int)
    y = [1] * n_cases + [0] * n_controls
    return BinaryDataset(X, y)


def test_weights_ten_samples():
    w = class_weights(_ds(4, 6))
    assert w.control_weight == Fraction(2, 5)
    assert w.case_weight == Fraction(3, 5)
    assert np.allclose(w.w[:4], 0.6) and np.allclose(w.w[4:], 0.4)


def test_weights_balanced_and_three_samples():
    assert class_weights(_ds(2, 2)).case_weight == Fraction(1, 2)
    w = class_weights(_ds(1, 2))
    assert (w.control_weight, w.case_weight) == (Fraction(1, 3), Fraction(2, 3))
    assert w.class_mass(2, 1) == (Fraction(2, 3), Fraction(2, 3))


def test_degenerate_weights():
    with pytest.raises(DegenerateDatasetError):
        class_weights(_ds(3, 0))


@given(st.integers(1, 40), st.integers(1, 40))
def test_weighted_masses_equal(n1, n0):
    w = class_weights(_ds(n1, n0))
    assert w.control_weight * n0 == w.case_weight * n1


def test_dataset_validation():
    with pytest.raises(DatasetError):
        BinaryDataset([[0, 2]], [1])
    with pytest.raises(DatasetError):
        BinaryDataset([[0, 1]], [1, 0])
    with pytest.raises(DatasetError):
        BinaryDataset(np.zeros((0, 2)), [])
    ds = _ds(1, 1)
    assert ds.n_cases + ds.n_controls == ds.N
    with pytest.raises(ValueError):
        ds.X[0, 0] = 1  # read-only


def test_generator_no_noise_reproduces_labels():
    for seed in range(10):
        ds, rule = generate_synthetic(GeneratorConfig(60, 6, 2, 3, seed=seed))
        assert np.array_equal(rule.predict(ds.X), ds.y.astype(bool))
        assert len(rule) == 2
        assert all(1 <= len(c) <= 3 for c in rule)
        assert 0.25 <= ds.y.mean() <= 0.75


def test_generator_exact_flip_count():
    cfg = GeneratorConfig(1000, 10, 2, 2, noise_rate=0.05, seed=3)
    assert cfg.n_flips == 50
    ds, rule = generate_synthetic(cfg)
    assert int(np.sum(rule.predict(ds.X) != ds.y.astype(bool))) == 50


def test_generator_deterministic():
    cfg = GeneratorConfig(50, 7, 2, 2, noise_rate=0.025, seed=99)
    a, ra = generate_synthetic(cfg)
    b, rb = generate_synthetic(cfg)
    assert a == b and ra == rb
    c, _ = generate_synthetic(GeneratorConfig(50, 7, 2, 2, noise_rate=0.025, seed=100))
    assert a != c


def test_generator_retention_failure():
    # with very sparse X a clause almost never fires, so cases stay below 25 %
    cfg = GeneratorConfig(200, 8, 1, 3, density=0.02, seed=1, max_attempts=3)
    with pytest.raises(RetentionError):
        generate_synthetic(cfg)


@pytest.mark.parametrize("kw", [dict(noise_rate=0.5), dict(noise_rate=-0.1), dict(density=0.0),
                                dict(density=1.0), dict(max_attempts=0)])
def test_generator_config_validation(kw):
    with pytest.raises(DatasetError):
        GeneratorConfig(10, 3, 1, 1, **kw)


def test_generator_config_too_many_clauses():
    with pytest.raises(DatasetError):
        GeneratorConfig(10, 2, 4, 1)
    with pytest.raises(DatasetError):
        GeneratorConfig(10, 2, 1, 3)


def test_csv_round_trip(tmp_path):
    ds = BinaryDataset([[1, 0], [0, 1], [1, 1]], [1, 0, 1])
    p = tmp_path / "d.csv"
    save_csv(ds, p)
    assert p.read_text().splitlines()[0] == "x1,x2,label"
    assert load_csv(p) == ds


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 12), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_csv_round_trip_random(tmp_path_factory, N, J, seed):
    rng = np.random.default_rng(seed)
    ds = BinaryDataset(rng.integers(0, 2, (N, J)), rng.integers(0, 2, N))
    p = tmp_path_factory.mktemp("rt") / "d.csv"
    save_csv(ds, p)
    assert load_csv(p) == ds


def test_csv_bad_cell_names_row_and_column(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x1,x2,label\n1,0,1\n0,2,0\n")
    with pytest.raises(DatasetError, match=r"row 3, column 'x2'"):
        load_csv(p)


def test_csv_header_only(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("x1,x2,label\n")
    with pytest.raises(DatasetError, match="no samples"):
        load_csv(p)


def test_csv_ragged_and_missing_label(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("x1,x2,label\n1,0\n")
    with pytest.raises(DatasetError, match="row 2"):
        load_csv(p)
    p.write_text("x1,x2\n1,0\n")
    with pytest.raises(DatasetError, match="label"):
        load_csv(p)
    p.write_text("")
    with pytest.raises(DatasetError):
        load_csv(p)


def test_sidecar_round_trip(tmp_path):
    cfg = GeneratorConfig(40, 5, 2, 2, seed=7)
    ds, rule = generate_synthetic(cfg)
    p = tmp_path / "d.rule.txt"
    write_rule_sidecar(p, rule, cfg)
    text = p.read_text()
    assert "# seed=7" in text
    assert read_rule_sidecar(p) == rule
