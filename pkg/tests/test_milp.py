from __future__ import annotations

import itertools
import math
import threading

import numpy as np
import pytest

from dnfmilp.milp import (MilpModel, ModelError, Status, export_lp, read_lp, read_solution,
                          solve_branch_and_bound, solve_lp_relaxation, write_solution)


def _random_model(rng, n_bin, n_cont, m, sense="min"):
    mm = MilpModel("rand", sense)
    for i in range(n_bin):
        mm.add_var(f"b{i}", "binary")
    for i in range(n_cont):
        mm.add_var(f"c{i}", "continuous", 0.0, float(rng.integers(1, 5)))
    n = n_bin + n_cont
    for r in range(m):
        coefs = {j: float(rng.integers(-4, 5)) for j in range(n) if rng.random() < 0.6}
        rels = ["<=", ">=", "="] if n_cont else ["<=", ">="]
        rel = rels[int(rng.integers(0, len(rels)))]
        rhs = float(rng.integers(-2, 6))
        mm.add_constraint(coefs, rel, rhs, f"r{r}")
    mm.set_objective({j: float(rng.integers(-5, 6)) for j in range(n)})
    return mm


def _enumerate(model):
    """Optimum by enumerating binaries; continuous part solved by the HiGHS LP."""
    bins = [i for i, v in enumerate(model.variables) if v.kind == "binary"]
    best = None
    for bits in itertools.product((0, 1), repeat=len(bins)):
        sub = MilpModel("fix", model.sense)
        for i, v in enumerate(model.variables):
            if i in bins:
                b = bits[bins.index(i)]
                sub.add_var(v.name, "continuous", b, b)
            else:
                sub.add_var(v.name, v.kind, v.lb, v.ub)
        for c in model.constraints:
            sub.add_constraint(c.coefs, c.rel, c.rhs, c.name)
        sub.set_objective(model.objective, model.objective_constant)
        r = solve_lp_relaxation(sub, engine="highs")
        if r.status is Status.OPTIMAL:
            if best is None or (r.objective < best if model.sense == "min" else r.objective > best):
                best = r.objective
    return best


def test_lp_examples():
    m = MilpModel("a", "max")
    y = m.add_var("y", "continuous", 0, 1)
    m.add_constraint({y: 1}, "<=", 0.5)
    m.set_objective({y: 1})
    r = solve_lp_relaxation(m)
    assert r.status is Status.OPTIMAL and abs(r.objective - 0.5) < 1e-9

    m = MilpModel("b")
    y = m.add_var("y", "continuous", 0, 1)
    m.add_constraint({y: 1}, "<=", 0)
    m.add_constraint({y: 1}, ">=", 1)
    assert solve_lp_relaxation(m).status is Status.INFEASIBLE


def test_lp_unbounded():
    m = MilpModel("u", "max")
    x = m.add_var("x", "continuous", 0)
    m.set_objective({x: 1})
    assert solve_lp_relaxation(m).status is Status.UNBOUNDED


def test_lp_matches_highs(rng):
    for _ in range(150):
        m = _random_model(rng, int(rng.integers(0, 5)), int(rng.integers(1, 5)),
                          int(rng.integers(1, 7)), rng.choice(["min", "max"]))
        ours = solve_lp_relaxation(m)
        ref = solve_lp_relaxation(m, engine="highs")
        assert ours.status == ref.status
        if ref.status is Status.OPTIMAL:
            assert abs(ours.objective - ref.objective) < 1e-6
            assert m.relaxed_copy().is_feasible(ours.x)


def test_lp_is_deterministic(rng):
    m = _random_model(rng, 3, 3, 5)
    a, b = solve_lp_relaxation(m), solve_lp_relaxation(m)
    assert a.status == b.status
    if a.has_solution:
        assert np.array_equal(a.x, b.x)


def test_knapsack_equals_enumeration():
    m = MilpModel("knap", "max")
    v = [m.add_var(f"x{i}", "binary") for i in range(3)]
    m.add_constraint({v[0]: 3, v[1]: 4, v[2]: 5}, "<=", 8)
    m.set_objective({v[0]: 4, v[1]: 5, v[2]: 7})
    best = max(4 * a + 5 * b + 7 * c for a, b, c in itertools.product((0, 1), repeat=3)
               if 3 * a + 4 * b + 5 * c <= 8)
    r = solve_branch_and_bound(m)
    assert r.status is Status.OPTIMAL and r.objective == pytest.approx(best)


def test_branch_and_bound_matches_enumeration(rng):
    checked = 0
    for _ in range(120):
        m = _random_model(rng, int(rng.integers(1, 9)), int(rng.integers(0, 3)),
                          int(rng.integers(1, 6)), rng.choice(["min", "max"]))
        ref = _enumerate(m)
        r = solve_branch_and_bound(m)
        if ref is None:
            assert r.status is Status.INFEASIBLE
            continue
        checked += 1
        assert r.status is Status.OPTIMAL
        assert r.objective == pytest.approx(ref, abs=1e-6)
        assert m.is_feasible(r.x)
        relax = solve_lp_relaxation(m)
        if m.sense == "min":
            assert relax.objective <= r.objective + 1e-7
        else:
            assert relax.objective >= r.objective - 1e-7
    assert checked >= 40


def test_twenty_binary_enumeration(rng):
    m = MilpModel("set", "min")
    n = 20
    v = [m.add_var(f"x{i}", "binary") for i in range(n)]
    cover = rng.random((12, n)) < 0.25
    for r in range(12):
        cols = np.flatnonzero(cover[r])
        if cols.size == 0:
            cols = [r]
        m.add_constraint({v[j]: 1.0 for j in cols}, ">=", 1)
    cost = rng.integers(1, 9, n)
    m.set_objective({v[j]: float(cost[j]) for j in range(n)})
    A = np.zeros((12, n), dtype=bool)
    for r in range(12):
        cols = np.flatnonzero(cover[r])
        A[r, cols if cols.size else [r]] = True
    bits = ((np.arange(2 ** n)[:, None] >> np.arange(n)) & 1).astype(bool)
    feasible = (bits.astype(int) @ A.T.astype(int) >= 1).all(axis=1)
    best = (bits[feasible].astype(int) @ cost).min()
    assert solve_branch_and_bound(m).objective == pytest.approx(best)


def test_pure_lp_same_as_relaxation(rng):
    for _ in range(20):
        m = _random_model(rng, 0, 4, 4)
        a = solve_lp_relaxation(m)
        b = solve_branch_and_bound(m)
        assert a.status == b.status
        if a.has_solution:
            assert a.objective == pytest.approx(b.objective)


def test_bound_monotone_and_deterministic(rng):
    for sense in ("min", "max"):
        for _ in range(15):
            m = _random_model(rng, 10, 2, 6, sense)
            seen = []
            r = solve_branch_and_bound(m, trace=lambda n, b, inc: seen.append(b))
            for a, b in zip(seen, seen[1:]):
                if sense == "min":
                    assert b >= a - 1e-9
                else:
                    assert b <= a + 1e-9
            r2 = solve_branch_and_bound(m)
            assert r.status == r2.status and r.node_count == r2.node_count
            if r.has_solution:
                assert np.array_equal(r.x, r2.x)
                assert abs(r.objective - r.best_bound) <= 1e-6 * max(1.0, abs(r.objective))


def _hard_model(n=30):
    # even coefficients, odd target: LP feasible at every node, no binary solution
    m = MilpModel("hard", "max")
    v = [m.add_var(f"x{i}", "binary") for i in range(n)]
    m.set_objective({i: 2.0 for i in v})
    m.add_constraint({i: 2.0 for i in v}, "=", float(n) + 1)
    return m


def test_memory_abort_and_time_limit():
    m = _hard_model()
    r = solve_branch_and_bound(m, max_open_nodes=5)
    assert r.status is Status.MEMORY_ABORT
    r = solve_branch_and_bound(m, time_limit=0.0)
    assert r.status in (Status.TIME_LIMIT, Status.FEASIBLE_TIME_LIMIT)


def test_cancellation():
    ev = threading.Event()
    ev.set()
    r = solve_branch_and_bound(_hard_model(), cancel=ev)
    assert r.status is Status.CANCELLED


def test_model_validation():
    m = MilpModel()
    x = m.add_var("x", "binary", -3, 7)
    assert (m.variables[x].lb, m.variables[x].ub) == (0, 1)
    with pytest.raises(ModelError):
        m.add_var("x")
    with pytest.raises(ModelError):
        m.add_constraint({5: 1.0}, "<=", 1)
    with pytest.raises(ModelError):
        m.add_constraint({x: 1.0}, "<", 1)


def _two_var_model():
    m = MilpModel("two", "max")
    x = m.add_var("x", "binary")
    y = m.add_var("y", "continuous", 0, 3.5)
    m.add_constraint({x: 2, y: 1}, "<=", 4, "cap")
    m.add_constraint({x: 1, y: -1}, ">=", -3, "link")
    m.add_constraint({y: 1}, "=", 2.5, "fix")
    m.set_objective({x: 3, y: 1}, 0.5)
    return m


def test_lp_file_round_trip(tmp_path):
    m = _two_var_model()
    p = tmp_path / "m.lp"
    export_lp(m, p)
    text = p.read_text()
    for section in ("Maximize", "Subject To", "Bounds", "Binaries", "End"):
        assert section in text
    back = read_lp(p)
    assert [v.name for v in back.variables] == ["x", "y"]
    assert [(c.rel, c.rhs) for c in back.constraints] == [(c.rel, c.rhs) for c in m.constraints]
    assert back.objective_constant == 0.5
    assert solve_branch_and_bound(back).objective == pytest.approx(
        solve_branch_and_bound(m).objective)


def test_lp_file_random_round_trip(tmp_path, rng):
    for k in range(20):
        m = _random_model(rng, 3, 3, 5, rng.choice(["min", "max"]))
        p = tmp_path / f"r{k}.lp"
        export_lp(m, p)
        back = read_lp(p)
        a, b = solve_branch_and_bound(m), solve_branch_and_bound(back)
        assert a.status == b.status
        if a.has_solution:
            assert a.objective == pytest.approx(b.objective)


def test_empty_objective_file(tmp_path):
    m = MilpModel("e")
    m.add_var("z", "binary")
    p = tmp_path / "e.lp"
    export_lp(m, p)
    assert " obj: 0" in p.read_text()
    assert read_lp(p).objective == {}


def test_solution_file_adapter(tmp_path):
    m = _two_var_model()
    own = solve_branch_and_bound(m)
    # hand solution: y fixed at 2.5, x=0 gives 2.5+0.5; x=1 gives 3+2.5+0.5 but 2+2.5 > 4
    p = tmp_path / "sol.txt"
    p.write_text("# external\nx 0\ny 2.5\n")
    r = read_solution(m, p)
    assert r.status is Status.OPTIMAL and r.objective == pytest.approx(own.objective)
    write_solution(m, own.x, tmp_path / "own.txt")
    assert read_solution(m, tmp_path / "own.txt").objective == pytest.approx(own.objective)
    p.write_text("x 1\ny 2.5\n")
    assert read_solution(m, p).status is Status.INFEASIBLE
    p.write_text("w 1\n")
    with pytest.raises(ModelError):
        read_solution(m, p)


def test_infeasible_milp():
    m = MilpModel("inf")
    a = m.add_var("a", "binary")
    b = m.add_var("b", "binary")
    m.add_constraint({a: 1, b: 1}, ">=", 1.5)
    m.add_constraint({a: 1, b: 1}, "<=", 1.7)
    assert solve_branch_and_bound(m).status is Status.INFEASIBLE
    assert math.isnan(solve_branch_and_bound(m).objective)
