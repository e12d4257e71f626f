import itertools
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

import oracles
from battdispatch.optim import (INF, INFEASIBLE, ITERATION_LIMIT, NODE_LIMIT, OPTIMAL, UNBOUNDED,
                                LinearProgram, MixedIntegerProgram, ModelError, Tolerances,
                                export_mps, import_solution, read_mps, solve_lp, solve_milp,
                                write_solution)
from battdispatch.optim import _pykernels, kernels

SENSES = ("<=", ">=", "=")


def random_lp(rng, n=None, m=None, integer=True):
    """A small boxed LP; most instances are feasible by construction."""
    n = n or int(rng.integers(1, 5))
    m = m or int(rng.integers(1, 5))
    draw = (lambda lo, hi, size=None: rng.integers(lo, hi + 1, size).astype(float)) if integer else \
        (lambda lo, hi, size=None: rng.uniform(lo, hi, size))
    lb = draw(-5, 0, n)
    ub = lb + draw(1, 6, n)
    c = draw(-9, 9, n)
    A = draw(-6, 6, (m, n))
    senses = [SENSES[k] for k in rng.integers(0, 3, m)]
    x0 = rng.uniform(lb, ub)
    rhs = []
    for a, s in zip(A, senses):
        act = float(a @ x0)
        if rng.random() < 0.1:
            rhs.append(float(draw(-20, 20)))  # may be infeasible
        elif s == "<=":
            rhs.append(math.ceil(act) if integer else act + rng.uniform(0, 3))
        elif s == ">=":
            rhs.append(math.floor(act) if integer else act - rng.uniform(0, 3))
        else:
            rhs.append(act)
    return c, A, senses, rhs, lb, ub


def to_model(c, A, senses, rhs, lb, ub, cls=LinearProgram, binaries=()):
    lp = cls("rand")
    for j in range(len(c)):
        if j in binaries:
            lp.add_binary(f"x{j}", c[j])
        else:
            lp.add_variable(f"x{j}", lb[j], ub[j], c[j])
    for i, (a, s, b) in enumerate(zip(A, senses, rhs)):
        lp.add_constraint(f"r{i}", [(j, v) for j, v in enumerate(a) if v != 0], s, b)
    return lp


# -- LP ----------------------------------------------------------------------


def test_200_random_lps_match_vertex_enumeration():
    feasible, infeasible = check_random_lps(200, 7)
    assert feasible + infeasible == 200 and feasible > 150


def test_unbounded_and_infeasible():
    lp = LinearProgram()
    x = lp.add_variable("x", 0, INF, -1.0)
    y = lp.add_variable("y", 0, INF, 0.0)
    lp.add_constraint("c", [(x, 1.0), (y, -1.0)], "<=", 1.0)
    assert solve_lp(lp).status == UNBOUNDED

    lp = LinearProgram()
    x = lp.add_variable("x", 0, 1)
    lp.add_constraint("c", [(x, 1.0)], ">=", 2.0)
    assert solve_lp(lp).status == INFEASIBLE


def test_free_variables_and_equalities():
    # min x + y, x - y = 1, x + 2y >= 4, both free
    lp = LinearProgram()
    x = lp.add_variable("x", -INF, INF, 1.0)
    y = lp.add_variable("y", -INF, INF, 1.0)
    lp.add_constraint("e", [(x, 1), (y, -1)], "=", 1)
    lp.add_constraint("g", [(x, 1), (y, 2)], ">=", 4)
    sol = solve_lp(lp)
    assert sol.status == OPTIMAL
    np.testing.assert_allclose(sol.x, [2.0, 1.0], atol=1e-9)
    assert sol.value("y") == pytest.approx(1.0)


def test_duals_satisfy_stationarity():
    rng = np.random.default_rng(3)
    for _ in range(20):
        data = random_lp(rng, n=3, m=3, integer=False)
        lp = to_model(*data)
        sol = solve_lp(lp)
        if sol.status != OPTIMAL:
            continue
        A = lp.matrix().toarray()
        np.testing.assert_allclose(np.asarray(lp.obj) - A.T @ sol.duals, sol.reduced_costs, atol=1e-7)


def test_iteration_limit_reported():
    rng = np.random.default_rng(5)
    c, A, senses, rhs, lb, ub = random_lp(rng, n=4, m=4)
    sol = solve_lp(to_model(c, A, ["<="] * 4, np.abs(rhs) + 10, lb, ub), Tolerances(max_iterations=0))
    assert sol.status in (ITERATION_LIMIT, OPTIMAL)


def test_warm_start_resolves_with_fewer_iterations():
    rng = np.random.default_rng(11)
    n, m = 30, 20
    A = rng.uniform(0, 1, (m, n))
    lp = LinearProgram()
    for j in range(n):
        lp.add_variable(f"x{j}", 0, 10, -rng.uniform(1, 2))
    for i in range(m):
        lp.add_constraint(f"r{i}", enumerate(A[i]), "<=", 5.0)
    cold = solve_lp(lp)
    lp.set_rhs(0, 5.5)
    warm = solve_lp(lp, basis=cold.basis)
    again = solve_lp(lp)
    assert warm.objective == pytest.approx(again.objective, rel=1e-10)
    assert warm.iterations < again.iterations


def test_large_lp_matches_highs():
    # above 200 rows the basis factorization switches to sparse LU
    rng = np.random.default_rng(2)
    n, m = 400, 260
    A = np.where(rng.random((m, n)) < 0.03, rng.uniform(-1, 1, (m, n)), 0.0)
    c = rng.uniform(-1, 1, n)
    ub = rng.uniform(1, 3, n)
    b = A @ (ub / 2) + rng.uniform(0, 1, m)
    lp = LinearProgram()
    for j in range(n):
        lp.add_variable(f"x{j}", 0, ub[j], c[j])
    for i in range(m):
        lp.add_constraint(f"r{i}", [(j, A[i, j]) for j in np.flatnonzero(A[i])], "<=", b[i])
    sol = solve_lp(lp)
    ref = linprog(c, A_ub=A, b_ub=b, bounds=list(zip(np.zeros(n), ub)), method="highs")
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(ref.fun, rel=1e-8, abs=1e-8)


def test_scaling_does_not_change_optimum():
    rng = np.random.default_rng(13)
    for _ in range(20):
        data = random_lp(rng, integer=False)
        a = solve_lp(to_model(*data), Tolerances(scale=True))
        b = solve_lp(to_model(*data), Tolerances(scale=False))
        assert a.status == b.status
        if a.status == OPTIMAL:
            assert a.objective == pytest.approx(b.objective, abs=1e-8)


def test_model_errors():
    lp = LinearProgram()
    lp.add_variable("x")
    with pytest.raises(ModelError):
        lp.add_variable("x")
    with pytest.raises(ModelError):
        lp.add_variable("y", 2, 1)
    with pytest.raises(ModelError):
        lp.add_constraint("c", [(5, 1.0)], "<=", 1)
    with pytest.raises(ModelError):
        lp.add_constraint("c", [(0, 1.0)], "<", 1)
    mip = MixedIntegerProgram()
    j = mip.add_variable("z", 0, 2)
    with pytest.raises(ModelError):
        mip.mark_binary(j)


# -- kernels ------------------------------------------------------------------


def _random_etas(rng, m, k):
    rows = rng.integers(0, m, k).astype(np.int64)
    pivots = rng.normal(size=k)
    lengths = np.minimum(rng.integers(0, 5, k), m - 1)
    starts = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    idx = np.concatenate([np.zeros(0, np.int64)] + [
        rng.choice(np.delete(np.arange(m), r), size=n, replace=False) for r, n in zip(rows, lengths)
    ]).astype(np.int64)
    return rows, pivots, starts, idx, rng.normal(size=idx.size)


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernels not built")
def test_backend_kernels_agree():
    from battdispatch.optim import _ckernels

    rng = np.random.default_rng(17)
    for _ in range(200):
        n = int(rng.integers(1, 60))
        d = rng.normal(size=n) * (rng.random(n) < 0.7)
        status = rng.integers(0, 5, n).astype(np.int8)
        for bland in (False, True):
            assert _ckernels.price(d, status, 1e-9, bland) == _pykernels.price(d, status, 1e-9, bland)
        m = int(rng.integers(1, 40))
        lo = np.where(rng.random(m) < 0.2, -np.inf, rng.normal(size=m))
        up = np.where(rng.random(m) < 0.2, np.inf, lo + rng.uniform(0, 2, m))
        up = np.where(np.isinf(lo) & np.isinf(up), 1.0, up)
        x = rng.normal(size=m) * 2
        alpha = rng.normal(size=m) * (rng.random(m) < 0.8)
        head = rng.permutation(m).astype(np.int64)
        for direction in (1.0, -1.0):
            for bland in (False, True):
                args = (x, lo, up, alpha, direction, 1e-9, 1e-11, head, bland)
                assert _ckernels.ratio_test(*args) == _pykernels.ratio_test(*args)
        etas = _random_etas(rng, m, int(rng.integers(0, 10)))
        z1 = rng.normal(size=m)
        z2 = z1.copy()
        _ckernels.ftran_etas(z1, len(etas[0]), *etas)
        _pykernels.ftran_etas(z2, len(etas[0]), *etas)
        np.testing.assert_allclose(z1, z2, rtol=1e-13, atol=1e-13)
        c1 = rng.normal(size=m)
        c2 = c1.copy()
        _ckernels.btran_etas(c1, len(etas[0]), *etas)
        _pykernels.btran_etas(c2, len(etas[0]), *etas)
        np.testing.assert_allclose(c1, c2, rtol=1e-13, atol=1e-13)


def test_pure_python_backend_selected_by_environment():
    import subprocess
    import sys

    code = "from battdispatch.optim import BACKEND; print(BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                         env={**os.environ, "BATTDISPATCH_PURE_PYTHON": "1"})
    assert out.stdout.strip() == "python"


# -- MILP ---------------------------------------------------------------------


def _enumerate_mip(c, A, senses, rhs, lb, ub, bins):
    best = None
    cont = [j for j in range(len(c)) if j not in bins]
    A = np.asarray(A, float)
    for combo in itertools.product((0.0, 1.0), repeat=len(bins)):
        fixed = np.zeros(len(c))
        fixed[list(bins)] = combo
        shift = A @ fixed
        base = float(np.dot(c, fixed))
        if cont:
            val, _ = oracles.vertex_enumeration(np.asarray(c)[cont], A[:, cont], senses,
                                                np.asarray(rhs) - shift, np.asarray(lb)[cont],
                                                np.asarray(ub)[cont])
            if val is None:
                continue
            val += base
        else:
            act = shift
            ok = all((s == "<=" and a <= b + 1e-9) or (s == ">=" and a >= b - 1e-9)
                     or (s == "=" and abs(a - b) <= 1e-9) for a, s, b in zip(act, senses, rhs))
            if not ok:
                continue
            val = base
        if best is None or val < best:
            best = val
    return best


def random_mip(rng):
    """Up to 12 binaries (pure) or up to 8 binaries plus 2 continuous; feasible by construction."""
    nb = int(rng.integers(1, 13))
    nc = 0 if nb > 8 else int(rng.integers(0, 3))
    n = nb + nc
    bins = list(range(nb))
    lb = np.concatenate([np.zeros(nb), rng.integers(-3, 1, nc).astype(float)])
    ub = np.concatenate([np.ones(nb), lb[nb:] + rng.integers(1, 5, nc)])
    c = rng.integers(-9, 10, n).astype(float)
    m = int(rng.integers(1, 5))
    A = rng.integers(-5, 6, (m, n)).astype(float)
    senses = [SENSES[s] for s in rng.integers(0, 3, m)]
    x0 = np.concatenate([rng.integers(0, 2, nb), rng.uniform(lb[nb:], ub[nb:])])
    rhs = []
    for a, s in zip(A, senses):
        act = float(a @ x0)
        rhs.append(act if s == "=" else (math.ceil(act) if s == "<=" else math.floor(act)))
    return (c, A, senses, rhs, lb, ub), bins


def check_random_mips(count, seed):
    """Solve ``count`` random MIPs; returns the number that matched enumeration."""
    rng = np.random.default_rng(seed)
    matched = 0
    for k in range(count):
        data, bins = random_mip(rng)
        want = _enumerate_mip(*data, bins)
        sol = solve_milp(to_model(*data, MixedIntegerProgram, set(bins)))
        assert want is not None, k
        assert sol.status == OPTIMAL, k
        assert abs(sol.objective - want) <= 1e-7 * max(1.0, abs(want)), (k, sol.objective, want)
        xb = sol.x[bins]
        assert np.all(np.abs(xb - np.round(xb)) <= 1e-6)
        matched += 1
    return matched


def check_random_lps(count, seed):
    """Solve ``count`` random LPs; returns (feasible, infeasible) counts."""
    rng = np.random.default_rng(seed)
    feasible = infeasible = 0
    for k in range(count):
        data = random_lp(rng, integer=(k % 2 == 0))
        want, _ = oracles.vertex_enumeration(*data)
        lp = to_model(*data)
        sol = solve_lp(lp)
        if want is None:
            assert sol.status == INFEASIBLE, k
            infeasible += 1
            continue
        assert sol.status == OPTIMAL, k
        assert abs(sol.objective - want) <= 1e-7 * max(1.0, abs(want)), (k, sol.objective, want)
        assert max(lp.residuals(sol.x)) < 1e-7
        feasible += 1
    return feasible, infeasible


def test_50_random_mips_match_enumeration():
    assert check_random_mips(50, 23) == 50


def test_milp_node_limit_keeps_incumbent():
    rng = np.random.default_rng(29)
    mip = MixedIntegerProgram()
    w = rng.integers(5, 30, 25)
    v = rng.integers(5, 30, 25)
    for j in range(25):
        mip.add_binary(f"z{j}", -float(v[j]))
    mip.add_constraint("cap", enumerate(w.astype(float)), "<=", float(w.sum() // 2) + 0.5)
    sol = solve_milp(mip, node_limit=3)
    assert sol.status in (NODE_LIMIT, OPTIMAL)
    full = solve_milp(mip)
    assert full.status == OPTIMAL
    assert full.bound <= full.objective + 1e-6
    if sol.x is not None:
        assert sol.objective >= full.objective - 1e-9


def test_relaxation_is_lower_bound():
    rng = np.random.default_rng(31)
    for _ in range(10):
        c, A, senses, rhs, lb, ub = random_lp(rng, n=4, m=3)
        lb, ub = np.zeros(4), np.ones(4)
        mip = to_model(c, A, senses, rhs, lb, ub, MixedIntegerProgram, {0, 1, 2, 3})
        relax = solve_lp(mip.relaxation())
        sol = solve_milp(mip)
        if sol.status == OPTIMAL:
            assert relax.objective <= sol.objective + 1e-9


# -- MPS ----------------------------------------------------------------------


def random_model(rng, k):
    mip = rng.random() < 0.5
    model = MixedIntegerProgram(f"m{k}") if mip else LinearProgram(f"m{k}")
    n = int(rng.integers(1, 12))
    long_names = rng.random() < 0.3
    for j in range(n):
        name = f"variable_{k}_{j}[t]" if long_names else f"x{j}"
        if mip and rng.random() < 0.4:
            model.add_binary(name, float(rng.normal()) * 10.0 ** rng.integers(-3, 4))
            continue
        kind = rng.integers(0, 6)
        lo, hi = sorted(rng.normal(size=2) * 100)
        lb, ub = [(0.0, INF), (lo, hi), (-INF, INF), (-INF, hi), (lo, INF), (lo, lo)][kind]
        model.add_variable(name, lb, ub, float(rng.normal()) * 10.0 ** rng.integers(-6, 6))
    for i in range(int(rng.integers(0, 10))):
        cols = rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False)
        vals = rng.normal(size=cols.size) * 10.0 ** rng.integers(-8, 8, cols.size)
        name = f"constraint_{i}" if long_names else f"r{i}"
        model.add_constraint(name, zip(cols, vals), SENSES[rng.integers(0, 3)],
                             float(rng.normal() * 1e3) if rng.random() < 0.8 else 0.0)
    return model


def _same(a, b):
    return (a == b) or (math.isfinite(a) and math.isfinite(b)
                        and abs(a - b) <= 1e-12 * max(abs(a), abs(b)))


def test_mps_round_trip_100_models(tmp_path):
    rng = np.random.default_rng(37)
    for k in range(100):
        model = random_model(rng, k)
        path = export_mps(model, tmp_path / f"m{k}.mps", header_lines=["round trip"])
        back = read_mps(path)
        assert back.name == model.name
        assert back.var_names == model.var_names
        assert back.row_names == model.row_names
        assert back.senses == model.senses
        for attr in ("lb", "ub", "obj", "rhs"):
            assert all(_same(a, b) for a, b in zip(getattr(model, attr), getattr(back, attr))), (k, attr)
        A, B = model.matrix().toarray(), back.matrix().toarray()
        assert np.all((A == B) | (np.abs(A - B) <= 1e-12 * np.maximum(np.abs(A), np.abs(B))))
        assert getattr(back, "binaries", set()) == getattr(model, "binaries", set())


def test_mps_fixed_columns_for_short_names(tmp_path):
    lp = LinearProgram("tiny")
    x = lp.add_variable("x", 0, 4, 1.5)
    lp.add_constraint("c1", [(x, 2.0)], ">=", 1.0)
    text = export_mps(lp, tmp_path / "t.mps").read_text()
    assert " G  c1" in text
    assert "    x         COST               1.5" in text


def test_mps_rejects_whitespace_names(tmp_path):
    lp = LinearProgram()
    lp.add_variable("bad name")
    with pytest.raises(ModelError):
        export_mps(lp, tmp_path / "x.mps")


def test_solution_file_round_trip(tmp_path):
    rng = np.random.default_rng(41)
    model = random_model(rng, 0)
    x = rng.normal(size=model.num_variables)
    write_solution(tmp_path / "s.csv", model, x, header_lines=["hdr"])
    np.testing.assert_array_equal(import_solution(tmp_path / "s.csv", model), x)
    (tmp_path / "bad.csv").write_text("name,value\nnope,1\n")
    with pytest.raises(ModelError):
        import_solution(tmp_path / "bad.csv", model)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_lp_solution_is_feasible_property(seed):
    data = random_lp(np.random.default_rng(seed), integer=False)
    lp = to_model(*data)
    sol = solve_lp(lp)
    want, _ = oracles.vertex_enumeration(*data)
    assert (sol.status == OPTIMAL) == (want is not None)
    if want is not None:
        assert max(lp.residuals(sol.x)) < 1e-7
        assert sol.objective == pytest.approx(want, abs=1e-7, rel=1e-7)
