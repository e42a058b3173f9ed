import itertools

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from hybridgrid.milp import read_lp, write_lp
from hybridgrid.network import to_per_unit
from hybridgrid.scheduler import build_model
from hybridgrid.solver.backends import BackendUnavailable, get_backend
from hybridgrid.solver.bnb import solve_milp
from hybridgrid.solver.lp import (
    INFEASIBLE, OPTIMAL, UNBOUNDED, LpProblem, SolverOptions, dual_objective, solve_lp,
)

from conftest import bus, dg, make_net, make_profiles, single_bus_dg_toy


def lp(A, sense, rhs, c, lb=None, ub=None, integer=None):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[1]
    return LpProblem(sp.csc_matrix(A), rhs, sense, c,
                     np.zeros(n) if lb is None else lb, np.full(n, np.inf) if ub is None else ub,
                     None if integer is None else np.asarray(integer, dtype=bool))


def test_textbook_lp():
    # maximize 3x + 2y  s.t. x + y <= 4, x <= 2
    out = solve_lp(lp([[1, 1], [1, 0]], ["<=", "<="], [4, 2], [-3, -2]))
    assert out.status == OPTIMAL
    assert np.allclose(out.x, [2, 2])
    assert -out.objective == pytest.approx(10.0)


def test_empty_objective():
    out = solve_lp(lp([[1, 1]], ["<="], [3], [0, 0], ub=np.array([2.0, 2.0])))
    assert out.status == OPTIMAL and out.objective == 0.0


def test_infeasible_lp():
    out = solve_lp(lp([[1.0]], [">="], [1.0], [1.0], ub=np.array([0.0])))
    assert out.status == INFEASIBLE


def test_unbounded_lp():
    out = solve_lp(lp([[1.0, -1.0]], ["<="], [1.0], [-1.0, 0.0]))
    assert out.status == UNBOUNDED


def test_integral_relaxation_single_node():
    out = solve_milp(lp([[1, 1], [1, 0]], ["<=", "<="], [4, 2], [-3, -2], integer=[True, True],
                        ub=np.array([10.0, 10.0])), binaries=[])
    assert out.status == OPTIMAL
    out = solve_milp(lp([[1.0]], [">="], [1.0], [1.0], ub=np.array([1.0])), binaries=[0])
    assert out.status == OPTIMAL and out.nodes == 1


def test_two_binary_milp():
    out = solve_milp(lp([[1, 1]], [">="], [1.5], [1, 1], ub=np.ones(2)), binaries=[0, 1])
    assert out.objective == pytest.approx(2.0)
    assert np.allclose(out.x, [1, 1])


def _random_lp(rng, m, n, integer=False):
    A = rng.integers(-4, 5, size=(m, n)).astype(float)
    A[rng.random((m, n)) < 0.4] = 0.0
    x0 = rng.uniform(0, 3, n)  # feasible point
    act = A @ x0
    sense = rng.choice(["<=", ">=", "="], size=m, p=[0.45, 0.45, 0.1])
    rhs = np.where(sense == "<=", act + rng.uniform(0, 2, m), np.where(sense == ">=", act - rng.uniform(0, 2, m), act))
    c = rng.integers(-5, 6, n).astype(float)
    ub = np.where(rng.random(n) < 0.7, 5.0, np.inf)
    if integer:
        ub = np.ones(n)
        rhs = np.where(sense == "=", np.round(rhs), rhs)
    return lp(A, sense, rhs, c, ub=ub)


def _highs(p):
    lo, hi = p.row_bounds()
    A = p.A.toarray()
    ub_rows = np.vstack([A[np.isfinite(hi)], -A[np.isfinite(lo)]])
    ub_rhs = np.concatenate([hi[np.isfinite(hi)], -lo[np.isfinite(lo)]])
    return linprog(p.c, A_ub=ub_rows if ub_rows.size else None, b_ub=ub_rhs if ub_rows.size else None,
                   bounds=list(zip(p.lb, p.ub)), method="highs")


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 8), st.integers(1, 8))
def test_random_lp_against_highs(seed, m, n):
    p = _random_lp(np.random.default_rng(seed), m, n)
    ours, ref = solve_lp(p), _highs(p)
    if ref.status == 3:
        assert ours.status == UNBOUNDED
        return
    assert ref.status == 0 and ours.status == OPTIMAL
    assert ours.objective == pytest.approx(ref.fun, rel=1e-7, abs=1e-7)
    assert p.max_violation(ours.x) <= 1e-7
    # strong duality from the final basis
    assert ours.dual_objective == pytest.approx(ours.objective, rel=1e-8, abs=1e-8)
    assert dual_objective(p, ours.duals, ours.reduced_costs) == pytest.approx(ours.objective, rel=1e-8, abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6), st.integers(1, 10))
def test_random_milp_against_enumeration(seed, m, n):
    p = _random_lp(np.random.default_rng(seed), m, n, integer=True)
    best = np.inf
    for bits in itertools.product((0.0, 1.0), repeat=n):
        x = np.array(bits)
        if p.max_violation(x) <= 1e-9:
            best = min(best, p.objective(x))
    out = solve_milp(p, binaries=range(n))
    if np.isinf(best):
        assert out.status == INFEASIBLE
    else:
        assert out.status == OPTIMAL
        assert out.objective == pytest.approx(best, rel=1e-6, abs=1e-9)
        assert p.max_violation(out.x) <= 1e-7


def test_deterministic():
    p = _random_lp(np.random.default_rng(7), 6, 9, integer=True)
    a, b = solve_milp(p, binaries=range(9)), solve_milp(p, binaries=range(9))
    assert a.status == b.status and a.nodes == b.nodes and np.array_equal(a.x, b.x)


def test_gap_contract():
    net, prof = single_bus_dg_toy()
    out = get_backend("bundled").solve(build_model(to_per_unit(net), prof))
    assert abs(out.objective - out.bound) <= 1e-6 * max(1.0, abs(out.objective))


def test_lp_text_round_trip():
    p = lp([[1, 1], [1, 0]], ["<=", "<="], [4, 2], [-3, -2])
    text = write_lp(p)
    q = read_lp(text)
    assert solve_lp(q).objective == pytest.approx(-10.0)
    assert write_lp(q) == text


def _storage_net():
    net = make_net([bus(1, pcc=True)], generators=[dg("G1", 1, 0.04, 20.0, 120.0, ut=2, dt=2)],
                   storages=[{"id": "S1", "bus": "1", "p_rating": 50.0, "e_max": 200.0, "dod": 0.8,
                              "eta": 0.9, "e_init": 100.0}])
    prof = make_profiles(4, [0.02, 0.09, 0.03, 0.08], 60.0, pd={"1": [40.0, 120.0, 80.0, 150.0]})
    return net, prof


def test_backends_agree():
    model = build_model(to_per_unit(_storage_net()[0]), _storage_net()[1])
    a = get_backend("bundled").solve(model)
    b = get_backend("highs").solve(model)
    assert a.status == b.status == OPTIMAL
    assert a.objective == pytest.approx(b.objective, rel=1e-6)


def test_backends_report_infeasible():
    net = make_net([bus(1, pcc=True)], generators=[dg("G1", 1, 0.03, 0.0, 50.0)])
    model = build_model(to_per_unit(net), make_profiles(1, [0.05], 10.0, pd={"1": [100.0]}))
    assert get_backend("bundled").solve(model).status == INFEASIBLE
    assert get_backend("highs").solve(model).status == INFEASIBLE


def test_unknown_backend():
    with pytest.raises(BackendUnavailable):
        get_backend("cplex")


def test_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(mip_gap=0.0)
