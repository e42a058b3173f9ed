import numpy as np
import pytest

from hybridgrid import datasets
from hybridgrid.milp import read_lp
from hybridgrid.network import to_per_unit
from hybridgrid.scheduler import (
    IntegralityError, ObjectiveMismatch, ScheduleOptions, build_model, extract_solution,
)
from hybridgrid.solver.backends import get_backend
from hybridgrid.solver.lp import INFEASIBLE, OPTIMAL
from hybridgrid.verifier import enumerate_oracle

from conftest import bus, certify, dg, line, make_net, make_profiles, single_bus_dg_toy


def solve(net, prof, pattern=None, options=None, backend="bundled"):
    m = build_model(to_per_unit(net), prof, options=options)
    if pattern:
        m.fix_pattern(pattern)
    out = get_backend(backend).solve(m)
    if out.status != OPTIMAL:
        return m, out, None
    sol = extract_solution(m, out.x, out.objective)
    certify(net, prof, sol)
    return m, out, sol


def row(m, name):
    i = m.row_names.index(name)
    A = m.matrix().tocsr()
    cols = A.indices[A.indptr[i]:A.indptr[i + 1]]
    vals = A.data[A.indptr[i]:A.indptr[i + 1]]
    return {m.keys[j].name: v for j, v in zip(cols, vals)}, m.sense[i], m.rhs[i]


def test_single_bus_no_grid():
    net = make_net([bus(1, pcc=True)], generators=[dg("G1", 1, 0.03, 10.0, 200.0)])
    prof = make_profiles(1, [0.05], 0.0, pd={"1": [100.0]})
    m, out, sol = solve(net, prof)
    terms, sense, rhs = row(m, "balP_1_t00")
    assert terms == {"P_G1_t00": 1.0, "PM_1_t00": 1.0} and sense == "=" and rhs == pytest.approx(0.1)
    assert m.lb[m.var("PM", "1", 0)] == 0.0 == m.ub[m.var("PM", "1", 0)]
    assert sol.gen_p["G1"][0] == pytest.approx(100.0)
    assert sol.objective == pytest.approx(3.0)


def test_dimensions_bundled():
    net, prof = datasets.ieee33(), datasets.day_profiles()
    T = prof.horizon
    L = len(net.active_lines)
    L_ac = sum(ln.kind == "AC" for ln in net.active_lines)
    nd, nw = len(net.dispatchable), len(net.nondispatchable)
    S, C = len(net.storages), len(net.converters)
    fam = build_model(to_per_unit(net), prof).families()
    expected = {
        "PL": 2 * L * T, "QL": 2 * L_ac * T,
        "dV": len(net.buses) * T, "dth": len(net.ac_buses) * T,
        "P": (nd + nw) * T, "Q": nd * T, "I": nd * T, "y": nd * T, "z": nd * T,
        "Pdch": S * T, "Pch": S * T, "PB": S * T, "E": S * T, "u": S * T, "v": S * T,
        "PCr": C * T, "PCi": C * T, "d": C * T, "QC": C * T,
        "PM": 2 * T, "QM": T,
    }
    assert fam == expected
    assert sum(fam.values()) == 4560


def test_pmin_row_for_g1():
    m = build_model(to_per_unit(datasets.ieee33()), datasets.day_profiles())
    terms, sense, rhs = row(m, "pmin_G1_t05")
    assert sense == ">=" and rhs == 0.0
    assert terms == {"P_G1_t05": 1.0, "I_G1_t05": -1.0}  # 1000 kW at s_base 1000 kVA


def test_isolated_bus_balance():
    net = make_net([bus(1, pcc=True)], generators=[dg("G1", 1, 0.03, 0.0, 80.0)])
    m = build_model(to_per_unit(net), make_profiles(1, [0.05], 0.0, pd={"1": [50.0]}))
    terms, sense, rhs = row(m, "balP_1_t00")
    assert terms == {"P_G1_t00": 1.0, "PM_1_t00": 1.0} and rhs == pytest.approx(0.05)


def test_converter_efficiency_in_balance():
    # 97 kW of DC load can only be served through the rectifier: 97 / 0.97 = 100 kW drawn
    net = make_net([bus(1, pcc=True), bus(2, kind="DC")],
                   converters=[{"id": "C1", "ac_bus": "1", "dc_bus": "2", "pc_max": 500.0, "qc_max": 500.0}])
    m, _, sol = solve(net, make_profiles(1, [0.05], 1000.0, pd={"2": [97.0]}))
    assert sol.conv_rect["C1"][0] == pytest.approx(100.0, rel=1e-9)
    assert sol.conv_inv["C1"][0] == pytest.approx(0.0, abs=1e-9)
    assert "balQ_2_t00" not in m.row_names and "balQ_1_t00" in m.row_names


def test_startup_allowed_above_ramp():
    g = dg("G1", 1, 0.03, 1000.0, 3000.0, ru=500.0, rd=500.0, ut=1, dt=1, init_off_hours=1)
    net = make_net([bus(1, pcc=True)], generators=[g])
    prof = make_profiles(2, [0.1, 0.1], 0.0, pd={"1": [1000.0, 1000.0]})
    _, out, sol = solve(net, prof)
    assert list(sol.commit["G1"]) == [1, 1]
    assert sol.gen_p["G1"][0] == pytest.approx(1000.0)
    assert out.objective == pytest.approx(enumerate_oracle(net, prof).objective, rel=1e-9)


def _ut4():
    g = dg("G1", 1, 0.03, 10.0, 100.0, ut=4, dt=1, init_off_hours=1)
    net = make_net([bus(1, pcc=True)], generators=[g])
    return net, make_profiles(4, [0.05] * 4, 1000.0, pd={"1": [50.0] * 4})


def test_min_up_rejects_early_shutdown():
    _, out, _ = solve(*_ut4(), pattern=[("I", "G1", (1, 1, 1, 0))])
    assert out.status == INFEASIBLE
    _, out, sol = solve(*_ut4(), pattern=[("I", "G1", (1, 1, 1, 1))])
    assert out.status == OPTIMAL
    assert list(sol.startup["G1"]) == [1, 0, 0, 0] and not sol.shutdown["G1"].any()


def test_constant_commitment_has_no_transitions():
    g = dg("G1", 1, 0.03, 10.0, 100.0, init_on_hours=3, init_p=50.0)
    net = make_net([bus(1, pcc=True)], generators=[g])
    _, _, sol = solve(net, make_profiles(3, [0.05] * 3, 1000.0, pd={"1": [50.0] * 3}))
    assert list(sol.commit["G1"]) == [1, 1, 1]
    assert not sol.startup["G1"].any() and not sol.shutdown["G1"].any()


def _des(e_init, p_rating=900.0):
    return {"id": "S1", "bus": "1", "p_rating": p_rating, "e_max": 6000.0, "dod": 0.8, "eta": 0.9,
            "e_init": e_init}


def test_storage_discharge_energy():
    net = make_net([bus(1, pcc=True)], storages=[_des(5000.0)])
    _, _, sol = solve(net, make_profiles(1, [0.05], 0.0, pd={"1": [900.0]}))
    assert sol.dch["S1"][0] == pytest.approx(900.0)
    assert sol.energy["S1"][0] == pytest.approx(4000.0)  # 5000 - 900 / 0.9
    assert list(sol.des_state("S1")) == [1]


def test_storage_charge_energy():
    net = make_net([bus(1, pcc=True)], storages=[_des(3000.0, p_rating=500.0)])
    _, _, sol = solve(net, make_profiles(1, [-0.01], 500.0))
    assert sol.ch["S1"][0] == pytest.approx(-500.0)
    assert sol.energy["S1"][0] == pytest.approx(3500.0)
    assert list(sol.des_state("S1")) == [-1]


def test_storage_floor():
    m = build_model(to_per_unit(make_net([bus(1, pcc=True)], storages=[_des(3000.0)])),
                    make_profiles(1, [0.05], 0.0))
    assert m.lb[m.var("E", "S1", 0)] == pytest.approx(1.2)  # 1200 kWh


def test_terminal_energy_option():
    net = make_net([bus(1, pcc=True)], storages=[_des(3000.0)])
    prof = make_profiles(2, [0.01, 0.2], 1000.0, pd={"1": [100.0, 100.0]})
    _, _, free = solve(net, prof)
    _, _, held = solve(net, prof, options=ScheduleOptions(terminal_energy=True))
    assert free.energy["S1"][-1] < 3000.0 - 1
    assert held.energy["S1"][-1] >= 3000.0 - 1e-6
    assert held.objective >= free.objective


def _exchange(price):
    net = make_net([bus(1, pcc=True)], generators=[dg("G1", 1, 0.05, 0.0, 300.0, init_on_hours=1)])
    return net, make_profiles(1, [price], 1000.0, pd={"1": [100.0]})


def test_cheap_grid_imports():
    net, prof = _exchange(0.02)
    _, out, sol = solve(net, prof)
    assert sol.pm["1"][0] > 0
    assert out.objective == pytest.approx(enumerate_oracle(net, prof).objective, rel=1e-9)


def test_expensive_grid_exports():
    net, prof = _exchange(0.09)
    _, out, sol = solve(net, prof)
    assert sol.pm["1"][0] < 0
    assert out.objective == pytest.approx(enumerate_oracle(net, prof).objective, rel=1e-9)


def test_zero_vector_no_load():
    net = make_net([bus(1, pcc=True)])
    m = build_model(to_per_unit(net), make_profiles(2, [0.05, 0.05], 100.0))
    sol = extract_solution(m, np.zeros(m.n_vars), 0.0)
    assert sol.objective == 0.0


def test_toy_objective_three_dollars():
    _, out, sol = solve(*single_bus_dg_toy())
    assert sol.objective == pytest.approx(3.0, abs=1e-9)
    assert list(sol.commit["G1"]) == [1]


def test_objective_mismatch():
    m, out, _ = solve(*single_bus_dg_toy())
    with pytest.raises(ObjectiveMismatch):
        extract_solution(m, out.x, out.objective * (1 + 1e-6))


def test_integrality_violation():
    m, out, _ = solve(*single_bus_dg_toy())
    x = out.x.copy()
    x[m.var("I", "G1", 0)] = 0.5
    with pytest.raises(IntegralityError):
        extract_solution(m, x)


def test_decoupled_when_converters_zero():
    ac = [bus(1, pcc=True), bus(2)]
    dc = [bus(3, kind="DC", pcc=True), bus(4, kind="DC")]
    ac_l = [line("A", 1, 2)]
    dc_l = [line("D", 3, 4, kind="DC", r=0.2)]
    gens = [dg("G1", 2, 0.03, 20.0, 150.0), dg("G2", 4, 0.07, 10.0, 100.0)]
    pd = {"1": [40.0, 60.0], "2": [80.0, 30.0], "3": [20.0, 20.0], "4": [90.0, 120.0]}
    qd = {"1": [10.0, 10.0], "2": [20.0, 5.0]}
    price = [0.04, 0.08]

    def sub(buses, lines, g, ids):
        return make_net(buses, lines, generators=g), make_profiles(
            2, price, 80.0, pd={k: v for k, v in pd.items() if k in ids}, qd={k: v for k, v in qd.items() if k in ids})

    whole = make_net(ac + dc, ac_l + dc_l, [{"id": "C", "ac_bus": "2", "dc_bus": "3", "pc_max": 0.0, "qc_max": 0.0}],
                     gens)
    _, _, both = solve(whole, make_profiles(2, price, 80.0, pd=pd, qd=qd))
    _, _, a = solve(*sub(ac, ac_l, gens[:1], {"1", "2"}))
    _, _, d = solve(*sub(dc, dc_l, gens[1:], {"3", "4"}))
    assert both.objective == pytest.approx(a.objective + d.objective, rel=1e-6)


def test_lp_export_names_and_round_trip():
    net, prof = datasets.ieee33(), datasets.day_profiles().window(0, 8)
    m = build_model(to_per_unit(net), prof)
    text = m.write_lp()
    assert " P_G1_t07" in text and "Binaries" in text
    p = read_lp(text)
    q = m.to_lp()
    assert p.n == q.n and p.m == q.m
    perm = [p.col_names.index(name) for name in q.col_names]
    assert np.array_equal(p.integer[perm], q.integer)
    assert np.array_equal(p.c[perm], q.c) and np.array_equal(p.lb[perm], q.lb)
    assert abs(p.A[:, perm] - q.A).max() == 0.0
