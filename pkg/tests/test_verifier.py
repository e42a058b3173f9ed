import copy

import numpy as np
import pytest

from hybridgrid.network import serialize_network, to_per_unit
from hybridgrid.profiles import profiles_to_dict
from hybridgrid.reports import solution_from_reports
from hybridgrid.runner import ScenarioConfig, run_loaded
from hybridgrid.scheduler import build_model, extract_solution
from hybridgrid.solver.backends import get_backend
from hybridgrid.verifier import (
    CommitmentTimeline, DimensionError, OracleGuardError, ViolationReport, check_solution, enumerate_oracle,
)

from conftest import arbitrage_toy, bus, dg, make_net, make_profiles, single_bus_dg_toy, write_json


def milp(net, prof):
    m = build_model(to_per_unit(net), prof)
    out = get_backend("bundled").solve(m)
    return extract_solution(m, out.x, out.objective)


def test_feasible_toy_passes():
    net, prof = single_bus_dg_toy()
    rep = check_solution(net, prof, milp(net, prof))
    assert rep.passed and rep.max_residual < 1e-9


def test_simultaneous_charge_discharge_flagged():
    net, prof = arbitrage_toy()
    sol = milp(net, prof)
    bad = copy.deepcopy(sol)
    bad.u["S1"][0] = bad.v["S1"][0] = 1.0
    rep = check_solution(net, prof, bad)
    assert not rep.passed
    assert "storage_exclusive" in rep.families()


def test_early_shutdown_flagged_by_recount():
    g = dg("G1", 1, 0.03, 10.0, 100.0, ut=3, dt=1, init_off_hours=1)
    net = make_net([bus(1, pcc=True)], generators=[g])
    prof = make_profiles(3, [0.2, 0.2, 0.01], 1000.0, pd={"1": [50.0] * 3})
    sol = milp(net, prof)
    assert list(sol.commit["G1"]) == [1, 1, 1]
    bad = copy.deepcopy(sol)
    bad.commit["G1"][2] = 0.0
    bad.shutdown["G1"][2] = 1.0
    bad.gen_p["G1"][2] = 0.0
    bad.pm["1"][2] += sol.gen_p["G1"][2]
    bad.qm["1"][2] += sol.gen_q["G1"][2]
    bad.gen_q["G1"][2] = 0.0
    bad.objective = bad.recompute_objective(net, prof)
    rep = check_solution(net, prof, bad)
    assert rep.families() == {"min_up"}


def test_timeline_counts():
    tl = CommitmentTimeline.from_status([1, 1, 0, 0, 0, 1], init_on_hours=2)
    assert list(tl.t_on) == [3, 4, 0, 0, 0, 1]
    assert list(tl.t_off) == [0, 0, 1, 2, 3, 0]
    assert list(tl.startup) == [0, 0, 0, 0, 0, 1]
    assert list(tl.shutdown) == [0, 0, 1, 0, 0, 0]
    assert tl.up_shortfalls(5, 2) == [(2, 1)]
    assert tl.down_shortfalls(4) == [(5, 1)]


def test_timeline_fresh_start_has_no_obligation():
    tl = CommitmentTimeline.from_status([0, 1, 1])
    assert tl.down_shortfalls(6) == []


def test_dimension_mismatch():
    net, prof = single_bus_dg_toy()
    sol = milp(net, prof)
    sol.gen_p["G1"] = np.zeros(3)
    with pytest.raises(DimensionError):
        check_solution(net, prof, sol)


def test_objective_corruption_flagged():
    net, prof = single_bus_dg_toy()
    sol = milp(net, prof)
    sol.objective += 0.5
    assert check_solution(net, prof, sol).families() == {"objective"}


def test_report_json_round_trip():
    net, prof = arbitrage_toy()
    bad = milp(net, prof)
    bad.u["S1"][1] = 1.0
    rep = check_solution(net, prof, bad)
    back = ViolationReport.from_json(rep.to_json())
    assert back.violations == rep.violations and back.passed == rep.passed


def test_oracle_single_dg_toy():
    res = enumerate_oracle(*single_bus_dg_toy())
    # I = 0 leaves 100 kW against a 50 kW tie: only I = 1 is feasible
    assert res.objective == pytest.approx(3.0, abs=1e-9)
    assert res.pattern[("I", "G1")] == (1,)
    assert res.feasible == 1 and res.enumerated == 2
    assert res.solution.gen_p["G1"][0] == pytest.approx(100.0)


def test_oracle_zero_load_zero_price():
    net = make_net([bus(1, pcc=True)], generators=[dg("G1", 1, 0.03, 10.0, 100.0), dg("G2", 1, 0.05, 5.0, 50.0)])
    res = enumerate_oracle(net, make_profiles(2, [0.0, 0.0], 100.0))
    assert res.objective == 0.0
    assert res.pattern[("I", "G1")] == (0, 0) and res.pattern[("I", "G2")] == (0, 0)


def test_oracle_storage_arbitrage():
    net, prof = arbitrage_toy()
    res = enumerate_oracle(net, prof)
    # charge 100 kW at 0.01 (E 200 -> 300), discharge 90 kW at 0.10 (E back to the 200 floor):
    # 0.01 * 150 + 0.10 * (50 - 90) = -2.5
    assert res.objective == pytest.approx(-2.5, abs=1e-9)
    assert list(res.solution.des_state("S1")) == [-1, 1]
    assert milp(net, prof).objective == pytest.approx(res.objective, rel=1e-6)


def test_oracle_guard():
    gens = [dg(f"G{k}", 1, 0.03, 1.0, 10.0) for k in range(6)]
    net = make_net([bus(1, pcc=True)], generators=gens)
    with pytest.raises(OracleGuardError, match="exceed"):
        enumerate_oracle(net, make_profiles(4, [0.05] * 4, 100.0))


def test_oracle_all_infeasible():
    net = make_net([bus(1, pcc=True)], generators=[dg("G1", 1, 0.03, 0.0, 10.0)])
    with pytest.raises(OracleGuardError, match="infeasible"):
        enumerate_oracle(net, make_profiles(1, [0.05], 10.0, pd={"1": [100.0]}))


def test_recertified_after_csv_round_trip(tmp_path):
    net, prof = arbitrage_toy()
    npath = tmp_path / "net.json"
    npath.write_text(serialize_network(net))
    ppath = write_json(tmp_path / "prof.json", profiles_to_dict(prof))
    cfg = ScenarioConfig(str(npath), str(ppath), out_dir=str(tmp_path / "out"))
    rep = run_loaded(cfg, net, prof)
    assert rep.verdict.passed
    back = solution_from_reports(tmp_path / "out", s_base=net.base.s_base)
    again = check_solution(net, prof, back)
    assert again.passed
    assert again.max_residual == pytest.approx(rep.verdict.max_residual, abs=1e-12)
    for name in ("gen_p", "pm", "energy", "pb", "dv"):
        a, b = getattr(rep.solution, name), getattr(back, name)
        assert a.keys() == b.keys()
        assert all(np.array_equal(a[k], b[k]) for k in a)
