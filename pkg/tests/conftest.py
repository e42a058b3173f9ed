"""Shared builders for small hand-checkable instances and cached 33-bus runs."""

import json
import random
from pathlib import Path

import numpy as np
import pytest

from hybridgrid import cases, datasets
from hybridgrid.network import network_from_dict
from hybridgrid.profiles import ProfileSet
from hybridgrid.runner import ScenarioConfig, run_loaded
from hybridgrid.verifier import check_solution


def bus(i, kind="AC", pcc=False, v_min=0.95, v_max=1.05):
    return {"id": str(i), "kind": kind, "pcc": pcc, "v_min": v_min, "v_max": v_max}


def line(i, a, b, kind="AC", r=0.05, x=0.03, pl_max=5000.0, ql_max=5000.0):
    return {"id": str(i), "from_bus": str(a), "to_bus": str(b), "r": r, "x": x,
            "kind": kind, "pl_max": pl_max, "ql_max": ql_max}


def dg(i, at, cost, p_min, p_max, **kw):
    d = {"id": i, "bus": str(at), "dispatchable": True, "cost": cost, "p_min": p_min, "p_max": p_max,
         "q_min": -p_max, "q_max": p_max}
    d.update(kw)
    return d


def make_net(buses, lines=(), converters=(), generators=(), storages=(), s_base=1000.0):
    return network_from_dict({
        "base": {"s_base": s_base, "v_base_ac": 12.66},
        "buses": list(buses), "lines": list(lines), "converters": list(converters),
        "generators": list(generators), "storages": list(storages),
    })


def make_profiles(T, price, pm_max, pd=None, qd=None, availability=None, qm_max=None):
    return ProfileSet(
        horizon=T, price=tuple(price), pm_max=pm_max,
        pd={k: tuple(v) for k, v in (pd or {}).items()},
        qd={k: tuple(v) for k, v in (qd or {}).items()},
        availability={k: tuple(v) for k, v in (availability or {}).items()},
        qm_max=qm_max,
    )


def single_bus_dg_toy():
    """1 bus, DG 0.03 $/kWh in [10, 100] kW, load 100 kW, tie 50 kW at 0.05 $/kWh."""
    net = make_net([bus(1, pcc=True)], generators=[dg("G1", 1, 0.03, 10.0, 100.0)])
    prof = make_profiles(1, [0.05], 50.0, pd={"1": [100.0]})
    return net, prof


def arbitrage_toy():
    """1 bus, lossy battery, cheap hour then expensive hour."""
    net = make_net([bus(1, pcc=True)], storages=[
        {"id": "S1", "bus": "1", "p_rating": 100.0, "e_max": 400.0, "dod": 0.5, "eta": 0.9, "e_init": 200.0}])
    prof = make_profiles(2, [0.01, 0.10], 1000.0, pd={"1": [50.0, 50.0]})
    return net, prof


def random_instance(rng: random.Random):
    """At most 3 buses, 4 hours, 2 DGs, 1 DES, 1 converter and 20 free binaries."""
    T = rng.randint(1, 4)
    n_dg = rng.randint(0, 2)
    has_des = rng.random() < 0.6
    has_conv = rng.random() < 0.6
    while n_dg * T + 2 * T * has_des + T * has_conv > 20 or n_dg + has_des == 0:
        n_dg, has_des = rng.randint(0, 2), rng.random() < 0.6
    buses = [bus(1, pcc=True), bus(2)]
    lines = [line("L1", 1, 2, r=rng.uniform(0.02, 0.2), x=rng.uniform(0.01, 0.1))]
    convs = []
    if has_conv:
        buses.append(bus(3, kind="DC", pcc=rng.random() < 0.5))
        convs.append({"id": "C1", "ac_bus": "2", "dc_bus": "3", "pc_max": rng.choice([50.0, 200.0]),
                      "qc_max": 100.0, "eta_rect": 0.97, "eta_inv": 0.93})
    ids = [b["id"] for b in buses]
    gens = []
    for k in range(n_dg):
        p_max = rng.uniform(50, 150)
        gens.append(dg(f"G{k + 1}", rng.choice(ids), round(rng.uniform(0.02, 0.08), 3),
                       round(rng.uniform(0.1, 0.5) * p_max, 1), round(p_max, 1),
                       ru=rng.choice([None, 40.0]), rd=rng.choice([None, 40.0]),
                       ut=rng.randint(1, 3), dt=rng.randint(1, 3)))
    stos = []
    if has_des:
        stos.append({"id": "S1", "bus": rng.choice(ids), "p_rating": 60.0, "e_max": 200.0,
                     "dod": 0.8, "eta": 0.9, "e_init": 100.0})
    net = make_net(buses, lines, convs, gens, stos)
    pd = {b: [round(rng.uniform(0, 120), 1) for _ in range(T)] for b in ids}
    qd = {b: [round(0.3 * v, 1) for v in pd[b]] for b in ids if b != "3"}
    price = [round(rng.uniform(0.01, 0.1), 3) for _ in range(T)]
    prof = make_profiles(T, price, rng.choice([150.0, 400.0]), pd=pd, qd=qd)
    return net, prof


# ---------------------------------------------------------------------------
# 33-bus runs are expensive; each distinct scenario is solved once per session


class _Runs:
    def __init__(self):
        self.cache = {}

    def config(self, label, backend="highs", **kw):
        return ScenarioConfig(str(datasets.network_path()), str(datasets.profiles_path()),
                              backend=backend, label=label, **kw)

    def get(self, label, build, backend="highs", **kw):
        key = (label, backend, tuple(sorted(kw.items())))
        if key not in self.cache:
            net, prof = build()
            self.cache[key] = run_loaded(self.config(label, backend, **kw), net, prof)
        return self.cache[key]

    def case(self, name, backend="highs", **kw):
        return self.get(name, lambda: cases.apply_case_transform(datasets.ieee33(), datasets.day_profiles(), name),
                        backend, **kw)

    def relocated(self, label, loads=(), ders=()):
        return self.get(label, lambda: cases.apply_case_transform(
            datasets.ieee33(), datasets.day_profiles(), "interconnect", loads, ders))

    def converter_step(self, fraction):
        def build():
            net, prof = cases.close_ties(datasets.ieee33(), datasets.day_profiles())
            return cases.scale_converters(net, prof, fraction)
        return self.get(f"capacity_{fraction:.4f}", build)


@pytest.fixture(scope="session")
def runs():
    return _Runs()


def certify(net, prof, sol, tol=1e-6):
    rep = check_solution(net, prof, sol, tol=tol)
    assert rep.passed, f"verification failed: {rep.families()} max {rep.max_residual:.3e}"
    return rep


def write_json(path: Path, doc) -> Path:
    path.write_text(json.dumps(doc))
    return path


def close(a, b, rel=1e-6):
    return abs(a - b) <= rel * max(1.0, abs(a), abs(b))


np.set_printoptions(precision=6)

# acceptance verdict lines, echoed at the end of the session
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for ln in ACCEPTANCE:
            terminalreporter.write_line(ln)
