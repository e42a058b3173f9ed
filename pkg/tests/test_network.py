import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hybridgrid import cases, datasets
from hybridgrid.network import (
    AC, DC, NetworkError, from_per_unit, line_admittance, network_from_dict, network_to_dict,
    parse_network, serialize_network, to_per_unit, validate_topology,
)

from conftest import bus, line, make_net


def test_two_bus_document():
    net = make_net([bus(1, pcc=True), bus(2)], [line("L1", 1, 2)])
    assert len(net.buses) == 2 and len(net.lines) == 1


def test_bundled_line_one():
    ln = {x.id: x for x in datasets.ieee33().lines}["1"]
    assert (ln.r, ln.x, ln.pl_max) == (0.0922, 0.0470, 4600.0)


def test_bundled_has_all_table_rows():
    net = datasets.ieee33()
    assert len(net.lines) == 31
    tie = {x.id: x for x in net.lines}["31"]
    assert (tie.from_bus, tie.to_bus, tie.kind, tie.closed) == ("25", "29", DC, False)


@pytest.mark.parametrize("mutate, fragment", [
    (lambda d: d["lines"].append(line("X", 1, 3, kind="DC")), "DC line joins AC bus"),
    (lambda d: d["buses"].append(bus(2)), "duplicate"),
    (lambda d: d["lines"].append(line("X", 1, 99)), "unknown bus"),
    (lambda d: d["lines"][0].update(r=0.0), "r must be positive"),
    (lambda d: d["buses"][0].update(pcc=False), "no utility connection"),
    (lambda d: d["converters"].clear(), "no utility connection or converter"),
    (lambda d: (d["converters"].clear(), d["buses"][2].update(pcc=True)), "disconnected"),
    (lambda d: d["converters"][0].update(ac_bus="3", dc_bus="1"), "ac_bus must be AC"),
    (lambda d: d.update(extra=1), "unknown top-level"),
])
def test_parse_errors(mutate, fragment):
    doc = {
        "buses": [bus(1, pcc=True), bus(2), bus(3, kind="DC")],
        "lines": [line("L1", 1, 2)],
        "converters": [{"id": "C1", "ac_bus": "2", "dc_bus": "3"}],
    }
    network_from_dict(doc)
    mutate(doc)
    with pytest.raises(NetworkError, match=fragment):
        network_from_dict(doc)


def test_invalid_json():
    with pytest.raises(NetworkError):
        parse_network("{not json")


def test_admittance_line_one():
    # 0.0922 / (0.0922**2 + 0.047**2) and -0.047 / (same), by hand
    g, b = line_admittance(0.0922, 0.0470, AC)
    assert g == pytest.approx(8.6089, abs=5e-4)
    assert b == pytest.approx(-4.3885, abs=5e-4)


def test_admittance_dc_line_22():
    g, b = line_admittance(0.8980, 0.7091, DC)
    assert g == pytest.approx(1.1136, abs=5e-5)
    assert b == 0.0


def test_admittance_resistive_limit():
    assert line_admittance(0.25, 0.0, AC) == (4.0, 0.0)


def test_admittance_rejects_nonpositive_r():
    with pytest.raises(NetworkError):
        line_admittance(0.0, 1.0)


@given(st.floats(1e-4, 10.0), st.floats(-10.0, 10.0))
def test_admittance_matches_complex_inverse(r, x):
    g, b = line_admittance(r, x, AC)
    y = 1.0 / complex(r, x)
    assert g == pytest.approx(y.real, rel=1e-12)
    assert b == pytest.approx(y.imag, rel=1e-12, abs=1e-300)
    assert (g * g + b * b) == pytest.approx(1.0 / (r * r + x * x), rel=1e-12)


def test_per_unit_base():
    base = datasets.ieee33().base
    assert base.z_base() == pytest.approx(160.2756, abs=1e-4)
    norm = to_per_unit(datasets.ieee33())
    ln = {x.id: x for x in norm.net.lines}["1"]
    assert ln.r == pytest.approx(5.7526e-4, rel=1e-4)


def test_unit_impedance_base_is_identity():
    # v = 1 kV and s = 1000 kVA give z_base = 1 ohm
    doc = {"base": {"s_base": 1000.0, "v_base_ac": 1.0},
           "buses": [bus(1, pcc=True), bus(2)], "lines": [line("L1", 1, 2, r=0.3, x=0.4)]}
    ln = to_per_unit(network_from_dict(doc)).net.lines[0]
    assert (ln.r, ln.x) == (0.3, 0.4)


def test_per_unit_round_trip():
    net = datasets.ieee33()
    back = from_per_unit(to_per_unit(net))
    for a, b in zip(net.lines + net.generators + net.storages + net.converters,
                    back.lines + back.generators + back.storages + back.converters):
        for k, v in vars(a).items():
            w = vars(b)[k]
            if isinstance(v, float) and math.isfinite(v):
                assert w == pytest.approx(v, rel=1e-12, abs=1e-12), (a.id, k)
            else:
                assert w == v


def test_serialize_round_trip():
    net = datasets.ieee33()
    assert parse_network(serialize_network(net)) == net
    assert json.loads(serialize_network(net)) == network_to_dict(net)


def test_topology_interconnected_default():
    rep = validate_topology(datasets.ieee33())
    assert rep.ac_buses == [str(i) for i in range(1, 23)]
    assert rep.dc_buses == [str(i) for i in range(23, 34)]
    assert rep.pcc == ["1", "23"]
    assert [c for c, _, _ in rep.bridges] == ["C3-23", "C6-26"]
    assert rep.converters_only_coupling


def test_topology_with_tie_closed():
    net, _ = cases.disconnect(datasets.ieee33(), datasets.day_profiles())
    rep = validate_topology(net)
    assert sorted(map(sorted, rep.components)) == sorted([
        sorted(str(i) for i in range(1, 23)), sorted(str(i) for i in range(23, 34))])
    assert rep.component_of("25") == rep.component_of("29")


def test_single_bus_topology():
    rep = validate_topology(make_net([bus(1, pcc=True)]))
    assert len(rep.components) == 1 and rep.bridges == []
