"""Scenario transforms: separate or couple the AC and DC sides, move loads and units.

Every transform is pure and returns new ``(network, profiles)`` objects.
Moving a load or unit across the AC/DC boundary inserts an implicit
converter stage, so the relocated quantity is scaled by the conversion
efficiency of the network's converters.
"""

from __future__ import annotations

import logging
from dataclasses import replace

from .network import AC, ConverterSpec, Network, NetworkError, network_from_dict, network_to_dict
from .profiles import ProfileSet

logger = logging.getLogger(__name__)

DEFAULT_TIES = ("31",)


def _revalidate(net: Network) -> Network:
    # round trip through the parser so every invariant is re-checked
    return network_from_dict(network_to_dict(net))


def _ties(net: Network, ties) -> list[str]:
    ids = {ln.id for ln in net.lines}
    chosen = [t for t in (DEFAULT_TIES if ties is None else ties) if t in ids]
    if ties is not None and len(chosen) != len(ties):
        raise NetworkError(f"unknown tie line(s) {sorted(set(ties) - ids)}")
    return chosen


def _efficiencies(net: Network) -> tuple[float, float]:
    """(rectifier, inverter) efficiency used for relocation penalties."""
    if net.converters:
        return net.converters[0].eta_rect, net.converters[0].eta_inv
    d = ConverterSpec("", "", "")
    return d.eta_rect, d.eta_inv


def close_ties(net: Network, profiles: ProfileSet, ties=None):
    """Close the tie line(s), leaving converters as they are."""
    tie = set(_ties(net, ties))
    lines = tuple(replace(ln, closed=True) if ln.id in tie else ln for ln in net.lines)
    return _revalidate(replace(net, lines=lines)), profiles


def disconnect(net: Network, profiles: ProfileSet, ties=None):
    """Zero the converter ratings and close the tie line(s)."""
    net, profiles = close_ties(net, profiles, ties)
    return scale_converters(net, profiles, 0.0)


def interconnect(net: Network, profiles: ProfileSet, ties=None, rating: float | None = None):
    """Converters at rated capacity, tie line(s) open.

    Converters whose rating was zeroed get ``rating`` (default: the stock
    converter rating).
    """
    tie = set(_ties(net, ties))
    rating = ConverterSpec("", "", "").pc_max if rating is None else rating
    lines = tuple(replace(ln, closed=False) if ln.id in tie else ln for ln in net.lines)
    conv = tuple(replace(c, pc_max=rating, qc_max=rating) if c.pc_max == 0 else c for c in net.converters)
    return _revalidate(replace(net, lines=lines, converters=conv)), profiles


def scale_converters(net: Network, profiles: ProfileSet, fraction: float):
    if fraction < 0:
        raise ValueError("fraction must be nonnegative")
    conv = tuple(replace(c, pc_max=c.pc_max * fraction, qc_max=c.qc_max * fraction) for c in net.converters)
    return _revalidate(replace(net, converters=conv)), profiles


def relocate_loads(net: Network, profiles: ProfileSet, moves, penalty: bool = True):
    """Move whole bus load series ``from -> to``.

    A load crossing to the other network type draws ``PD / eta`` through its
    own converter stage (inverter for AC loads on DC buses, rectifier for
    DC loads on AC buses). Reactive demand moved onto a DC bus is dropped.
    """
    eta_rect, eta_inv = _efficiencies(net)
    pd = {k: list(v) for k, v in profiles.pd.items()}
    qd = {k: list(v) for k, v in profiles.qd.items()}
    T = profiles.horizon
    # read every source before writing so swaps behave
    taken = []
    for src, dst in moves:
        src, dst = str(src), str(dst)
        for b in (src, dst):
            try:
                net.bus(b)
            except KeyError:
                raise NetworkError(f"unknown bus {b!r} in load relocation") from None
        taken.append((src, dst, pd.get(src, [0.0] * T), qd.get(src, [0.0] * T)))
    for src, _, _, _ in taken:
        pd.pop(src, None)
        qd.pop(src, None)
    for src, dst, p, q in taken:
        k_src, k_dst = net.bus(src).kind, net.bus(dst).kind
        scale = 1.0
        if penalty and k_src != k_dst:
            scale = 1.0 / (eta_inv if k_src == AC else eta_rect)
        base = pd.get(dst, [0.0] * T)
        pd[dst] = [a + b * scale for a, b in zip(base, p)]
        if k_dst == AC:
            qbase = qd.get(dst, [0.0] * T)
            qd[dst] = [a + b for a, b in zip(qbase, q)]
        elif any(abs(v) > 0 for v in q):
            logger.warning("reactive load of bus %s dropped on DC bus %s", src, dst)
    return net, replace(profiles, pd={k: tuple(v) for k, v in pd.items()}, qd={k: tuple(v) for k, v in qd.items()})


def relocate_ders(net: Network, profiles: ProfileSet, moves, penalty: bool = True):
    """Reassign generators or storage units to other buses.

    A unit crossing the AC/DC boundary is described by what it delivers to
    its new bus: power limits and ramps scale by the conversion efficiency
    and the cost per delivered kWh rises accordingly. DC-connected units
    lose their reactive capability. Storage keeps its energy rating; its
    power rating and discharge efficiency absorb the converter stage.
    """
    eta_rect, eta_inv = _efficiencies(net)
    gens = {g.id: g for g in net.generators}
    stor = {s.id: s for s in net.storages}
    for unit, bus in moves:
        unit, bus = str(unit), str(bus)
        try:
            kind = net.bus(bus).kind
        except KeyError:
            raise NetworkError(f"unknown bus {bus!r} in DER relocation") from None
        if unit in gens:
            g = gens[unit]
            old = net.bus(g.bus).kind
            new = replace(g, bus=bus)
            if penalty and old != kind:
                eta = eta_rect if old == AC else eta_inv
                new = replace(new, p_min=g.p_min * eta, p_max=g.p_max * eta, ru=g.ru * eta, rd=g.rd * eta,
                              cost=g.cost / eta, init_p=g.init_p * eta)
            if kind != AC:
                new = replace(new, q_min=0.0, q_max=0.0)
            gens[unit] = new
        elif unit in stor:
            s = stor[unit]
            old = net.bus(s.bus).kind
            new = replace(s, bus=bus)
            if penalty and old != kind:
                eta = eta_rect if old == AC else eta_inv
                new = replace(new, p_rating=s.p_rating * eta, eta=s.eta * eta)
            stor[unit] = new
        else:
            raise NetworkError(f"unknown unit {unit!r} in DER relocation")
    out = replace(net, generators=tuple(gens[g.id] for g in net.generators),
                  storages=tuple(stor[s.id] for s in net.storages))
    return _revalidate(out), profiles


CASES = ("none", "disconnect", "interconnect")


def apply_case_transform(net: Network, profiles: ProfileSet, case: str = "none",
                         relocate_load=(), relocate_der=()):
    """Topology case first, then any relocations."""
    if case == "disconnect":
        net, profiles = disconnect(net, profiles)
    elif case == "interconnect":
        net, profiles = interconnect(net, profiles)
    elif case != "none":
        raise ValueError(f"unknown case {case!r}; choose from {CASES}")
    if relocate_load:
        net, profiles = relocate_loads(net, profiles, relocate_load)
    if relocate_der:
        net, profiles = relocate_ders(net, profiles, relocate_der)
    return net, profiles
