"""Microgrid domain types, JSON ingestion, per-unit scaling and topology checks."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

AC = "AC"
DC = "DC"


class NetworkError(ValueError):
    """Raised when a network document is malformed or violates an invariant."""


@dataclass(frozen=True)
class BusSpec:
    id: str
    kind: str
    v_min: float = 0.95
    v_max: float = 1.05
    pcc: bool = False


@dataclass(frozen=True)
class LineSpec:
    id: str
    from_bus: str
    to_bus: str
    r: float
    x: float
    kind: str
    pl_max: float
    ql_max: float = 0.0
    closed: bool = True

    @property
    def w(self) -> int:
        return 1 if self.kind == DC else 0


@dataclass(frozen=True)
class ConverterSpec:
    id: str
    ac_bus: str
    dc_bus: str
    pc_max: float = 1500.0
    qc_max: float = 1500.0
    eta_rect: float = 0.97
    eta_inv: float = 0.93


@dataclass(frozen=True)
class GeneratorSpec:
    id: str
    bus: str
    dispatchable: bool
    cost: float
    p_min: float
    p_max: float
    q_min: float = 0.0
    q_max: float = 0.0
    ru: float = math.inf
    rd: float = math.inf
    ut: int = 1
    dt: int = 1
    init_on_hours: int = 0
    init_off_hours: int = 0
    init_p: float = 0.0


@dataclass(frozen=True)
class StorageSpec:
    id: str
    bus: str
    p_rating: float
    e_max: float
    dod: float
    eta: float
    e_init: float

    @property
    def e_floor(self) -> float:
        return (1.0 - self.dod) * self.e_max


@dataclass(frozen=True)
class PerUnitBase:
    s_base: float = 1000.0
    v_base_ac: float = 12.66
    v_base_dc: float | None = None

    @property
    def v_dc(self) -> float:
        return self.v_base_ac if self.v_base_dc is None else self.v_base_dc

    def z_base(self, kind: str = AC) -> float:
        """Impedance base in ohm; kV**2 * 1000 / kVA."""
        v = self.v_base_ac if kind == AC else self.v_dc
        return v * v * 1000.0 / self.s_base


@dataclass(frozen=True)
class Network:
    buses: tuple[BusSpec, ...]
    lines: tuple[LineSpec, ...] = ()
    converters: tuple[ConverterSpec, ...] = ()
    generators: tuple[GeneratorSpec, ...] = ()
    storages: tuple[StorageSpec, ...] = ()
    base: PerUnitBase = field(default_factory=PerUnitBase)

    def bus(self, bus_id: str) -> BusSpec:
        for b in self.buses:
            if b.id == bus_id:
                return b
        raise KeyError(bus_id)

    def generator(self, gen_id: str) -> GeneratorSpec:
        for g in self.generators:
            if g.id == gen_id:
                return g
        raise KeyError(gen_id)

    @property
    def bus_ids(self) -> list[str]:
        return [b.id for b in self.buses]

    @property
    def ac_buses(self) -> list[str]:
        return [b.id for b in self.buses if b.kind == AC]

    @property
    def dc_buses(self) -> list[str]:
        return [b.id for b in self.buses if b.kind == DC]

    @property
    def pcc_buses(self) -> list[str]:
        return [b.id for b in self.buses if b.pcc]

    @property
    def active_lines(self) -> list[LineSpec]:
        return [ln for ln in self.lines if ln.closed]

    @property
    def dispatchable(self) -> list[GeneratorSpec]:
        return [g for g in self.generators if g.dispatchable]

    @property
    def nondispatchable(self) -> list[GeneratorSpec]:
        return [g for g in self.generators if not g.dispatchable]


@dataclass(frozen=True)
class NormalizedNetwork:
    """Network with every electrical quantity expressed in per-unit.

    Impedances are divided by the side's impedance base, powers and
    capacities by ``s_base`` and energies by ``s_base`` times one hour.
    Line admittances ``g`` and ``b`` are precomputed in per-unit.
    """

    net: Network
    g: dict[str, float]
    b: dict[str, float]

    @property
    def base(self) -> PerUnitBase:
        return self.net.base

    def __getattr__(self, name: str) -> Any:
        # delegate collection access to the scaled network
        if name == "net":
            raise AttributeError(name)
        return getattr(self.net, name)


# ---------------------------------------------------------------------------
# admittance and per-unit scaling


def line_admittance(r: float, x: float, kind: str = AC) -> tuple[float, float]:
    """Series conductance and susceptance of a line.

    DC lines ignore the reactance: ``g = 1/r`` and ``b = 0``.
    """
    if not r > 0:
        raise NetworkError(f"line resistance must be positive, got {r!r}")
    if kind == DC:
        return 1.0 / r, 0.0
    den = r * r + x * x
    return r / den, -x / den


_KW_GEN = ("p_min", "p_max", "q_min", "q_max", "ru", "rd", "init_p")
_KW_STO = ("p_rating", "e_max", "e_init")


def _scale(obj, names, factor):
    return replace(obj, **{n: getattr(obj, n) * factor for n in names})


def to_per_unit(net: Network) -> NormalizedNetwork:
    base = net.base
    s = 1.0 / base.s_base
    lines = []
    g, b = {}, {}
    for ln in net.lines:
        z = base.z_base(ln.kind)
        pu = replace(ln, r=ln.r / z, x=ln.x / z, pl_max=ln.pl_max * s, ql_max=ln.ql_max * s)
        lines.append(pu)
        g[ln.id], b[ln.id] = line_admittance(pu.r, pu.x, pu.kind)
    scaled = replace(
        net,
        lines=tuple(lines),
        converters=tuple(_scale(c, ("pc_max", "qc_max"), s) for c in net.converters),
        generators=tuple(_scale(gn, _KW_GEN, s) for gn in net.generators),
        storages=tuple(_scale(st, _KW_STO, s) for st in net.storages),
    )
    return NormalizedNetwork(scaled, g, b)


def from_per_unit(norm: NormalizedNetwork) -> Network:
    """Inverse of :func:`to_per_unit`."""
    net = norm.net
    base = net.base
    s = base.s_base
    lines = []
    for ln in net.lines:
        z = base.z_base(ln.kind)
        lines.append(replace(ln, r=ln.r * z, x=ln.x * z, pl_max=ln.pl_max * s, ql_max=ln.ql_max * s))
    return replace(
        net,
        lines=tuple(lines),
        converters=tuple(_scale(c, ("pc_max", "qc_max"), s) for c in net.converters),
        generators=tuple(_scale(gn, _KW_GEN, s) for gn in net.generators),
        storages=tuple(_scale(st, _KW_STO, s) for st in net.storages),
    )


# ---------------------------------------------------------------------------
# topology


@dataclass
class TopologyReport:
    ac_buses: list[str]
    dc_buses: list[str]
    pcc: list[str]
    bridges: list[tuple[str, str, str]]
    components: list[list[str]]
    converters_only_coupling: bool

    def component_of(self, bus_id: str) -> list[str]:
        for comp in self.components:
            if bus_id in comp:
                return comp
        raise KeyError(bus_id)


def _components(bus_ids: list[str], edges: list[tuple[str, str]]) -> list[list[str]]:
    parent = {b: b for b in bus_ids}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for u, v in edges:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[rv] = ru
    groups: dict[str, list[str]] = {}
    for bid in bus_ids:
        groups.setdefault(find(bid), []).append(bid)
    return list(groups.values())


def line_components(net: Network) -> list[list[str]]:
    """Buses grouped by galvanic connection through closed lines."""
    return _components(net.bus_ids, [(ln.from_bus, ln.to_bus) for ln in net.active_lines])


def validate_topology(net: Network) -> TopologyReport:
    kinds = {b.id: b.kind for b in net.buses}
    coupling_ok = all(kinds[ln.from_bus] == kinds[ln.to_bus] for ln in net.lines)
    return TopologyReport(
        ac_buses=net.ac_buses,
        dc_buses=net.dc_buses,
        pcc=net.pcc_buses,
        bridges=[(c.id, c.ac_bus, c.dc_bus) for c in net.converters],
        components=line_components(net),
        converters_only_coupling=coupling_ok,
    )


def reference_buses(net: Network) -> dict[str, str]:
    """Voltage reference bus for every bus's line-connected component.

    The reference is the component's utility connection point if it has one,
    otherwise the first converter terminal on it.
    """
    terminals = [c.ac_bus for c in net.converters] + [c.dc_bus for c in net.converters]
    ref = {}
    for comp in line_components(net):
        members = set(comp)
        pcc = [b for b in comp if net.bus(b).pcc]
        conv = [b for b in terminals if b in members]
        if pcc:
            r = pcc[0]
        elif conv:
            r = conv[0]
        else:
            raise NetworkError(f"component {sorted(comp)} has no utility connection or converter")
        for b in comp:
            ref[b] = r
    return ref


# ---------------------------------------------------------------------------
# parsing and serialization

_SECTIONS = {
    "buses": BusSpec,
    "lines": LineSpec,
    "converters": ConverterSpec,
    "generators": GeneratorSpec,
    "storages": StorageSpec,
}
_ID_FIELDS = {"id", "bus", "from_bus", "to_bus", "ac_bus", "dc_bus"}


def _build(cls, raw: dict, where: str):
    if not isinstance(raw, dict):
        raise NetworkError(f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise NetworkError(f"{where}: unknown field(s) {sorted(unknown)}")
    kwargs = {}
    for k, v in raw.items():
        if k in _ID_FIELDS:
            v = str(v)
        elif v is None and k in ("ru", "rd"):
            v = math.inf
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise NetworkError(f"{where}: {exc}") from None


def _check(net: Network) -> None:
    for name in _SECTIONS:
        ids = [item.id for item in getattr(net, name)]
        dup = {i for i in ids if ids.count(i) > 1}
        if dup:
            raise NetworkError(f"duplicate {name} id(s): {sorted(dup)}")
    kinds = {}
    for b in net.buses:
        if b.kind not in (AC, DC):
            raise NetworkError(f"bus {b.id}: kind must be AC or DC")
        if not b.v_min < b.v_max:
            raise NetworkError(f"bus {b.id}: v_min must be below v_max")
        kinds[b.id] = b.kind
    if not net.pcc_buses:
        raise NetworkError("network has no utility connection (pcc) bus")

    def known(bus_id, where):
        if bus_id not in kinds:
            raise NetworkError(f"{where}: unknown bus {bus_id!r}")
        return kinds[bus_id]

    for ln in net.lines:
        where = f"line {ln.id}"
        kf, kt = known(ln.from_bus, where), known(ln.to_bus, where)
        if ln.kind not in (AC, DC):
            raise NetworkError(f"{where}: kind must be AC or DC")
        if kf != ln.kind or kt != ln.kind:
            raise NetworkError(f"{where}: {ln.kind} line joins {kf} bus {ln.from_bus} and {kt} bus {ln.to_bus}")
        if ln.from_bus == ln.to_bus:
            raise NetworkError(f"{where}: self loop")
        if not ln.r > 0:
            raise NetworkError(f"{where}: r must be positive")
        if not ln.pl_max > 0:
            raise NetworkError(f"{where}: pl_max must be positive")
    for c in net.converters:
        where = f"converter {c.id}"
        if known(c.ac_bus, where) != AC or known(c.dc_bus, where) != DC:
            raise NetworkError(f"{where}: ac_bus must be AC and dc_bus must be DC")
        if not (0 < c.eta_rect <= 1 and 0 < c.eta_inv <= 1):
            raise NetworkError(f"{where}: efficiencies must lie in (0, 1]")
        if c.pc_max < 0 or c.qc_max < 0:
            raise NetworkError(f"{where}: ratings must be nonnegative")
    for gn in net.generators:
        where = f"generator {gn.id}"
        known(gn.bus, where)
        if gn.p_min > gn.p_max or gn.q_min > gn.q_max:
            raise NetworkError(f"{where}: min limit above max limit")
        if gn.dispatchable:
            if gn.ut < 1 or gn.dt < 1:
                raise NetworkError(f"{where}: ut and dt must be at least 1")
            if gn.init_on_hours and gn.init_off_hours:
                raise NetworkError(f"{where}: cannot be both initially on and off")
        elif gn.cost != 0:
            raise NetworkError(f"{where}: nondispatchable units carry no cost")
    for st in net.storages:
        where = f"storage {st.id}"
        known(st.bus, where)
        if not (0 < st.dod <= 1 and 0 < st.eta <= 1):
            raise NetworkError(f"{where}: dod and eta must lie in (0, 1]")
        if not st.e_floor - 1e-9 <= st.e_init <= st.e_max + 1e-9:
            raise NetworkError(f"{where}: e_init outside [(1-dod)*e_max, e_max]")
    base = net.base
    if not (base.s_base > 0 and base.v_base_ac > 0 and base.v_dc > 0):
        raise NetworkError("per-unit bases must be positive")
    # every line-connected island needs a voltage reference, and the whole
    # system must hang together through lines and converters
    reference_buses(net)
    edges = [(ln.from_bus, ln.to_bus) for ln in net.active_lines]
    edges += [(c.ac_bus, c.dc_bus) for c in net.converters]
    if len(_components(net.bus_ids, edges)) > 1:
        raise NetworkError("network is disconnected")


def network_from_dict(doc: dict) -> Network:
    if not isinstance(doc, dict) or "buses" not in doc:
        raise NetworkError("network document must be an object with a 'buses' key")
    extra = set(doc) - set(_SECTIONS) - {"base"}
    if extra:
        raise NetworkError(f"unknown top-level key(s) {sorted(extra)}")
    parts = {}
    for name, cls in _SECTIONS.items():
        raw = doc.get(name, [])
        if not isinstance(raw, list):
            raise NetworkError(f"'{name}' must be a list")
        parts[name] = tuple(_build(cls, item, f"{name}[{k}]") for k, item in enumerate(raw))
    base = _build(PerUnitBase, doc.get("base", {}), "base")
    net = Network(base=base, **parts)
    _check(net)
    return net


def parse_network(document: str | bytes) -> Network:
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise NetworkError(f"invalid JSON: {exc}") from None
    return network_from_dict(doc)


def load_network(path: str | Path) -> Network:
    return parse_network(Path(path).read_text())


def network_to_dict(net: Network) -> dict:
    def enc(obj):
        d = asdict(obj)
        return {k: (None if isinstance(v, float) and math.isinf(v) else v) for k, v in d.items()}

    out: dict[str, Any] = {"base": asdict(net.base)}
    for name in _SECTIONS:
        out[name] = [enc(item) for item in getattr(net, name)]
    return out


def serialize_network(net: Network) -> str:
    return json.dumps(network_to_dict(net), indent=1)
