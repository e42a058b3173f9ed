"""Day-ahead scheduling MILP for a hybrid AC/DC microgrid.

All model quantities are per-unit on the network's ``s_base`` with one-hour
periods; the objective is in dollars. :class:`Solution` converts back to
kW / kVAr / kWh.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .linflow import LinearizationError, LinearizationPoint, line_flow_exprs
from .milp import BINARY, MilpModel
from .network import AC, DC, NormalizedNetwork, reference_buses
from .profiles import ProfileSet

logger = logging.getLogger(__name__)

# branching order: commitment, then storage mode, then converter direction
PRIORITY = {"I": 0, "u": 1, "v": 1, "d": 2, "y": 3, "z": 3}
PATTERN_FAMILIES = ("I", "u", "v", "d")


class ModelError(ValueError):
    pass


class IntegralityError(ValueError):
    pass


class ObjectiveMismatch(ValueError):
    pass


@dataclass
class ScheduleOptions:
    loss_term: bool = True
    terminal_energy: bool = False
    theta_max: float = 0.5


class ScheduleModel(MilpModel):
    def __init__(self, norm: NormalizedNetwork, profiles: ProfileSet, point: LinearizationPoint,
                 options: ScheduleOptions):
        super().__init__()
        self.norm = norm
        self.profiles = profiles
        self.point = point
        self.options = options
        self.horizon = profiles.horizon
        # (line id, reversed) -> entity name of the flow variables
        self.flow_entity: dict[tuple[str, bool], str] = {}

    def fix_pattern(self, pattern) -> None:
        """Pin commitment / storage-mode / converter-direction binaries."""
        for family, entity, bits in pattern:
            for t, v in enumerate(bits):
                self.fix(self.var(family, entity, t), v)

    def binary_index(self) -> dict[str, list[int]]:
        out: dict[str, list[int]] = {}
        for j in self.binaries:
            out.setdefault(self.keys[j].family, []).append(j)
        return out

    def solve_lp_form(self):
        return self.to_lp()


def _flow_entity(line_id: str, a: str, b: str) -> str:
    return f"{line_id}.{a}.{b}"


# ---------------------------------------------------------------------------
# constraint families


def add_nodal_balance(model: ScheduleModel, bus: str, t: int) -> None:
    """Active (and, on AC buses, reactive) balance; flows leave the bus."""
    net = model.norm.net
    sb = model.norm.base.s_base
    spec = net.bus(bus)
    terms = []
    for g in net.generators:
        if g.bus == bus:
            terms.append((model.var("P", g.id, t), 1.0))
    for s in net.storages:
        if s.bus == bus:
            terms.append((model.var("PB", s.id, t), 1.0))
    for ln in net.active_lines:
        if bus == ln.from_bus:
            terms.append((model.var("PL", model.flow_entity[(ln.id, False)], t), -1.0))
        elif bus == ln.to_bus:
            terms.append((model.var("PL", model.flow_entity[(ln.id, True)], t), -1.0))
    for c in net.converters:
        if not model.has("PCr", c.id, t):
            continue
        if c.ac_bus == bus:
            terms += [(model.var("PCr", c.id, t), -1.0), (model.var("PCi", c.id, t), c.eta_inv)]
        elif c.dc_bus == bus:
            terms += [(model.var("PCr", c.id, t), c.eta_rect), (model.var("PCi", c.id, t), -1.0)]
    if spec.pcc:
        terms.append((model.var("PM", bus, t), 1.0))
    model.add_row(terms, "=", model.profiles.load_p(bus)[t] / sb, f"balP_{bus}_t{t:02d}")
    if spec.kind != AC:
        return
    terms = []
    for g in net.dispatchable:
        if g.bus == bus:
            terms.append((model.var("Q", g.id, t), 1.0))
    for ln in net.active_lines:
        if ln.kind != AC:
            continue
        if bus == ln.from_bus:
            terms.append((model.var("QL", model.flow_entity[(ln.id, False)], t), -1.0))
        elif bus == ln.to_bus:
            terms.append((model.var("QL", model.flow_entity[(ln.id, True)], t), -1.0))
    for c in net.converters:
        if c.ac_bus == bus and model.has("QC", c.id, t):
            terms.append((model.var("QC", c.id, t), 1.0))
    if spec.pcc:
        terms.append((model.var("QM", bus, t), 1.0))
    model.add_row(terms, "=", model.profiles.load_q(bus)[t] / sb, f"balQ_{bus}_t{t:02d}")


def initial_obligations(g) -> tuple[int, int]:
    """Hours at the start of the horizon the unit must stay on / off."""
    must_on = max(0, g.ut - g.init_on_hours) if g.init_on_hours > 0 else 0
    must_off = max(0, g.dt - g.init_off_hours) if g.init_off_hours > 0 else 0
    return must_on, must_off


def add_uc_constraints(model: ScheduleModel, g) -> None:
    """Capacity, commitment logic, minimum up/down and startup-aware ramps."""
    T = model.horizon
    I = [model.var("I", g.id, t) for t in range(T)]
    y = [model.var("y", g.id, t) for t in range(T)]
    z = [model.var("z", g.id, t) for t in range(T)]
    P = [model.var("P", g.id, t) for t in range(T)]
    Q = [model.var("Q", g.id, t) for t in range(T)]
    i0 = 1.0 if g.init_on_hours > 0 else 0.0
    p0 = g.init_p if i0 else 0.0
    must_on, must_off = initial_obligations(g)
    for t in range(min(must_on, T)):
        model.fix(I[t], 1.0)
    for t in range(min(must_off, T)):
        model.fix(I[t], 0.0)
    for t in range(T):
        model.add_row([(P[t], 1.0), (I[t], -g.p_max)], "<=", 0.0, f"pmax_{g.id}_t{t:02d}")
        model.add_row([(P[t], 1.0), (I[t], -g.p_min)], ">=", 0.0, f"pmin_{g.id}_t{t:02d}")
        model.add_row([(Q[t], 1.0), (I[t], -g.q_max)], "<=", 0.0, f"qmax_{g.id}_t{t:02d}")
        model.add_row([(Q[t], 1.0), (I[t], -g.q_min)], ">=", 0.0, f"qmin_{g.id}_t{t:02d}")
        prev = [(I[t - 1], 1.0)] if t else []
        model.add_row([(y[t], 1.0), (z[t], -1.0), (I[t], -1.0)] + prev, "=", -i0 if t == 0 else 0.0,
                      f"logic_{g.id}_t{t:02d}")
        model.add_row([(y[t], 1.0), (z[t], 1.0)], "<=", 1.0, f"yz_{g.id}_t{t:02d}")
        lo_up = max(0, t - g.ut + 1)
        model.add_row([(y[k], 1.0) for k in range(lo_up, t + 1)] + [(I[t], -1.0)], "<=", 0.0,
                      f"minup_{g.id}_t{t:02d}")
        lo_dn = max(0, t - g.dt + 1)
        model.add_row([(z[k], 1.0) for k in range(lo_dn, t + 1)] + [(I[t], 1.0)], "<=", 1.0,
                      f"mindn_{g.id}_t{t:02d}")
        if math.isfinite(g.ru):
            if t == 0:
                model.add_row([(P[0], 1.0), (y[0], -g.p_min)], "<=", p0 + g.ru * i0, f"ru_{g.id}_t00")
            else:
                model.add_row([(P[t], 1.0), (P[t - 1], -1.0), (I[t - 1], -g.ru), (y[t], -g.p_min)], "<=",
                              0.0, f"ru_{g.id}_t{t:02d}")
        if math.isfinite(g.rd):
            if t == 0:
                model.add_row([(P[0], -1.0), (I[0], -g.rd), (z[0], -g.p_min)], "<=", -p0, f"rd_{g.id}_t00")
            else:
                model.add_row([(P[t - 1], 1.0), (P[t], -1.0), (I[t], -g.rd), (z[t], -g.p_min)], "<=", 0.0,
                              f"rd_{g.id}_t{t:02d}")


def add_storage_constraints(model: ScheduleModel, s) -> None:
    T = model.horizon
    for t in range(T):
        dch, ch = model.var("Pdch", s.id, t), model.var("Pch", s.id, t)
        pb, e = model.var("PB", s.id, t), model.var("E", s.id, t)
        u, v = model.var("u", s.id, t), model.var("v", s.id, t)
        model.add_row([(dch, 1.0), (v, -s.p_rating)], "<=", 0.0, f"dch_{s.id}_t{t:02d}")
        model.add_row([(ch, 1.0), (u, s.p_rating)], ">=", 0.0, f"ch_{s.id}_t{t:02d}")
        model.add_row([(pb, 1.0), (dch, -1.0), (ch, -1.0)], "=", 0.0, f"pb_{s.id}_t{t:02d}")
        terms = [(e, 1.0), (dch, 1.0 / s.eta), (ch, 1.0)]
        if t:
            terms.append((model.var("E", s.id, t - 1), -1.0))
        model.add_row(terms, "=", s.e_init if t == 0 else 0.0, f"soc_{s.id}_t{t:02d}")
        model.add_row([(u, 1.0), (v, 1.0)], "<=", 1.0, f"uv_{s.id}_t{t:02d}")
    if model.options.terminal_energy:
        model.add_row([(model.var("E", s.id, T - 1), 1.0)], ">=", s.e_init, f"eterm_{s.id}")


def add_exchange_limits(model: ScheduleModel, t: int) -> None:
    """Utility exchange variables at each connection point, bounded by the tie capacity."""
    net = model.norm.net
    sb = model.norm.base.s_base
    pmax = model.profiles.pm_max / sb
    qmax = model.profiles.q_exchange_max / sb
    for bus in net.pcc_buses:
        model.add_var("PM", bus, t, -pmax, pmax, obj=model.profiles.price[t] * sb)
        if net.bus(bus).kind == AC:
            model.add_var("QM", bus, t, -qmax, qmax)


# ---------------------------------------------------------------------------


def build_model(
    norm: NormalizedNetwork,
    profiles: ProfileSet,
    point: LinearizationPoint | None = None,
    options: ScheduleOptions | None = None,
    radius: float | None = None,
) -> ScheduleModel:
    """Assemble the scheduling MILP around the linearization ``point``.

    ``radius`` optionally boxes every non-reference voltage deviation to
    ``point +/- radius`` (trust region of the successive linearization).
    """
    net = norm.net
    options = options or ScheduleOptions()
    profiles.check_against(net)
    T = profiles.horizon
    sb = norm.base.s_base
    if point is None:
        point = LinearizationPoint.flat(net.bus_ids, T)
    for b in net.bus_ids:
        if b not in point.dv or len(point.dv[b]) != T:
            raise LinearizationError(f"linearization point does not cover bus {b!r} over {T} hours")
    m = ScheduleModel(norm, profiles, point, options)
    ref = reference_buses(net)

    for t in range(T):
        for bus in net.buses:
            lo, hi = bus.v_min - 1.0, bus.v_max - 1.0
            if radius is not None:
                c = point.at(bus.id, t)
                lo, hi = max(lo, c - radius), min(hi, c + radius)
            j = m.add_var("dV", bus.id, t, lo, hi)
            if ref[bus.id] == bus.id:
                m.fix(j, 0.0)
            if bus.kind == AC:
                j = m.add_var("dth", bus.id, t, -options.theta_max, options.theta_max)
                if ref[bus.id] == bus.id:
                    m.fix(j, 0.0)
        add_exchange_limits(m, t)

    # branch flows, both orientations, each tied to its own linear expression
    for ln in net.active_lines:
        a, b = ln.from_bus, ln.to_bus
        m.flow_entity[(ln.id, False)] = _flow_entity(ln.id, a, b)
        m.flow_entity[(ln.id, True)] = _flow_entity(ln.id, b, a)
        g, bb = norm.g[ln.id], norm.b[ln.id]
        for t in range(T):
            va = point.at(a, t) if options.loss_term else 0.0
            vb = point.at(b, t) if options.loss_term else 0.0
            exprs = line_flow_exprs(g, bb, ln.w, va, vb)
            for rev, (m_bus, n_bus) in ((False, (a, b)), (True, (b, a))):
                ent = m.flow_entity[(ln.id, rev)]
                pl = m.add_var("PL", ent, t, -ln.pl_max, ln.pl_max)
                _bind(m, pl, exprs[1 if rev else 0], m_bus, n_bus, t, ln.kind, f"defP_{ent}_t{t:02d}")
                if ln.kind == AC:
                    ql = m.add_var("QL", ent, t, -ln.ql_max, ln.ql_max)
                    _bind(m, ql, exprs[3 if rev else 2], m_bus, n_bus, t, ln.kind, f"defQ_{ent}_t{t:02d}")

    for c in net.converters:
        for t in range(T):
            r = m.add_var("PCr", c.id, t, 0.0, c.pc_max)
            i = m.add_var("PCi", c.id, t, 0.0, c.pc_max)
            d = m.add_var("d", c.id, t, 0.0, 1.0, kind=BINARY, priority=PRIORITY["d"])
            m.add_var("QC", c.id, t, -c.qc_max, c.qc_max)
            if c.pc_max > 0:
                m.add_row([(r, 1.0), (d, -c.pc_max)], "<=", 0.0, f"rect_{c.id}_t{t:02d}")
                m.add_row([(i, 1.0), (d, c.pc_max)], "<=", c.pc_max, f"inv_{c.id}_t{t:02d}")
            else:
                m.fix(d, 0.0)

    for g in net.generators:
        if g.dispatchable:
            for t in range(T):
                m.add_var("P", g.id, t, min(0.0, g.p_min), g.p_max, obj=g.cost * sb)
                m.add_var("Q", g.id, t, min(0.0, g.q_min), max(0.0, g.q_max))
                for fam in ("I", "y", "z"):
                    m.add_var(fam, g.id, t, 0.0, 1.0, kind=BINARY, priority=PRIORITY[fam])
            add_uc_constraints(m, g)
        else:
            avail = profiles.availability[g.id]
            for t in range(T):
                m.add_var("P", g.id, t, 0.0, avail[t] * g.p_max)

    for s in net.storages:
        for t in range(T):
            m.add_var("Pdch", s.id, t, 0.0, s.p_rating)
            m.add_var("Pch", s.id, t, -s.p_rating, 0.0)
            m.add_var("PB", s.id, t, -s.p_rating, s.p_rating)
            m.add_var("E", s.id, t, s.e_floor, s.e_max)
            m.add_var("u", s.id, t, 0.0, 1.0, kind=BINARY, priority=PRIORITY["u"])
            m.add_var("v", s.id, t, 0.0, 1.0, kind=BINARY, priority=PRIORITY["v"])
        add_storage_constraints(m, s)

    for t in range(T):
        for bus in net.bus_ids:
            add_nodal_balance(m, bus, t)
    logger.info("built model: %d variables (%d binary), %d rows", m.n_vars, len(m.binaries), m.n_rows)
    return m


def _bind(m, flow_var, expr, m_bus, n_bus, t, kind, name):
    terms = [(flow_var, 1.0), (m.var("dV", m_bus, t), -expr.c_vm), (m.var("dV", n_bus, t), -expr.c_vn)]
    if kind == AC:
        terms += [(m.var("dth", m_bus, t), -expr.c_tm), (m.var("dth", n_bus, t), -expr.c_tn)]
    m.add_row(terms, "=", expr.const, name)


# ---------------------------------------------------------------------------
# solutions


@dataclass
class Solution:
    """Decision values in physical units (kW, kVAr, kWh); voltages in per-unit."""

    status: str
    objective: float
    horizon: int
    s_base: float
    gen_p: dict[str, np.ndarray] = field(default_factory=dict)
    gen_q: dict[str, np.ndarray] = field(default_factory=dict)
    commit: dict[str, np.ndarray] = field(default_factory=dict)
    startup: dict[str, np.ndarray] = field(default_factory=dict)
    shutdown: dict[str, np.ndarray] = field(default_factory=dict)
    pl: dict[str, np.ndarray] = field(default_factory=dict)
    ql: dict[str, np.ndarray] = field(default_factory=dict)
    conv_rect: dict[str, np.ndarray] = field(default_factory=dict)
    conv_inv: dict[str, np.ndarray] = field(default_factory=dict)
    conv_dir: dict[str, np.ndarray] = field(default_factory=dict)
    conv_q: dict[str, np.ndarray] = field(default_factory=dict)
    dv: dict[str, np.ndarray] = field(default_factory=dict)
    dth: dict[str, np.ndarray] = field(default_factory=dict)
    dch: dict[str, np.ndarray] = field(default_factory=dict)
    ch: dict[str, np.ndarray] = field(default_factory=dict)
    pb: dict[str, np.ndarray] = field(default_factory=dict)
    energy: dict[str, np.ndarray] = field(default_factory=dict)
    u: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    pm: dict[str, np.ndarray] = field(default_factory=dict)
    qm: dict[str, np.ndarray] = field(default_factory=dict)
    point: LinearizationPoint | None = None
    eta: dict[str, tuple[float, float]] = field(default_factory=dict)
    nodes: int = 0

    def binary_pattern(self) -> tuple:
        out = []
        for fam, src in (("I", self.commit), ("u", self.u), ("v", self.v), ("d", self.conv_dir)):
            for key in sorted(src):
                out.append((fam, key, tuple(int(round(b)) for b in src[key])))
        return tuple(out)

    def flow(self, line_id: str, a: str, b: str) -> np.ndarray:
        return self.pl[_flow_entity(line_id, a, b)]

    @property
    def line_losses_kw(self) -> float:
        """Sum over lines and hours of PL_mn + PL_nm."""
        total = 0.0
        for ent, series in self.pl.items():
            total += float(np.sum(series))
        return total

    @property
    def converter_losses_kw(self) -> float:
        total = 0.0
        for cid, (er, ei) in self.eta.items():
            total += float(np.sum((1 - er) * self.conv_rect[cid] + (1 - ei) * self.conv_inv[cid]))
        return total

    @property
    def losses_kw(self) -> float:
        return self.line_losses_kw + self.converter_losses_kw

    def des_state(self, storage_id: str, tol: float = 1e-6) -> np.ndarray:
        """-1 charging, 1 discharging, 0 idle."""
        p = self.pb[storage_id]
        return np.where(p > tol, 1, np.where(p < -tol, -1, 0))

    def recompute_objective(self, net, profiles) -> float:
        total = 0.0
        for g in net.generators:
            total += g.cost * float(np.sum(self.gen_p[g.id]))
        price = np.asarray(profiles.price)
        for bus, series in self.pm.items():
            total += float(price @ series)
        return total


def extract_solution(model: ScheduleModel, x, solver_objective: float | None = None,
                     status: str = "optimal", int_tol: float = 1e-6) -> Solution:
    """Map a raw value vector back onto network entities."""
    x = np.asarray(x, dtype=float).copy()
    b = model.binaries
    if b:
        xb = x[b]
        err = np.abs(xb - np.round(xb))
        if np.max(err) > int_tol:
            j = b[int(np.argmax(err))]
            raise IntegralityError(f"{model.keys[j].name} = {x[j]!r} is not binary")
        x[b] = np.round(xb)
    net = model.norm.net
    sb = model.norm.base.s_base
    T = model.horizon
    fam: dict[str, dict[str, np.ndarray]] = {}
    for j, k in enumerate(model.keys):
        fam.setdefault(k.family, {}).setdefault(k.entity, np.zeros(T))[k.t] = x[j]

    def grab(name, scale):
        return {e: v * scale for e, v in fam.get(name, {}).items()}

    sol = Solution(
        status=status, objective=math.nan, horizon=T, s_base=sb,
        gen_p=grab("P", sb), gen_q=grab("Q", sb), commit=grab("I", 1.0),
        startup=grab("y", 1.0), shutdown=grab("z", 1.0),
        pl=grab("PL", sb), ql=grab("QL", sb),
        conv_rect=grab("PCr", sb), conv_inv=grab("PCi", sb), conv_dir=grab("d", 1.0), conv_q=grab("QC", sb),
        dv=grab("dV", 1.0), dth=grab("dth", 1.0),
        dch=grab("Pdch", sb), ch=grab("Pch", sb), pb=grab("PB", sb), energy=grab("E", sb),
        u=grab("u", 1.0), v=grab("v", 1.0), pm=grab("PM", sb), qm=grab("QM", sb),
        point=model.point,
        eta={c.id: (c.eta_rect, c.eta_inv) for c in net.converters},
    )
    for g in net.nondispatchable:
        sol.gen_q.setdefault(g.id, np.zeros(T))
    obj = sol.recompute_objective(net, model.profiles)
    if solver_objective is not None:
        if abs(obj - solver_objective) > 1e-8 * max(1.0, abs(solver_objective)):
            raise ObjectiveMismatch(f"solver objective {solver_objective!r} vs recomputed {obj!r}")
    sol.objective = obj
    return sol
