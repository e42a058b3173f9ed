"""Independent certification of schedules and a brute-force optimality oracle.

:func:`check_solution` re-derives every constraint from the raw network and
profile data. It deliberately does not import the model builder: flows are
recomputed from voltages with a local copy of the linear formulas, and
minimum up/down times are checked by counting run lengths rather than
through the summation rows used in the optimization model.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .network import AC, Network, reference_buses, to_per_unit
from .solver.lp import OPTIMAL, DualSimplex, SolverOptions


class DimensionError(ValueError):
    pass


class OracleGuardError(ValueError):
    pass


# ---------------------------------------------------------------------------
# commitment timeline


@dataclass
class CommitmentTimeline:
    """Hourly on/off status with literal run-length counters.

    ``t_on[t]`` is the number of consecutive hours the unit has been on up
    to and including hour t (0 when off); ``t_off`` likewise for off. Initial
    history seeds the counters at the start of the horizon.
    """

    status: np.ndarray
    t_on: np.ndarray
    t_off: np.ndarray
    startup: np.ndarray
    shutdown: np.ndarray

    @classmethod
    def from_status(cls, status, init_on_hours: int = 0, init_off_hours: int = 0) -> "CommitmentTimeline":
        s = np.asarray(np.round(status), dtype=int)
        T = s.size
        on, off = np.zeros(T, dtype=int), np.zeros(T, dtype=int)
        y, z = np.zeros(T, dtype=int), np.zeros(T, dtype=int)
        prev = 1 if init_on_hours > 0 else 0
        run_on, run_off = init_on_hours, init_off_hours
        for t in range(T):
            if s[t]:
                run_on = run_on + 1 if prev else 1
                run_off = 0
            else:
                run_off = run_off + 1 if not prev else 1
                run_on = 0
            on[t], off[t] = run_on, run_off
            y[t] = max(s[t] - prev, 0)
            z[t] = max(prev - s[t], 0)
            prev = s[t]
        return cls(s, on, off, y, z)

    def up_shortfalls(self, ut: int, init_on_hours: int = 0):
        """(hour, missing hours) for every shutdown that ends a run shorter than ``ut``."""
        out = []
        for t in np.flatnonzero(self.shutdown):
            ran = self.t_on[t - 1] if t > 0 else init_on_hours
            if ran < ut:
                out.append((int(t), ut - int(ran)))
        return out

    def down_shortfalls(self, dt: int, init_off_hours: int = 0):
        """Startups after an off-run shorter than ``dt``.

        An off-run reaching back to the start of the horizon with no recorded
        off history carries no obligation.
        """
        out = []
        for t in np.flatnonzero(self.startup):
            rested = self.t_off[t - 1] if t > 0 else init_off_hours
            if init_off_hours == 0 and rested == t:
                continue
            if rested < dt:
                out.append((int(t), dt - int(rested)))
        return out


# ---------------------------------------------------------------------------
# violation report


@dataclass
class Violation:
    family: str
    entity: str
    hour: int
    residual: float


@dataclass
class ViolationReport:
    tol: float
    violations: list[Violation] = field(default_factory=list)
    family_max: dict[str, float] = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        return max(self.family_max.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol

    def record(self, family: str, entity, hour: int, residual: float) -> None:
        r = float(max(residual, 0.0))
        if r > self.family_max.get(family, -1.0):
            self.family_max[family] = r
        if r > self.tol:
            self.violations.append(Violation(family, str(entity), int(hour), r))

    def families(self) -> set[str]:
        return {v.family for v in self.violations}

    def to_json(self) -> str:
        doc = {"passed": self.passed, "max_residual": self.max_residual, "tol": self.tol,
               "family_max": self.family_max, "violations": [asdict(v) for v in self.violations]}
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ViolationReport":
        doc = json.loads(text)
        rep = cls(doc["tol"], [Violation(**v) for v in doc["violations"]], dict(doc["family_max"]))
        return rep


# ---------------------------------------------------------------------------


def _series(sol_dict, key, T, what):
    try:
        arr = np.asarray(sol_dict[key], dtype=float)
    except KeyError:
        raise DimensionError(f"solution has no {what} series for {key!r}") from None
    if arr.shape != (T,):
        raise DimensionError(f"{what} series for {key!r} has shape {arr.shape}, expected ({T},)")
    return arr


def _admittance(r, x, kind):
    if kind == AC:
        d = r * r + x * x
        return r / d, -x / d
    return 1.0 / r, 0.0


def check_solution(net: Network, profiles, solution, tol: float = 1e-6) -> ViolationReport:
    """Evaluate every constraint family of ``solution``; residuals in per-unit."""
    T = profiles.horizon
    if solution.horizon != T:
        raise DimensionError(f"solution horizon {solution.horizon} != profile horizon {T}")
    sb = net.base.s_base
    rep = ViolationReport(tol)
    kinds = {b.id: b.kind for b in net.buses}
    for b in net.buses:
        dv = _series(solution.dv, b.id, T, "voltage")
        for t in range(T):
            v = 1.0 + dv[t]
            rep.record("voltage", b.id, t, max(b.v_min - v, v - b.v_max))
    for bid, ref in reference_buses(net).items():
        if bid == ref:
            for t in range(T):
                rep.record("reference", bid, t, abs(solution.dv[bid][t]))

    # flows: definitions at the solution's linearization point, limits, balance contribution
    point = solution.point.dv if solution.point is not None else {b: np.zeros(T) for b in kinds}
    out_p = {b: np.zeros(T) for b in kinds}
    out_q = {b: np.zeros(T) for b in kinds}
    for ln in net.lines:
        if not ln.closed:
            continue
        zb = net.base.z_base(ln.kind)
        g, b = _admittance(ln.r / zb, ln.x / zb, ln.kind)
        for m, n in ((ln.from_bus, ln.to_bus), (ln.to_bus, ln.from_bus)):
            key = f"{ln.id}.{m}.{n}"
            pl = _series(solution.pl, key, T, "active flow")
            ql = _series(solution.ql, key, T, "reactive flow") if ln.kind == AC else np.zeros(T)
            for t in range(T):
                dvm, dvn = solution.dv[m][t], solution.dv[n][t]
                dth = (solution.dth[m][t] - solution.dth[n][t]) if ln.kind == AC else 0.0
                vh = point[m][t]
                w = 0 if ln.kind == AC else 1
                p_lin = g * (dvm - dvn) - b * dth * (1 - w) + g * vh * (dvm - dvn)
                q_lin = (-b * (dvm - dvn) - g * dth - b * vh * (dvm - dvn)) * (1 - w)
                rep.record("flow_def", key, t, abs(pl[t] / sb - p_lin))
                rep.record("flow_def", key, t, abs(ql[t] / sb - q_lin))
                rep.record("line_limit", key, t, (abs(pl[t]) - ln.pl_max) / sb)
                if ln.kind == AC:
                    rep.record("line_limit", key, t, (abs(ql[t]) - ln.ql_max) / sb)
                out_p[m][t] += pl[t]
                out_q[m][t] += ql[t]

    inj_p = {b: np.zeros(T) for b in kinds}
    inj_q = {b: np.zeros(T) for b in kinds}

    for c in net.converters:
        r = _series(solution.conv_rect, c.id, T, "rectifier")
        i = _series(solution.conv_inv, c.id, T, "inverter")
        q = _series(solution.conv_q, c.id, T, "converter reactive")
        for t in range(T):
            rep.record("converter", c.id, t, max(-r[t], r[t] - c.pc_max, -i[t], i[t] - c.pc_max) / sb)
            rep.record("converter", c.id, t, (abs(q[t]) - c.qc_max) / sb)
            rep.record("converter_direction", c.id, t, min(r[t], i[t]) / sb)
        inj_p[c.ac_bus] += -r + c.eta_inv * i
        inj_p[c.dc_bus] += c.eta_rect * r - i
        inj_q[c.ac_bus] += q

    qm_max = profiles.q_exchange_max
    for b in net.buses:
        pm = np.asarray(solution.pm.get(b.id, np.zeros(T)), dtype=float)
        qm = np.asarray(solution.qm.get(b.id, np.zeros(T)), dtype=float)
        for t in range(T):
            if b.pcc:
                rep.record("exchange", b.id, t, (abs(pm[t]) - profiles.pm_max) / sb)
                if b.kind == AC:
                    rep.record("exchange", b.id, t, (abs(qm[t]) - qm_max) / sb)
                else:
                    rep.record("exchange", b.id, t, abs(qm[t]) / sb)
            else:
                rep.record("exchange", b.id, t, max(abs(pm[t]), abs(qm[t])) / sb)
        inj_p[b.id] += pm
        inj_q[b.id] += qm

    for g in net.generators:
        p = _series(solution.gen_p, g.id, T, "generator output")
        q = np.asarray(solution.gen_q.get(g.id, np.zeros(T)), dtype=float)
        inj_p[g.bus] += p
        inj_q[g.bus] += q
        if not g.dispatchable:
            avail = profiles.availability[g.id]
            for t in range(T):
                rep.record("renewable", g.id, t, max(-p[t], p[t] - avail[t] * g.p_max) / sb)
                rep.record("renewable", g.id, t, abs(q[t]) / sb)
            continue
        status = _series(solution.commit, g.id, T, "commitment")
        for t in range(T):
            rep.record("integrality", g.id, t, abs(status[t] - round(status[t])))
        tl = CommitmentTimeline.from_status(status, g.init_on_hours, g.init_off_hours)
        I = tl.status
        for name, src, ref_ in (("y", solution.startup, tl.startup), ("z", solution.shutdown, tl.shutdown)):
            if g.id in src:
                for t in range(T):
                    rep.record("logic", f"{g.id}.{name}", t, abs(src[g.id][t] - ref_[t]))
        for t in range(T):
            rep.record("dg_capacity", g.id, t, max(g.p_min * I[t] - p[t], p[t] - g.p_max * I[t]) / sb)
            rep.record("dg_capacity", g.id, t, max(g.q_min * I[t] - q[t], q[t] - g.q_max * I[t]) / sb)
            p_prev = p[t - 1] if t else (g.init_p if g.init_on_hours > 0 else 0.0)
            i_prev = I[t - 1] if t else (1 if g.init_on_hours > 0 else 0)
            if math.isfinite(g.ru):
                rep.record("ramp", g.id, t, (p[t] - p_prev - g.ru * i_prev - g.p_min * tl.startup[t]) / sb)
            if math.isfinite(g.rd):
                rep.record("ramp", g.id, t, (p_prev - p[t] - g.rd * I[t] - g.p_min * tl.shutdown[t]) / sb)
        for t, miss in tl.up_shortfalls(g.ut, g.init_on_hours):
            rep.record("min_up", g.id, t, float(miss))
        for t, miss in tl.down_shortfalls(g.dt, g.init_off_hours):
            rep.record("min_down", g.id, t, float(miss))
        # residual obligations carried in from before the horizon
        if g.init_on_hours > 0:
            for t in range(min(max(0, g.ut - g.init_on_hours), T)):
                rep.record("min_up", g.id, t, float(1 - I[t]))
        if g.init_off_hours > 0:
            for t in range(min(max(0, g.dt - g.init_off_hours), T)):
                rep.record("min_down", g.id, t, float(I[t]))

    for s in net.storages:
        dch = _series(solution.dch, s.id, T, "discharge")
        ch = _series(solution.ch, s.id, T, "charge")
        pb = _series(solution.pb, s.id, T, "storage output")
        e = _series(solution.energy, s.id, T, "stored energy")
        u = _series(solution.u, s.id, T, "charging state")
        v = _series(solution.v, s.id, T, "discharging state")
        floor = (1.0 - s.dod) * s.e_max
        prev = s.e_init
        for t in range(T):
            rep.record("storage_discharge", s.id, t, max(-dch[t], dch[t] - s.p_rating * v[t]) / sb)
            rep.record("storage_charge", s.id, t, max(ch[t], -ch[t] - s.p_rating * u[t]) / sb)
            rep.record("storage_output", s.id, t, abs(pb[t] - dch[t] - ch[t]) / sb)
            rep.record("storage_energy", s.id, t, abs(e[t] - (prev - dch[t] / s.eta - ch[t])) / sb)
            rep.record("storage_bounds", s.id, t, max(floor - e[t], e[t] - s.e_max) / sb)
            rep.record("storage_exclusive", s.id, t, u[t] + v[t] - 1.0)
            for x in (u[t], v[t]):
                rep.record("integrality", s.id, t, abs(x - round(x)))
            prev = e[t]
        inj_p[s.bus] += pb

    for b in net.buses:
        pd = profiles.load_p(b.id)
        for t in range(T):
            rep.record("balance_p", b.id, t, abs(inj_p[b.id][t] - out_p[b.id][t] - pd[t]) / sb)
        if b.kind == AC:
            qd = profiles.load_q(b.id)
            for t in range(T):
                rep.record("balance_q", b.id, t, abs(inj_q[b.id][t] - out_q[b.id][t] - qd[t]) / sb)

    cost = sum(g.cost * float(np.sum(solution.gen_p[g.id])) for g in net.generators)
    cost += sum(float(np.dot(profiles.price, solution.pm[b])) for b in solution.pm)
    rep.record("objective", "total", 0, abs(cost - solution.objective) / max(1.0, abs(cost)))
    return rep


# ---------------------------------------------------------------------------
# exhaustive enumeration oracle


@dataclass
class OracleResult:
    objective: float
    x: np.ndarray
    pattern: dict[tuple[str, str], tuple[int, ...]]
    enumerated: int
    feasible: int
    solution: object = None


def _pattern_admissible(net: Network, T: int, pattern) -> bool:
    """Binary-only screening: storage exclusivity and literal min up/down times."""
    for s in net.storages:
        u, v = pattern.get(("u", s.id)), pattern.get(("v", s.id))
        if u is not None and v is not None and any(a + b > 1 for a, b in zip(u, v)):
            return False
    for g in net.dispatchable:
        I = pattern.get(("I", g.id))
        if I is None:
            continue
        tl = CommitmentTimeline.from_status(I, g.init_on_hours, g.init_off_hours)
        if tl.up_shortfalls(g.ut, g.init_on_hours) or tl.down_shortfalls(g.dt, g.init_off_hours):
            return False
    return True


def enumerate_oracle(net: Network, profiles, point=None, guard: int = 20, options: SolverOptions | None = None):
    """Minimum objective over all admissible assignments of the free I/u/v/d binaries.

    Startup/shutdown indicators follow from the commitment status and are
    pinned accordingly. Each assignment leaves an LP solved by the bundled
    dual simplex, warm-started from the previous assignment's basis.
    """
    from .scheduler import build_model, extract_solution

    model = build_model(to_per_unit(net), profiles, point)
    T = profiles.horizon
    free = []
    for j in model.binaries:
        k = model.keys[j]
        if k.family in ("I", "u", "v", "d") and model.lb[j] != model.ub[j]:
            free.append(j)
    if len(free) > guard:
        raise OracleGuardError(f"{len(free)} free binaries exceed the enumeration guard of {guard}")
    p = model.to_lp()
    engine = DualSimplex(p, options)
    fixed_lb, fixed_ub = p.lb.copy(), p.ub.copy()
    commit_cols = {}
    for j in model.binaries:
        k = model.keys[j]
        if k.family in ("I", "u", "v", "d"):
            commit_cols.setdefault((k.family, k.entity), [None] * T)[k.t] = j
    gens = {g.id: g for g in net.dispatchable}
    best = None
    enumerated = feasible = 0
    basis = None
    for bits in itertools.product((0.0, 1.0), repeat=len(free)):
        enumerated += 1
        lb, ub = fixed_lb.copy(), fixed_ub.copy()
        for j, v in zip(free, bits):
            lb[j] = ub[j] = v
        pattern = {key: tuple(int(lb[j]) for j in cols) for key, cols in commit_cols.items()}
        if not _pattern_admissible(net, T, pattern):
            continue
        for (fam, ent), status in pattern.items():
            if fam != "I":
                continue
            g = gens[ent]
            tl = CommitmentTimeline.from_status(status, g.init_on_hours, g.init_off_hours)
            for t in range(T):
                jy, jz = model.var("y", ent, t), model.var("z", ent, t)
                lb[jy] = ub[jy] = tl.startup[t]
                lb[jz] = ub[jz] = tl.shutdown[t]
        engine.set_bounds(lb, ub)
        out = engine.solve(basis)
        if out.status != OPTIMAL:
            continue
        basis = out.basis
        feasible += 1
        if best is None or out.objective < best.objective - 1e-12 * max(1.0, abs(out.objective)):
            best = OracleResult(out.objective, out.x.copy(), pattern, 0, 0)
    if best is None:
        raise OracleGuardError(f"all {enumerated} binary assignments are infeasible")
    best.enumerated, best.feasible = enumerated, feasible
    best.solution = extract_solution(model, best.x, best.objective)
    return best
