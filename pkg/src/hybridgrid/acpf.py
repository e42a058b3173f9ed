"""Exact power flow (Newton-Raphson) used to measure the linearization error.

AC components use the full polar equations, DC components the resistive
quadratic ``P_mn = g V_m (V_m - V_n)``. Each component is solved on its own
with the voltage reference bus as slack (V = 1, theta = 0).
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .network import AC, NormalizedNetwork, line_components, reference_buses

logger = logging.getLogger(__name__)


class PowerFlowDivergence(RuntimeError):
    pass


def exact_line_flow(g: float, b: float, vm: float, vn: float, tm: float = 0.0, tn: float = 0.0):
    """(P, Q) leaving bus m towards n through series admittance g + jb."""
    d = tm - tn
    c, s = math.cos(d), math.sin(d)
    p = g * vm * vm - vm * vn * (g * c + b * s)
    q = -b * vm * vm + vm * vn * (b * c - g * s)
    return p, q


@dataclass
class PowerFlowCase:
    """One galvanically connected component with fixed injections (per-unit)."""

    kind: str
    buses: list[str]
    slack: str
    lines: list[tuple[str, str, float, float]]  # (from, to, g, b)
    p_inj: dict[str, float] = field(default_factory=dict)
    q_inj: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.slack not in self.buses:
            raise ValueError(f"slack {self.slack!r} not in component")


@dataclass
class NRState:
    v: dict[str, float]
    theta: dict[str, float]
    mismatch: float
    iterations: int
    history: list[float] = field(default_factory=list)


def _ybus(case: PowerFlowCase):
    idx = {b: k for k, b in enumerate(case.buses)}
    n = len(idx)
    Y = np.zeros((n, n), dtype=complex)
    for a, bb, g, b in case.lines:
        i, j = idx[a], idx[bb]
        y = complex(g, b)
        Y[i, i] += y
        Y[j, j] += y
        Y[i, j] -= y
        Y[j, i] -= y
    return idx, Y


def solve_ac_subsystem(case: PowerFlowCase, tol: float = 1e-8, max_iter: int = 50) -> NRState:
    """Polar Newton-Raphson from a flat start; every non-slack bus is PQ."""
    idx, Y = _ybus(case)
    n = len(idx)
    s0 = idx[case.slack]
    pq = np.array([k for k in range(n) if k != s0], dtype=int)
    spec = np.array([complex(case.p_inj.get(b, 0.0), case.q_inj.get(b, 0.0)) for b in case.buses])
    V = np.ones(n, dtype=complex)
    hist = []
    it = 0
    while True:
        S = V * np.conj(Y @ V)
        mis = S - spec
        f = np.concatenate([mis.real[pq], mis.imag[pq]])
        norm = float(np.max(np.abs(f))) if f.size else 0.0
        hist.append(norm)
        if norm < tol:
            break
        if it >= max_iter:
            raise PowerFlowDivergence(f"AC power flow did not converge in {max_iter} iterations (mismatch {norm:.3e})")
        # derivatives of S w.r.t. angle and magnitude
        Ibus = Y @ V
        dV = np.diag(V)
        dS_da = 1j * dV @ np.conj(np.diag(Ibus) - Y @ dV)
        Vn = V / np.abs(V)
        dS_dm = dV @ np.conj(Y @ np.diag(Vn)) + np.conj(np.diag(Ibus)) @ np.diag(Vn)
        J = np.block([
            [dS_da.real[np.ix_(pq, pq)], dS_dm.real[np.ix_(pq, pq)]],
            [dS_da.imag[np.ix_(pq, pq)], dS_dm.imag[np.ix_(pq, pq)]],
        ])
        try:
            dx = np.linalg.solve(J, -f)
        except np.linalg.LinAlgError:
            raise PowerFlowDivergence("singular Jacobian in AC power flow") from None
        k = pq.size
        ang = np.angle(V)
        mag = np.abs(V)
        ang[pq] += dx[:k]
        mag[pq] += dx[k:]
        if np.any(mag <= 0):
            raise PowerFlowDivergence("nonpositive voltage magnitude in AC power flow")
        V = mag * np.exp(1j * ang)
        it += 1
    return NRState({b: float(abs(V[k])) for b, k in idx.items()},
                   {b: float(np.angle(V[k])) for b, k in idx.items()}, norm, it, hist)


def solve_dc_subsystem(case: PowerFlowCase, tol: float = 1e-8, max_iter: int = 50) -> NRState:
    """Newton on magnitudes only: P_i = V_i * sum_k G_ik V_k."""
    idx, Y = _ybus(case)
    G = Y.real
    n = len(idx)
    s0 = idx[case.slack]
    free = np.array([k for k in range(n) if k != s0], dtype=int)
    p = np.array([case.p_inj.get(b, 0.0) for b in case.buses])
    V = np.ones(n)
    hist = []
    it = 0
    while True:
        GV = G @ V
        f = (V * GV - p)[free]
        norm = float(np.max(np.abs(f))) if f.size else 0.0
        hist.append(norm)
        if norm < tol:
            break
        if it >= max_iter:
            raise PowerFlowDivergence(f"DC power flow did not converge in {max_iter} iterations (mismatch {norm:.3e})")
        J = (np.diag(GV) + np.diag(V) @ G)[np.ix_(free, free)]
        try:
            dx = np.linalg.solve(J, -f)
        except np.linalg.LinAlgError:
            raise PowerFlowDivergence("singular Jacobian in DC power flow") from None
        V[free] += dx
        if np.any(V <= 0):
            raise PowerFlowDivergence("nonpositive voltage in DC power flow")
        it += 1
    return NRState({b: float(V[k]) for b, k in idx.items()}, {b: 0.0 for b in idx}, norm, it, hist)


def solve_case(case: PowerFlowCase, **kw) -> NRState:
    return solve_ac_subsystem(case, **kw) if case.kind == AC else solve_dc_subsystem(case, **kw)


def mismatch(case: PowerFlowCase, state: NRState) -> float:
    """Largest nodal power mismatch (non-slack buses) recomputed line by line."""
    p = {b: 0.0 for b in case.buses}
    q = {b: 0.0 for b in case.buses}
    for a, bb, g, b in case.lines:
        for m, n in ((a, bb), (bb, a)):
            pf, qf = exact_line_flow(g, b, state.v[m], state.v[n], state.theta[m], state.theta[n])
            p[m] += pf
            q[m] += qf
    worst = 0.0
    for bus in case.buses:
        if bus == case.slack:
            continue
        worst = max(worst, abs(p[bus] - case.p_inj.get(bus, 0.0)))
        if case.kind == AC:
            worst = max(worst, abs(q[bus] - case.q_inj.get(bus, 0.0)))
    return worst


# ---------------------------------------------------------------------------
# comparison against a schedule


def hourly_cases(norm: NormalizedNetwork, profiles, solution, t: int) -> list[PowerFlowCase]:
    """Per-component oracle inputs with injections taken from ``solution`` at hour ``t``."""
    net = norm.net
    sb = norm.base.s_base
    ref = reference_buses(net)
    p = {b: -profiles.load_p(b)[t] / sb for b in net.bus_ids}
    q = {b: -profiles.load_q(b)[t] / sb for b in net.ac_buses}
    for g in net.generators:
        p[g.bus] += solution.gen_p[g.id][t] / sb
        if g.bus in q and g.id in solution.gen_q:
            q[g.bus] += solution.gen_q[g.id][t] / sb
    for s in net.storages:
        p[s.bus] += solution.pb[s.id][t] / sb
    for c in net.converters:
        if c.id not in solution.conv_rect:
            continue
        r, i = solution.conv_rect[c.id][t] / sb, solution.conv_inv[c.id][t] / sb
        p[c.ac_bus] += -r + c.eta_inv * i
        p[c.dc_bus] += c.eta_rect * r - i
        q[c.ac_bus] += solution.conv_q[c.id][t] / sb
    out = []
    for comp in line_components(net):
        kind = net.bus(comp[0]).kind
        members = set(comp)
        lines = [(ln.from_bus, ln.to_bus, norm.g[ln.id], norm.b[ln.id]) for ln in net.active_lines
                 if ln.from_bus in members]
        out.append(PowerFlowCase(kind, list(comp), ref[comp[0]], lines,
                                 {b: p[b] for b in comp}, {b: q.get(b, 0.0) for b in comp} if kind == AC else {}))
    return out


@dataclass
class ErrorRow:
    kind: str  # "bus" or "line"
    entity: str
    hour: int
    linear: float
    exact: float

    @property
    def error(self) -> float:
        return abs(self.linear - self.exact)


@dataclass
class LinearizationErrorReport:
    rows: list[ErrorRow]
    max_v_error: float
    max_flow_error: float  # per-unit
    max_flow_error_frac: float  # fraction of the line's active capacity
    loss_linear_kw: float
    loss_exact_kw: float
    max_iterations: int

    @property
    def loss_error_kw(self) -> float:
        return abs(self.loss_linear_kw - self.loss_exact_kw)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["kind", "entity", "hour", "linear", "exact", "error"])
        for r in self.rows:
            wr.writerow([r.kind, r.entity, r.hour, repr(r.linear), repr(r.exact), repr(r.error)])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "max_v_error_pu": self.max_v_error,
            "max_flow_error_pu": self.max_flow_error,
            "max_flow_error_frac": self.max_flow_error_frac,
            "loss_linear_kw": self.loss_linear_kw,
            "loss_exact_kw": self.loss_exact_kw,
        }


def linearization_error(solution, norm: NormalizedNetwork, profiles, hours=None) -> LinearizationErrorReport:
    """Fix each hour's injections, solve exactly, and compare voltages, flows and losses."""
    net = norm.net
    sb = norm.base.s_base
    hours = range(solution.horizon) if hours is None else hours
    rows: list[ErrorRow] = []
    max_v = max_f = max_frac = 0.0
    loss_lin = loss_ex = 0.0
    max_it = 0
    lines = {ln.id: ln for ln in net.active_lines}
    for t in hours:
        v, th = {}, {}
        for case in hourly_cases(norm, profiles, solution, t):
            st = solve_case(case)
            max_it = max(max_it, st.iterations)
            v.update(st.v)
            th.update(st.theta)
        for b in net.bus_ids:
            lin = 1.0 + float(solution.dv[b][t])
            rows.append(ErrorRow("bus", b, t, lin, v[b]))
            max_v = max(max_v, rows[-1].error)
        for lid, ln in lines.items():
            g, bb = norm.g[lid], norm.b[lid]
            for m, n in ((ln.from_bus, ln.to_bus), (ln.to_bus, ln.from_bus)):
                ex, _ = exact_line_flow(g, bb, v[m], v[n], th[m], th[n])
                lin = float(solution.flow(lid, m, n)[t]) / sb
                rows.append(ErrorRow("line", f"{lid}:{m}->{n}", t, lin, ex))
                max_f = max(max_f, rows[-1].error)
                max_frac = max(max_frac, rows[-1].error / ln.pl_max)  # norm.net is per-unit
                loss_lin += lin * sb
                loss_ex += ex * sb
    return LinearizationErrorReport(rows, max_v, max_f, max_frac, loss_lin, loss_ex, max_it)
