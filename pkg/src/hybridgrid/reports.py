"""CSV / JSON report emission and read-back.

Floats are written with ``repr`` so every value re-parses bit-exactly. The
tables carry enough to rebuild a :class:`~hybridgrid.scheduler.Solution`,
which lets a schedule be re-certified from disk.
"""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from pathlib import Path

import numpy as np

from .linflow import LinearizationPoint
from .scheduler import Solution


def _f(v) -> str:
    return repr(float(v))


def _write(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        wr.writerows(rows)


def emit_reports(report, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(json.dumps(_clean(report.summary()), indent=1))
    (out / "trace.csv").write_text(report.trace.to_csv())
    if report.verdict is not None:
        (out / "verification.json").write_text(report.verdict.to_json())
    if report.oracle_report is not None:
        (out / "linearization_error.csv").write_text(report.oracle_report.to_csv())
    sol = report.solution
    if sol is None:
        return out
    T = sol.horizon
    net, prof = report.net, report.profiles
    _write(out / "schedule.csv", ["unit", "hour", "p_kw", "q_kvar", "on", "startup", "shutdown"], [
        (g, t, _f(sol.gen_p[g][t]), _f(sol.gen_q.get(g, np.zeros(T))[t]),
         int(sol.commit[g][t]) if g in sol.commit else "",
         int(sol.startup[g][t]) if g in sol.startup else "",
         int(sol.shutdown[g][t]) if g in sol.shutdown else "")
        for g in sol.gen_p for t in range(T)])
    _write(out / "des.csv", ["unit", "hour", "state", "energy_kwh", "power_kw", "charge_kw", "discharge_kw",
                             "charging", "discharging"], [
        (s, t, int(sol.des_state(s)[t]), _f(sol.energy[s][t]), _f(sol.pb[s][t]), _f(sol.ch[s][t]),
         _f(sol.dch[s][t]), int(sol.u[s][t]), int(sol.v[s][t]))
        for s in sol.pb for t in range(T)])
    rows = []
    for ln in net.active_lines:
        fwd, rev = f"{ln.id}.{ln.from_bus}.{ln.to_bus}", f"{ln.id}.{ln.to_bus}.{ln.from_bus}"
        for t in range(T):
            a, b = sol.pl[fwd][t], sol.pl[rev][t]
            qa = sol.ql[fwd][t] if fwd in sol.ql else 0.0
            qb = sol.ql[rev][t] if rev in sol.ql else 0.0
            rows.append((ln.id, ln.from_bus, ln.to_bus, t, _f(a), _f(b), _f(qa), _f(qb), _f(a + b)))
    _write(out / "flows.csv", ["line", "from_bus", "to_bus", "hour", "pl_fwd_kw", "pl_rev_kw", "ql_fwd_kvar",
                               "ql_rev_kvar", "loss_kw"], rows)
    _write(out / "exchange.csv", ["bus", "hour", "price", "pm_kw", "qm_kvar"], [
        (b, t, _f(prof.price[t]), _f(sol.pm[b][t]), _f(sol.qm[b][t]) if b in sol.qm else "")
        for b in sol.pm for t in range(T)])
    _write(out / "buses.csv", ["bus", "hour", "dv_pu", "theta_rad", "dv_point_pu"], [
        (b, t, _f(sol.dv[b][t]), _f(sol.dth[b][t]) if b in sol.dth else "",
         _f(sol.point.dv[b][t]) if sol.point is not None else "")
        for b in sol.dv for t in range(T)])
    _write(out / "converters.csv", ["converter", "hour", "rect_kw", "inv_kw", "direction", "qc_kvar", "loss_kw"], [
        (c, t, _f(sol.conv_rect[c][t]), _f(sol.conv_inv[c][t]), int(sol.conv_dir[c][t]), _f(sol.conv_q[c][t]),
         _f((1 - sol.eta[c][0]) * sol.conv_rect[c][t] + (1 - sol.eta[c][1]) * sol.conv_inv[c][t]))
        for c in sol.conv_rect for t in range(T)])
    _write(out / "plotdata.csv", ["hour", "price"] + [f"cost_{g}" for g in sol.gen_p] + ["cost_grid", "cost_total"],
           _cost_stack(net, prof, sol))
    return out


def _cost_stack(net, prof, sol):
    rows = []
    cost = {g.id: g.cost for g in net.generators}
    for t in range(sol.horizon):
        parts = [cost[g] * sol.gen_p[g][t] for g in sol.gen_p]
        grid = prof.price[t] * sum(sol.pm[b][t] for b in sol.pm)
        rows.append([t, _f(prof.price[t])] + [_f(v) for v in parts] + [_f(grid), _f(sum(parts) + grid)])
    return rows


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def emit_comparison(reports, path) -> Path:
    """Side-by-side cost and loss table with deltas against the first report."""
    path = Path(path)
    metrics = [
        ("objective_usd", lambda r: r.objective),
        ("losses_kw", lambda r: r.losses_kw),
        ("line_losses_kw", lambda r: r.line_losses_kw),
        ("converter_losses_kw", lambda r: r.converter_losses_kw),
        ("grid_import_kwh", lambda r: _grid(r, 1)),
        ("grid_export_kwh", lambda r: _grid(r, -1)),
    ]
    header = ["metric"] + [r.label for r in reports] + [f"delta_{r.label}" for r in reports[1:]]
    rows = []
    for name, fn in metrics:
        vals = [fn(r) for r in reports]
        rows.append([name] + [_f(v) for v in vals] + [_f(v - vals[0]) for v in vals[1:]])
    rows.append(["status"] + [r.status for r in reports] + [""] * (len(reports) - 1))
    path.parent.mkdir(parents=True, exist_ok=True)
    _write(path, header, rows)
    return path


def _grid(r, sign):
    if r.solution is None:
        return math.nan
    total = sum(np.asarray(v) for v in r.solution.pm.values())
    return float(np.sum(np.clip(sign * total, 0, None)))


# ---------------------------------------------------------------------------
# read-back


def _rows(path: Path):
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def read_table(path) -> list[dict]:
    return _rows(Path(path))


def solution_from_reports(out_dir, s_base: float = 1000.0) -> Solution:
    """Rebuild the schedule from emitted tables."""
    out = Path(out_dir)
    summary = json.loads((out / "summary.json").read_text())
    buses = _rows(out / "buses.csv")
    T = 1 + max(int(r["hour"]) for r in buses)

    def series(rows, key, col, cast=float):
        acc = defaultdict(lambda: np.zeros(T))
        for r in rows:
            if r[col] != "":
                acc[r[key]][int(r["hour"])] = cast(r[col])
        return dict(acc)

    sched = _rows(out / "schedule.csv")
    des = _rows(out / "des.csv")
    conv = _rows(out / "converters.csv")
    exch = _rows(out / "exchange.csv")
    sol = Solution(status=summary["status"], objective=summary["objective_usd"], horizon=T, s_base=s_base)
    sol.gen_p = series(sched, "unit", "p_kw")
    sol.gen_q = series(sched, "unit", "q_kvar")
    sol.commit = series(sched, "unit", "on")
    sol.startup = series(sched, "unit", "startup")
    sol.shutdown = series(sched, "unit", "shutdown")
    sol.energy = series(des, "unit", "energy_kwh")
    sol.pb = series(des, "unit", "power_kw")
    sol.ch = series(des, "unit", "charge_kw")
    sol.dch = series(des, "unit", "discharge_kw")
    sol.u = series(des, "unit", "charging")
    sol.v = series(des, "unit", "discharging")
    sol.conv_rect = series(conv, "converter", "rect_kw")
    sol.conv_inv = series(conv, "converter", "inv_kw")
    sol.conv_dir = series(conv, "converter", "direction")
    sol.conv_q = series(conv, "converter", "qc_kvar")
    sol.pm = series(exch, "bus", "pm_kw")
    sol.qm = series(exch, "bus", "qm_kvar")
    sol.dv = series(buses, "bus", "dv_pu")
    sol.dth = series(buses, "bus", "theta_rad")
    sol.point = LinearizationPoint(series(buses, "bus", "dv_point_pu"))
    for r in _rows(out / "flows.csv"):
        t = int(r["hour"])
        a, b, lid = r["from_bus"], r["to_bus"], r["line"]
        for ent, pcol, qcol in ((f"{lid}.{a}.{b}", "pl_fwd_kw", "ql_fwd_kvar"), (f"{lid}.{b}.{a}", "pl_rev_kw", "ql_rev_kvar")):
            sol.pl.setdefault(ent, np.zeros(T))[t] = float(r[pcol])
            sol.ql.setdefault(ent, np.zeros(T))[t] = float(r[qcol])
    return sol
