"""Linearized AC/DC branch flows and the successive re-linearization loop.

Voltages are written ``V = 1 + dV`` and AC angles ``theta = 0 + dtheta``.
With ``sin(x) ~ x`` and ``cos(x) ~ 1`` the active flow leaving bus ``m``
towards ``n`` becomes::

    PL = g (dVm - dVn) - b (dthm - dthn) (1 - w) + g dVm (dVm - dVn)

The last product is bilinear. It is linearized by freezing the standalone
``dVm`` factor at a known estimate ``dVm_hat`` and re-solving until the
estimate agrees with the solution.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

logger = logging.getLogger(__name__)


class LinearizationError(KeyError):
    pass


@dataclass(frozen=True)
class FlowExpr:
    """Affine form ``c_vm dVm + c_vn dVn + c_tm dthm + c_tn dthn + const``."""

    c_vm: float = 0.0
    c_vn: float = 0.0
    c_tm: float = 0.0
    c_tn: float = 0.0
    const: float = 0.0

    def __call__(self, dv_m, dv_n, th_m=0.0, th_n=0.0):
        return self.c_vm * dv_m + self.c_vn * dv_n + self.c_tm * th_m + self.c_tn * th_n + self.const

    @property
    def is_zero(self) -> bool:
        return not any((self.c_vm, self.c_vn, self.c_tm, self.c_tn, self.const))


def active_flow_expr(g: float, b: float, w: int, vhat_m: float) -> FlowExpr:
    """Active power leaving bus m towards n, per-unit."""
    kv = g * (1.0 + vhat_m)
    kt = -b * (1 - w)
    return FlowExpr(kv, -kv, kt, -kt)


def reactive_flow_expr(g: float, b: float, w: int, vhat_m: float) -> FlowExpr:
    """Reactive power leaving bus m towards n; identically zero on DC lines."""
    if w:
        return FlowExpr()
    kv = -b * (1.0 + vhat_m)
    return FlowExpr(kv, -kv, -g, g)


def pair_loss(g: float, dv_m, dv_n):
    """Loss of a line when the linearization point matches the solution."""
    d = np.subtract(dv_m, dv_n)
    return g * d * d


@dataclass
class LinearizationPoint:
    """Per-bus, per-hour voltage-deviation estimates used in the loss term."""

    dv: dict[str, np.ndarray]

    @classmethod
    def flat(cls, bus_ids: Iterable[str], horizon: int) -> "LinearizationPoint":
        return cls({b: np.zeros(horizon) for b in bus_ids})

    def at(self, bus: str, t: int) -> float:
        try:
            return float(self.dv[bus][t])
        except (KeyError, IndexError):
            raise LinearizationError(f"no linearization point for bus {bus!r} hour {t}") from None

    def clipped(self, bounds: dict[str, float]) -> "LinearizationPoint":
        """Clip each bus to its admissible deviation magnitude."""
        return LinearizationPoint({b: np.clip(v, -bounds[b], bounds[b]) for b, v in self.dv.items()})

    def max_change(self, other: "LinearizationPoint") -> float:
        if not self.dv:
            return 0.0
        return max(float(np.max(np.abs(self.dv[b] - other.dv[b]))) for b in self.dv)


def line_flow_exprs(g: float, b: float, w: int, vhat_m: float, vhat_n: float):
    """(PL_mn, PL_nm, QL_mn, QL_nm) expressions, each in its own bus orientation."""
    return (
        active_flow_expr(g, b, w, vhat_m),
        active_flow_expr(g, b, w, vhat_n),
        reactive_flow_expr(g, b, w, vhat_m),
        reactive_flow_expr(g, b, w, vhat_n),
    )


# ---------------------------------------------------------------------------
# successive linearization


@dataclass
class IterationTrace:
    objective: list[float] = field(default_factory=list)
    max_dv_change: list[float] = field(default_factory=list)
    pattern_hash: list[str] = field(default_factory=list)
    binaries_fixed: list[bool] = field(default_factory=list)
    radius: list = field(default_factory=list)
    converged: bool = False

    def __len__(self) -> int:
        return len(self.objective)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["iteration", "objective", "max_dv_change", "pattern_hash", "binaries_fixed"])
        for k in range(len(self)):
            wr.writerow([k, repr(self.objective[k]), repr(self.max_dv_change[k]),
                         self.pattern_hash[k], int(self.binaries_fixed[k])])
        return buf.getvalue()


def pattern_digest(pattern: tuple) -> str:
    return hashlib.sha1(repr(pattern).encode()).hexdigest()[:12]


class NonConvergence(RuntimeError):
    def __init__(self, msg, solution=None, trace=None):
        super().__init__(msg)
        self.solution = solution
        self.trace = trace


def _release(build_and_solve, bus_ids, point, sol, tol, trace):
    free = build_and_solve(point, None, None)  # a relaxation of the last solve, so feasible
    new = LinearizationPoint({b: np.asarray(free.dv[b], dtype=float) for b in bus_ids})
    change = new.max_change(point)
    if change >= tol:
        logger.info("release solve moved voltages by %.3e; keeping constrained iterate", change)
        return sol
    trace.objective.append(float(free.objective))
    trace.max_dv_change.append(change)
    trace.pattern_hash.append(pattern_digest(free.binary_pattern()))
    trace.binaries_fixed.append(False)
    trace.radius.append(None)
    return free


def successive_linearization(
    build_and_solve: Callable,
    bus_ids: Iterable[str],
    horizon: int,
    tol: float = 1e-4,
    max_iter: int = 20,
    point_sensitive: bool = True,
    trust_region: bool = True,
):
    """Re-linearize the loss term until voltage deviations settle.

    ``build_and_solve(point, fixed_pattern, radius)`` must return a solution
    object exposing ``dv`` (bus -> hourly per-unit deviations), ``objective``
    and ``binary_pattern()``. ``fixed_pattern`` is ``None`` or a pattern
    returned earlier, in which case the binaries are to be pinned to it.
    ``radius`` is ``None`` or a bound on ``|dV - point|`` per bus and hour.

    Iteration 0 starts from the flat point. If a binary pattern reappears
    after a different one was seen in between, all binaries are pinned to
    the pattern of the cheapest iterate so far and only continuous
    re-solves follow.

    With the estimate frozen, the loss term is linear in dV and can reward
    swinging the voltage profile to the other side of the estimate, which
    shows up as a 2-cycle. When the change fails to halve, binaries are
    pinned and each further solve is boxed to ``radius`` around the previous
    voltages, with ``radius`` at most half the last change. That makes the
    changes contract geometrically.

    A box or pin can hold the final iterate off the unconstrained optimum at
    its own point, so after settling one more solve at the settled voltages
    runs with both released. It replaces the constrained iterate only if it
    also moves the voltages by less than ``tol``.

    Returns ``(solution, trace)``. ``trace.converged`` is False when
    ``max_iter`` solves did not settle; the returned solution is then the
    most self-consistent iterate.
    """
    if tol <= 0 or max_iter < 1:
        raise ValueError("tol must be positive and max_iter at least 1")
    bus_ids = list(bus_ids)
    point = LinearizationPoint.flat(bus_ids, horizon)
    trace = IterationTrace()
    seen: dict[tuple, float] = {}
    last_pattern = None
    fixed = None
    radius = None
    prev_change = None
    best = None  # (change, solution)
    for k in range(max_iter):
        sol = build_and_solve(point, fixed, radius)
        new = LinearizationPoint({b: np.asarray(sol.dv[b], dtype=float) for b in bus_ids})
        change = new.max_change(point) if point_sensitive else 0.0
        pattern = sol.binary_pattern()
        trace.objective.append(float(sol.objective))
        trace.max_dv_change.append(change)
        trace.pattern_hash.append(pattern_digest(pattern))
        trace.binaries_fixed.append(fixed is not None)
        trace.radius.append(radius)
        logger.info("linearization iter %d: objective %.6f, max dV change %.3e", k, sol.objective, change)
        if best is None or change < best[0]:
            best = (change, sol)
        if change < tol:
            trace.converged = True
            if (radius is not None or fixed is not None) and k + 1 < max_iter:
                sol = _release(build_and_solve, bus_ids, new, sol, tol, trace)
            return sol, trace
        if fixed is None:
            if pattern in seen and pattern != last_pattern:
                fixed = min(seen, key=seen.get)
                logger.info("binary pattern cycle detected at iter %d; pinning binaries", k)
            seen[pattern] = min(seen.get(pattern, np.inf), float(sol.objective))
            last_pattern = pattern
        if trust_region:
            if radius is not None:
                radius = min(radius, change) / 2
            elif k >= 1 and change > 0.5 * prev_change:
                radius = change / 2
                if fixed is None:
                    fixed = pattern
                logger.info("voltage iterates stalled at iter %d; trust radius %.3e", k, radius)
        prev_change = change
        point = new
    return best[1], trace
