"""Interchangeable MILP engines sharing one ``solve(model, options)`` contract."""

from __future__ import annotations

import logging
import math
import time

import numpy as np

from .bnb import solve_milp
from .lp import INFEASIBLE, LIMIT, NONCONVERGED, NUMERICAL, OPTIMAL, UNBOUNDED, SolverError, SolverOptions, SolverOutcome

logger = logging.getLogger(__name__)


class BackendUnavailable(SolverError):
    pass


class BundledBackend:
    name = "bundled"

    def solve(self, model, options: SolverOptions | None = None, start=None) -> SolverOutcome:
        p = model.to_lp()
        return solve_milp(p, model.binaries, options, priority=model.priority, start=start)


class HighsBackend:
    """scipy's HiGHS interface; used as a cross-check and for tighter gaps."""

    name = "highs"

    def __init__(self):
        try:
            from scipy.optimize import milp  # noqa: F401
        except ImportError as exc:  # pragma: no cover - scipy is a hard dependency
            raise BackendUnavailable("scipy.optimize.milp not available") from exc

    def solve(self, model, options: SolverOptions | None = None, start=None) -> SolverOutcome:
        from scipy.optimize import Bounds, LinearConstraint, milp

        opt = options or SolverOptions()
        p = model.to_lp()
        lo, hi = p.row_bounds()
        hopts = {"mip_rel_gap": opt.mip_gap, "disp": False}
        if math.isfinite(opt.time_limit):
            hopts["time_limit"] = opt.time_limit
        if opt.node_limit < 1_000_000:
            hopts["node_limit"] = opt.node_limit
        t0 = time.monotonic()
        cons = [LinearConstraint(p.A, lo, hi)] if p.m else []
        res = milp(p.c, constraints=cons, integrality=p.integer.astype(int),
                   bounds=Bounds(p.lb, p.ub), options=hopts)
        logger.info("HiGHS status %s in %.1fs", res.status, time.monotonic() - t0)
        if res.status == 2:
            return SolverOutcome(INFEASIBLE)
        if res.status == 3:
            return SolverOutcome(UNBOUNDED)
        if res.x is None:
            return SolverOutcome(LIMIT if res.status == 1 else NUMERICAL)
        x = np.asarray(res.x, dtype=float)
        obj = p.objective(x)
        bound = getattr(res, "mip_dual_bound", None)
        bound = obj if bound is None or not np.isfinite(bound) else float(bound) + p.obj_offset
        status = OPTIMAL if res.status == 0 else NONCONVERGED
        return SolverOutcome(status, x=x, objective=obj, bound=bound, nodes=int(getattr(res, "mip_node_count", 0) or 0))


BACKENDS = {"bundled": BundledBackend, "highs": HighsBackend}


def get_backend(name: str = "bundled"):
    try:
        return BACKENDS[name]()
    except KeyError:
        raise BackendUnavailable(f"unknown backend {name!r}; choose from {sorted(BACKENDS)}") from None
