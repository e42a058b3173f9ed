"""Branch-and-bound over the dual simplex engine.

Nodes only tighten binary bounds, so every child can restart from its
parent's optimal basis. The search dives depth-first from the node just
solved and, once a dive ends, resumes from the open node with the lowest
bound.
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .lp import (
    INFEASIBLE, LIMIT, NONCONVERGED, NUMERICAL, OPTIMAL, UNBOUNDED,
    BasisState, DualSimplex, LpProblem, SolverError, SolverOptions, SolverOutcome,
)

logger = logging.getLogger(__name__)


@dataclass(order=True)
class BranchNode:
    bound: float
    seq: int
    fixes: dict = field(compare=False, default_factory=dict)
    depth: int = field(compare=False, default=0)
    basis: BasisState | None = field(compare=False, default=None)
    branched: tuple | None = field(compare=False, default=None)


class _PseudoCosts:
    def __init__(self, n):
        self.up = np.zeros(n)
        self.dn = np.zeros(n)
        self.nup = np.zeros(n)
        self.ndn = np.zeros(n)

    def record(self, j, up, gain, frac):
        dist = (1.0 - frac) if up else frac
        if dist <= 0:
            return
        if up:
            self.up[j] += gain / dist
            self.nup[j] += 1
        else:
            self.dn[j] += gain / dist
            self.ndn[j] += 1

    def score(self, idx, frac):
        avg_up = self.up.sum() / max(self.nup.sum(), 1) or 1.0
        avg_dn = self.dn.sum() / max(self.ndn.sum(), 1) or 1.0
        pu = np.where(self.nup[idx] > 0, self.up[idx] / np.maximum(self.nup[idx], 1), avg_up)
        pd = np.where(self.ndn[idx] > 0, self.dn[idx] / np.maximum(self.ndn[idx], 1), avg_dn)
        return np.maximum(pu * (1 - frac), 1e-6) * np.maximum(pd * frac, 1e-6)


def _select(x, binaries, priority, pc, tol):
    """Most fractional binary of the highest-priority class; pseudo-costs break near ties."""
    xb = x[binaries]
    frac = xb - np.floor(xb)
    dist = np.minimum(frac, 1.0 - frac)
    fractional = dist > tol
    if not fractional.any():
        return None
    pr = priority[fractional]
    top = pr.min()
    cls = np.flatnonzero(fractional)[pr == top]
    best = dist[cls].max()
    near = cls[dist[cls] >= best - 0.05]
    if near.size == 1:
        k = near[0]
    else:
        k = near[np.argmax(pc.score(binaries[near], frac[near]))]
    return int(binaries[k]), float(frac[k])


def solve_milp(
    p: LpProblem,
    binaries=None,
    options: SolverOptions | None = None,
    priority: dict[int, int] | None = None,
    start: np.ndarray | None = None,
) -> SolverOutcome:
    """Minimize ``p`` with the listed columns restricted to {0, 1}.

    ``priority`` maps column -> class (lower branches first). ``start`` is an
    optional full or binary-only assignment tried as the first incumbent.
    """
    opt = options or SolverOptions()
    t0 = time.monotonic()
    deadline = t0 + opt.time_limit
    if binaries is None:
        binaries = np.flatnonzero(p.integer)
    binaries = np.asarray(sorted(int(j) for j in binaries), dtype=int)
    lb0 = p.lb.copy()
    ub0 = p.ub.copy()
    if binaries.size:
        lb0[binaries] = np.maximum(lb0[binaries], 0.0)
        ub0[binaries] = np.minimum(ub0[binaries], 1.0)
    prio = np.array([(priority or {}).get(int(j), 0) for j in binaries], dtype=int)
    engine = DualSimplex(p, opt)
    pc = _PseudoCosts(p.n)

    inc_x = None
    inc_obj = math.inf
    nodes = 0
    iters = 0

    def bounds_for(fixes):
        lb, ub = lb0.copy(), ub0.copy()
        for j, v in fixes.items():
            lb[j] = ub[j] = v
        return lb, ub

    def cutoff():
        if inc_x is None:
            return math.inf
        return inc_obj - opt.mip_gap * max(1.0, abs(inc_obj))

    def gap_closed(bound):
        return inc_x is not None and bound >= cutoff()

    def try_incumbent(x, obj):
        nonlocal inc_x, inc_obj
        if obj < inc_obj - 1e-12 * max(1.0, abs(obj)):
            xr = x.copy()
            xr[binaries] = np.round(xr[binaries])
            inc_x, inc_obj = xr, obj
            logger.debug("incumbent %.10g at node %d", obj, nodes)

    def fixed_solve(values, basis):
        """LP with all binaries pinned; returns outcome."""
        fixes = {int(j): float(v) for j, v in zip(binaries, values)}
        lb, ub = bounds_for(fixes)
        engine.set_bounds(lb, ub)
        return engine.solve(basis, deadline=deadline)

    # root relaxation
    engine.set_bounds(lb0, ub0)
    root = engine.solve(deadline=deadline)
    nodes = 1
    if root.status != OPTIMAL:
        status = root.status if root.status in (INFEASIBLE, UNBOUNDED) else LIMIT
        return SolverOutcome(status, nodes=nodes, iterations=engine.iterations)
    root_basis = root.basis
    root_bound = root.objective

    def integral(x):
        xb = x[binaries]
        return bool(np.all(np.abs(xb - np.round(xb)) <= opt.int_tol))

    moved = False
    if start is not None and binaries.size:
        start = np.asarray(start, dtype=float)
        vals = start[binaries] if start.size == p.n else start
        res = fixed_solve(np.round(vals), root_basis)
        moved = True
        if res.status == OPTIMAL:
            try_incumbent(res.x, res.objective)

    # rounding heuristic at the root
    if binaries.size and inc_x is None and not integral(root.x):
        res = fixed_solve(np.round(root.x[binaries]), root_basis)
        moved = True
        if res.status == OPTIMAL:
            try_incumbent(res.x, res.objective)
    if moved:
        engine.set_bounds(lb0, ub0)
        engine.load(root_basis)

    heap: list[BranchNode] = []
    seq = 0
    current = BranchNode(root_bound, seq, {}, 0, None)
    current_out = root
    status = OPTIMAL
    best_bound = root_bound

    while True:
        if current is None:
            # prune and pick the open node with the lowest bound
            while heap and heap[0].bound >= cutoff():
                heapq.heappop(heap)
            if not heap:
                break
            best_bound = heap[0].bound
            if gap_closed(best_bound):
                break
            current = heapq.heappop(heap)
            if nodes >= opt.node_limit or time.monotonic() > deadline:
                heapq.heappush(heap, current)
                status = LIMIT
                break
            lb, ub = bounds_for(current.fixes)
            engine.set_bounds(lb, ub)
            current_out = engine.solve(current.basis, deadline=deadline)
            nodes += 1
        out = current_out
        if out.status == NUMERICAL:
            raise SolverError(f"numerical trouble in node LP at depth {current.depth}")
        if out.status == LIMIT:
            status = LIMIT
            break
        if out.status != OPTIMAL:
            current = None
            continue
        if current.branched is not None:
            j, up, frac = current.branched
            pc.record(j, up, max(out.objective - current.bound, 0.0), frac)
        if out.objective >= cutoff():
            current = None
            continue
        pick = _select(out.x, binaries, prio, pc, opt.int_tol)
        if pick is None:
            x = out.x
            if binaries.size and np.max(np.abs(x[binaries] - np.round(x[binaries]))) > 1e-9:
                # polish: pin the near-integral binaries exactly
                res = fixed_solve(np.round(x[binaries]), engine.snapshot())
                if res.status == OPTIMAL:
                    try_incumbent(res.x, res.objective)
            else:
                try_incumbent(x, out.objective)
            current = None
            continue
        j, frac = pick
        basis = engine.snapshot()
        up_first = frac >= 0.5
        children = []
        for val in (1.0, 0.0) if up_first else (0.0, 1.0):
            seq += 1
            fx = dict(current.fixes)
            fx[j] = val
            children.append(BranchNode(out.objective, seq, fx, current.depth + 1, basis, (j, val == 1.0, frac)))
        heapq.heappush(heap, children[1])
        if nodes >= opt.node_limit or time.monotonic() > deadline:
            heapq.heappush(heap, children[0])
            status = LIMIT
            break
        current = children[0]
        lb, ub = bounds_for(current.fixes)
        engine.set_bounds(lb, ub)
        current_out = engine.solve(deadline=deadline)
        nodes += 1

    iters = engine.iterations
    open_bound = min([n.bound for n in heap], default=math.inf)
    if inc_x is None:
        if status == LIMIT:
            return SolverOutcome(LIMIT, nodes=nodes, iterations=iters, bound=open_bound)
        return SolverOutcome(INFEASIBLE, nodes=nodes, iterations=iters)
    bound = min(open_bound, inc_obj)
    if status == OPTIMAL and not gap_closed(bound):
        bound = min(bound, inc_obj)
    final = OPTIMAL if status == OPTIMAL else NONCONVERGED
    logger.info("B&B %s: objective %.10g bound %.10g nodes %d iters %d (%.1fs)",
                final, inc_obj, bound, nodes, iters, time.monotonic() - t0)
    return SolverOutcome(final, x=inc_x, objective=inc_obj, bound=bound, nodes=nodes, iterations=iters)
