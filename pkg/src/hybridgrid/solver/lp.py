"""Bounded dual revised simplex.

The problem ``min c'x  s.t.  rhs-sense rows, lb <= x <= ub`` is rewritten
with one logical per row, ``A x - r = 0``, so every row becomes an equality
and every variable (structural or logical) carries a box. Infinite bounds
are replaced by large artificial ones; finishing on an artificial bound
means the LP is unbounded.

Starting from the all-logical basis with each structural parked at the
bound its cost sign prefers, the basis is dual feasible, so a single dual
simplex phase suffices. The same property makes branch-and-bound warm
starts cheap: tightening a bound never breaks dual feasibility.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NONCONVERGED = "feasible-nonconverged"
LIMIT = "limit"
NUMERICAL = "numerical"

_BIG = 1e7


class SolverError(RuntimeError):
    pass


@dataclass
class LpProblem:
    A: sp.csc_matrix
    rhs: np.ndarray
    sense: np.ndarray
    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray | None = None
    obj_offset: float = 0.0
    col_names: list[str] | None = None
    row_names: list[str] | None = None

    def __post_init__(self):
        self.A = sp.csc_matrix(self.A, dtype=float)
        m, n = self.A.shape
        self.rhs = np.asarray(self.rhs, dtype=float).reshape(m)
        self.sense = np.asarray(self.sense, dtype=object).reshape(m)
        self.c = np.asarray(self.c, dtype=float).reshape(n)
        self.lb = np.asarray(self.lb, dtype=float).reshape(n)
        self.ub = np.asarray(self.ub, dtype=float).reshape(n)
        if self.integer is None:
            self.integer = np.zeros(n, dtype=bool)
        bad = set(self.sense.tolist()) - {"<=", ">=", "="}
        if bad:
            raise ValueError(f"unknown row sense(s) {bad}")
        if np.any(self.lb > self.ub):
            raise ValueError("lower bound above upper bound")

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.where(self.sense == "<=", -np.inf, self.rhs).astype(float)
        hi = np.where(self.sense == ">=", np.inf, self.rhs).astype(float)
        return lo, hi

    def objective(self, x) -> float:
        return float(self.c @ x) + self.obj_offset

    def max_violation(self, x) -> float:
        """Largest absolute row or bound violation of ``x``."""
        x = np.asarray(x, dtype=float)
        act = self.A @ x
        lo, hi = self.row_bounds()
        v = [0.0]
        if self.m:
            v.append(float(np.max(np.maximum(lo - act, act - hi))))
        if self.n:
            v.append(float(np.max(np.maximum(self.lb - x, x - self.ub))))
        return max(v)


@dataclass
class SolverOptions:
    int_tol: float = 1e-6
    opt_tol: float = 1e-9
    feas_tol: float = 1e-9
    mip_gap: float = 1e-6
    node_limit: int = 1_000_000
    time_limit: float = math.inf
    max_lp_iter: int | None = None
    refactor_every: int = 64
    scaling: bool = True

    def __post_init__(self):
        for name in ("int_tol", "opt_tol", "feas_tol", "mip_gap", "node_limit", "time_limit"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class SolverOutcome:
    status: str
    x: np.ndarray | None = None
    objective: float = math.nan
    bound: float = math.nan
    nodes: int = 0
    iterations: int = 0
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    dual_objective: float = math.nan
    basis: object = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status in (OPTIMAL, NONCONVERGED)


# ---------------------------------------------------------------------------


def equilibrate(A: sp.csc_matrix, passes: int = 6) -> tuple[np.ndarray, np.ndarray]:
    """Geometric-mean row/column scale factors ``R``, ``S`` for ``diag(R) A diag(S)``."""
    m, n = A.shape
    R = np.ones(m)
    S = np.ones(n)
    if A.nnz == 0:
        return R, S
    coo = A.tocoo()
    rows, cols = coo.row, coo.col
    logv = np.log(np.abs(coo.data))
    for _ in range(passes):
        cur = logv + np.log(R)[rows] + np.log(S)[cols]
        rmax = np.full(m, -np.inf)
        rmin = np.full(m, np.inf)
        np.maximum.at(rmax, rows, cur)
        np.minimum.at(rmin, rows, cur)
        has = np.isfinite(rmax)
        R[has] *= np.exp(-0.5 * (rmax[has] + rmin[has]))
        cur = logv + np.log(R)[rows] + np.log(S)[cols]
        cmax = np.full(n, -np.inf)
        cmin = np.full(n, np.inf)
        np.maximum.at(cmax, cols, cur)
        np.minimum.at(cmin, cols, cur)
        has = np.isfinite(cmax)
        S[has] *= np.exp(-0.5 * (cmax[has] + cmin[has]))
    # powers of two keep the scaling exact in floating point
    R = np.exp2(np.round(np.log2(R)))
    S = np.exp2(np.round(np.log2(S)))
    return R, S


class _Factor:
    """Sparse LU of the basis with product-form eta updates."""

    def __init__(self, B: sp.csc_matrix):
        self.m = B.shape[0]
        self.lu = spla.splu(B, permc_spec="COLAMD", diag_pivot_thresh=0.1,
                            options={"SymmetricMode": False})
        self.etas: list[tuple[int, np.ndarray]] = []

    def ftran(self, a: np.ndarray) -> np.ndarray:
        y = self.lu.solve(a)
        for p, alpha in self.etas:
            yp = y[p] / alpha[p]
            y -= yp * alpha
            y[p] = yp
        return y

    def btran(self, e: np.ndarray) -> np.ndarray:
        v = e.copy()
        for p, alpha in reversed(self.etas):
            vp = v[p]
            v[p] = 0.0
            v[p] = (vp - alpha @ v) / alpha[p]
        return self.lu.solve(v, trans="T")

    def update(self, p: int, alpha: np.ndarray) -> None:
        self.etas.append((p, alpha.copy()))


@dataclass
class BasisState:
    basis: np.ndarray
    at_upper: np.ndarray
    weights: np.ndarray


class DualSimplex:
    """Reusable LP engine; bounds may be changed between solves."""

    def __init__(self, p: LpProblem, options: SolverOptions | None = None):
        self.p = p
        self.opt = options or SolverOptions()
        m, n = p.m, p.n
        self.m, self.n, self.N = m, n, n + m
        if self.opt.scaling:
            self.R, self.S = equilibrate(p.A)
        else:
            self.R, self.S = np.ones(m), np.ones(n)
        A = sp.diags(self.R) @ p.A @ sp.diags(self.S)
        self.A = sp.csc_matrix(A)
        self.A.sort_indices()
        self.AT = self.A.T.tocsr()
        self.M = sp.hstack([self.A, -sp.identity(m, format="csc")], format="csc")
        self.c = np.concatenate([p.c * self.S, np.zeros(m)])
        rlo, rhi = p.row_bounds()
        self._row_lo = rlo * self.R
        self._row_hi = rhi * self.R
        self.lo = np.empty(self.N)
        self.hi = np.empty(self.N)
        self.art_lo = np.zeros(self.N, dtype=bool)
        self.art_hi = np.zeros(self.N, dtype=bool)
        self.set_bounds(p.lb, p.ub)
        self.iterations = 0
        self._factor: _Factor | None = None
        self.state: BasisState | None = None
        self._good = None
        self._recoveries = 0
        self._piv_tol = 1e-7

    # -- bounds -------------------------------------------------------------
    def set_bounds(self, lb: np.ndarray, ub: np.ndarray) -> None:
        lo = np.concatenate([np.asarray(lb, float) / self.S, self._row_lo])
        hi = np.concatenate([np.asarray(ub, float) / self.S, self._row_hi])
        self.art_lo = ~np.isfinite(lo)
        self.art_hi = ~np.isfinite(hi)
        # artificial boxes are placed relative to the finite side when there is one
        lo = np.where(self.art_lo, np.where(self.art_hi, -_BIG, np.minimum(hi, 0.0) - _BIG), lo)
        hi = np.where(self.art_hi, np.maximum(lo, 0.0) + _BIG, hi)
        self.lo, self.hi = lo, hi

    # -- basis handling -------------------------------------------------------
    def slack_state(self) -> BasisState:
        basis = np.arange(self.n, self.N)
        at_upper = np.zeros(self.N, dtype=bool)
        at_upper[: self.n] = self.c[: self.n] < 0
        return BasisState(basis, at_upper, np.ones(self.m))

    def snapshot(self) -> BasisState:
        s = self.state
        return BasisState(s.basis.copy(), s.at_upper.copy(), s.weights.copy())

    def _dense_col(self, j: int) -> np.ndarray:
        a = np.zeros(self.m)
        M = self.M
        lo, hi = M.indptr[j], M.indptr[j + 1]
        a[M.indices[lo:hi]] = M.data[lo:hi]
        return a

    def _refactor(self) -> None:
        B = self.M[:, self.basis]
        try:
            self._factor = _Factor(sp.csc_matrix(B))
        except RuntimeError as exc:  # singular basis
            if self._good is None or self._recoveries >= 20:
                raise SolverError(f"basis factorization failed: {exc}") from None
            # fall back to the last basis that factored and pivot more conservatively
            self._recoveries += 1
            self._piv_tol = min(1e-5, self._piv_tol * 10.0)
            basis, at_upper, weights = self._good
            self.basis[:] = basis
            self.at_upper[:] = at_upper
            self.weights[:] = weights
            self.nonbasic[:] = True
            self.nonbasic[self.basis] = False
            logger.debug("singular basis; restored last factored basis (pivot tol %.0e)", self._piv_tol)
            self._factor = _Factor(sp.csc_matrix(self.M[:, self.basis]))
            return
        self._good = (self.basis.copy(), self.at_upper.copy(), self.weights.copy())

    def _recompute(self) -> None:
        """Fresh x_B, duals and reduced costs from the current factorization."""
        x = self.x
        nb = self.nonbasic
        x[nb] = np.where(self.at_upper[nb], self.hi[nb], self.lo[nb])
        x[self.basis] = 0.0
        v = self.A @ x[: self.n] - x[self.n:]
        x[self.basis] = self._factor.ftran(-v)
        y = self._factor.btran(self.c[self.basis])
        self.y = y
        d = self.c.copy()
        d[: self.n] -= self.AT @ y
        d[self.n:] += y
        d[self.basis] = 0.0
        self.d = d

    def _repair_dual(self) -> int:
        """Flip nonbasic variables whose reduced cost has the wrong sign."""
        tol = self.opt.opt_tol
        nb = self.nonbasic
        wrong_lo = nb & ~self.at_upper & (self.d < -tol)
        wrong_hi = nb & self.at_upper & (self.d > tol)
        flips = np.flatnonzero(wrong_lo | wrong_hi)
        if flips.size:
            self.at_upper[flips] = ~self.at_upper[flips]
        return flips.size

    def load(self, state: BasisState) -> None:
        self.state = BasisState(state.basis.copy(), state.at_upper.copy(), state.weights.copy())
        self.basis = self.state.basis
        self.at_upper = self.state.at_upper
        self.weights = self.state.weights
        self.nonbasic = np.ones(self.N, dtype=bool)
        self.nonbasic[self.basis] = False
        self.x = np.zeros(self.N)
        self._refactor()
        self._recompute()
        if self._repair_dual():
            self._recompute()

    # -- main loop ------------------------------------------------------------
    def solve(self, state: BasisState | None = None, deadline: float = math.inf) -> SolverOutcome:
        if state is not None or self.state is None:
            self.load(state or self.slack_state())
        else:
            # bounds may have moved since the last solve
            self._recompute()
            if self._repair_dual():
                self._recompute()
        status = self._iterate(deadline)
        return self._outcome(status)

    def _iterate(self, deadline: float) -> str:
        opt = self.opt
        m, n = self.m, self.n
        ftol, dtol = opt.feas_tol, opt.opt_tol
        max_iter = opt.max_lp_iter or 50 * (self.N + 10)
        since_refactor = 0
        stall = 0
        best_obj = -np.inf
        bland = False
        it = 0
        verified = False
        row_ban = np.zeros(m, dtype=bool)
        while True:
            if it >= max_iter or time.monotonic() > deadline:
                return LIMIT
            xb = self.x[self.basis]
            lob = self.lo[self.basis]
            hib = self.hi[self.basis]
            below = lob - xb
            above = xb - hib
            infeas = np.maximum(below, above)
            cand = infeas > ftol
            if cand.any() and row_ban.any():
                cand &= ~row_ban
                if not cand.any():
                    row_ban[:] = False
                    if since_refactor:
                        self._refactor()
                        self._recompute()
                        since_refactor = 0
                        continue
                    return NUMERICAL
            if not cand.any():
                if not verified and since_refactor:
                    self._refactor()
                    self._recompute()
                    since_refactor = 0
                    verified = True
                    if self._repair_dual():
                        self._recompute()
                    continue
                return OPTIMAL
            verified = False
            if bland:
                p = int(np.flatnonzero(cand)[np.argmin(self.basis[cand])])
            else:
                score = np.where(cand, infeas * infeas / self.weights, -1.0)
                p = int(np.argmax(score))
            s = 1.0 if below[p] > 0 else -1.0
            target = lob[p] if s > 0 else hib[p]
            # pivot row
            e = np.zeros(m)
            e[p] = 1.0
            rho = self._factor.btran(e)
            alpha = np.empty(self.N)
            alpha[:n] = self.AT @ rho
            alpha[n:] = -rho
            movable = self.nonbasic & (self.hi > self.lo)
            sa = s * alpha
            idx = np.empty(0, dtype=int)
            # prefer well-sized pivots; tiny ones only when nothing else qualifies
            for piv_tol in (self._piv_tol, 1e-9):
                elig = movable & (((~self.at_upper) & (sa < -piv_tol)) | (self.at_upper & (sa > piv_tol)))
                idx = np.flatnonzero(elig)
                if idx.size:
                    break
            if idx.size == 0:
                if since_refactor:
                    self._refactor()
                    self._recompute()
                    since_refactor = 0
                    continue
                return INFEASIBLE
            aa = np.abs(alpha[idx])
            dj = np.abs(self.d[idx])
            if bland:
                ratio = dj / aa
                r = ratio.min()
                ties = idx[ratio <= r + 1e-12]
                q = int(ties.min())
            else:
                relaxed = (dj + dtol) / aa
                tmax = relaxed.min()
                ratio = dj / aa
                ok = ratio <= tmax
                q = int(idx[ok][np.argmax(aa[ok])])
            theta_d = -s * abs(self.d[q]) / abs(alpha[q])
            # pivot column
            if q < n:
                aq = self._dense_col(q)
            else:
                aq = np.zeros(m)
                aq[q - n] = -1.0
            alpha_q = self._factor.ftran(aq)
            apq = alpha_q[p]
            if abs(apq - alpha[q]) > 1e-6 * (1.0 + abs(apq)) and since_refactor:
                self._refactor()
                self._recompute()
                since_refactor = 0
                continue
            if abs(apq) < 1e-11 or abs(apq) < 1e-8 * float(np.max(np.abs(alpha_q))):
                # unstable pivot: try another leaving row first
                row_ban[p] = True
                continue
            row_ban[:] = False
            # dual steepest-edge reference weights
            tau = self._factor.ftran(rho)
            wp = float(rho @ rho)
            # primal update
            theta_p = (xb[p] - target) / apq
            leaving = self.basis[p]
            self.x[self.basis] -= theta_p * alpha_q
            self.x[q] += theta_p
            self.x[leaving] = target
            # dual update
            self.d -= theta_d * alpha
            self.d[q] = 0.0
            self.d[leaving] = -theta_d
            # weights
            ratio_w = alpha_q / apq
            w = self.weights
            w_new = w - 2.0 * ratio_w * tau + ratio_w * ratio_w * wp
            w_new = np.maximum(w_new, 1e-4)
            w_new[p] = max(wp / (apq * apq), 1e-4)
            self.weights[:] = w_new
            # basis change
            self.basis[p] = q
            self.nonbasic[q] = False
            self.nonbasic[leaving] = True
            self.at_upper[leaving] = s < 0
            self.d[self.basis] = 0.0
            self._factor.update(p, alpha_q)
            it += 1
            self.iterations += 1
            since_refactor += 1
            if since_refactor >= opt.refactor_every:
                self._refactor()
                self._recompute()
                since_refactor = 0
                if self._repair_dual():
                    self._recompute()
            obj = float(self.c @ self.x)
            if obj > best_obj + 1e-12 * (1.0 + abs(obj)):
                best_obj = obj
                stall = 0
                bland = False
            else:
                stall += 1
                if stall > 200:
                    bland = True

    # -- results --------------------------------------------------------------
    def _outcome(self, status: str) -> SolverOutcome:
        self.state = BasisState(self.basis, self.at_upper, self.weights)
        n = self.n
        x = self.x[:n] * self.S
        if status != OPTIMAL:
            return SolverOutcome(status, x=x if status == LIMIT else None, iterations=self.iterations)
        nb = self.nonbasic
        on_art = nb & ((self.at_upper & self.art_hi) | (~self.at_upper & self.art_lo))
        if np.any(on_art & (np.abs(self.d) > self.opt.opt_tol)):
            return SolverOutcome(UNBOUNDED, iterations=self.iterations)
        duals = self.y * self.R
        rc = self.d[:n] / self.S
        p = self.p
        obj = p.objective(x)
        return SolverOutcome(
            OPTIMAL, x=x, objective=obj, bound=obj, iterations=self.iterations,
            duals=duals, reduced_costs=rc, dual_objective=dual_objective(p, duals, rc),
            basis=self.snapshot(),
        )


def dual_objective(p: LpProblem, y: np.ndarray, d: np.ndarray, tol: float = 1e-9) -> float:
    """Lagrangian dual value from row duals ``y`` and reduced costs ``d``.

    Each term picks the bound that the sign of its multiplier points to; a
    multiplier pushing against an infinite bound yields ``-inf``.
    """
    rlo, rhi = p.row_bounds()
    total = p.obj_offset

    def part(mult, lo, hi):
        mult = np.where(np.abs(mult) <= tol, 0.0, mult)
        pos = np.clip(mult, 0.0, None)
        neg = np.clip(mult, None, 0.0)
        with np.errstate(invalid="ignore"):
            a = np.where(pos > 0, pos * lo, 0.0)
            b = np.where(neg < 0, neg * hi, 0.0)
        return float(np.sum(a) + np.sum(b))

    total += part(d, p.lb, p.ub)
    total += part(y, rlo, rhi)
    return total


def solve_lp(p: LpProblem, options: SolverOptions | None = None) -> SolverOutcome:
    """Solve a linear program with the bundled dual simplex."""
    options = options or SolverOptions()
    deadline = time.monotonic() + options.time_limit
    return DualSimplex(p, options).solve(deadline=deadline)
