"""Sparse MILP container with a variable registry and CPLEX-LP text I/O."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .solver.lp import LpProblem

CONTINUOUS = "C"
BINARY = "B"


@dataclass(frozen=True)
class VarKey:
    family: str
    entity: str
    t: int

    @property
    def name(self) -> str:
        ent = re.sub(r"[^A-Za-z0-9_.]", "_", self.entity)
        return f"{self.family}_{ent}_t{self.t:02d}"


class MilpModel:
    """Variables, sparse rows (``sense`` in ``<=``, ``>=``, ``=``) and a linear objective."""

    def __init__(self):
        self.keys: list[VarKey] = []
        self.kind: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.obj: list[float] = []
        self.index: dict[tuple[str, str, int], int] = {}
        self.priority: dict[int, int] = {}
        self._ri: list[int] = []
        self._ci: list[int] = []
        self._vals: list[float] = []
        self.sense: list[str] = []
        self.rhs: list[float] = []
        self.row_names: list[str] = []
        self.obj_offset = 0.0

    # -- registry ---------------------------------------------------------
    def add_var(self, family, entity, t, lb=0.0, ub=math.inf, kind=CONTINUOUS, obj=0.0, priority=None) -> int:
        key = (family, str(entity), int(t))
        if key in self.index:
            raise KeyError(f"variable {key} registered twice")
        if kind == BINARY:
            lb, ub = max(0.0, lb), min(1.0, ub)
        j = len(self.keys)
        self.keys.append(VarKey(*key))
        self.kind.append(kind)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.obj.append(float(obj))
        self.index[key] = j
        if priority is not None:
            self.priority[j] = priority
        return j

    def var(self, family, entity, t) -> int:
        return self.index[(family, str(entity), int(t))]

    def has(self, family, entity, t) -> bool:
        return (family, str(entity), int(t)) in self.index

    def fix(self, j: int, value: float) -> None:
        self.lb[j] = self.ub[j] = float(value)

    def add_row(self, terms, sense, rhs, name="") -> int:
        if sense not in ("<=", ">=", "="):
            raise ValueError(f"bad sense {sense!r}")
        i = len(self.sense)
        n = len(self.keys)
        for j, a in terms:
            if not 0 <= j < n:
                raise IndexError(f"row {name!r} references unregistered variable {j}")
            if a != 0.0:
                self._ri.append(i)
                self._ci.append(j)
                self._vals.append(float(a))
        self.sense.append(sense)
        self.rhs.append(float(rhs))
        self.row_names.append(name or f"r{i}")
        return i

    @property
    def n_vars(self) -> int:
        return len(self.keys)

    @property
    def n_rows(self) -> int:
        return len(self.sense)

    @property
    def binaries(self) -> list[int]:
        return [j for j, k in enumerate(self.kind) if k == BINARY]

    def families(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for k in self.keys:
            out[k.family] = out.get(k.family, 0) + 1
        return out

    def matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix((self._vals, (self._ri, self._ci)), shape=(self.n_rows, self.n_vars))

    def to_lp(self) -> LpProblem:
        return LpProblem(
            A=self.matrix().tocsc(),
            rhs=np.array(self.rhs, dtype=float),
            sense=np.array(self.sense, dtype=object),
            c=np.array(self.obj, dtype=float),
            lb=np.array(self.lb, dtype=float),
            ub=np.array(self.ub, dtype=float),
            integer=np.array([k == BINARY for k in self.kind], dtype=bool),
            obj_offset=self.obj_offset,
            col_names=[k.name for k in self.keys],
            row_names=list(self.row_names),
        )

    def objective_value(self, x) -> float:
        return float(np.dot(self.obj, x)) + self.obj_offset

    def write_lp(self) -> str:
        return write_lp(self.to_lp())


# ---------------------------------------------------------------------------
# LP text format (CPLEX dialect subset: Minimize / Subject To / Bounds / Binaries / End)


def _fmt(v: float) -> str:
    return repr(float(v))


def _terms(cols, vals, names) -> str:
    out = []
    for j, a in zip(cols, vals):
        sign = "-" if a < 0 else "+"
        out.append(f"{sign} {_fmt(abs(a))} {names[j]}")
    if not out:
        return "0 " + names[0] if names else "0"
    s = " ".join(out)
    return s[2:] if s.startswith("+ ") else s


def write_lp(p: LpProblem) -> str:
    names = p.col_names or [f"x{j}" for j in range(p.n)]
    rnames = p.row_names or [f"r{i}" for i in range(p.m)]
    lines = ["\\ written by hybridgrid", "Minimize"]
    nz = np.flatnonzero(p.c)
    obj = _terms(nz, p.c[nz], names)
    if p.obj_offset:
        obj += f" + {_fmt(p.obj_offset)} __offset"
    lines.append(f" obj: {obj}")
    lines.append("Subject To")
    A = p.A.tocsr()
    for i in range(p.m):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        op = {"<=": "<=", ">=": ">=", "=": "="}[p.sense[i]]
        lines.append(f" {rnames[i]}: {_terms(A.indices[lo:hi], A.data[lo:hi], names)} {op} {_fmt(p.rhs[i])}")
    lines.append("Bounds")
    if p.obj_offset:
        lines.append(" __offset = 1")
    for j in range(p.n):
        lb, ub = p.lb[j], p.ub[j]
        if lb == ub:
            lines.append(f" {names[j]} = {_fmt(lb)}")
        elif math.isinf(lb) and math.isinf(ub):
            lines.append(f" {names[j]} free")
        else:
            lo = "-inf" if math.isinf(lb) else _fmt(lb)
            hi = "+inf" if math.isinf(ub) else _fmt(ub)
            lines.append(f" {lo} <= {names[j]} <= {hi}")
    ints = [names[j] for j in np.flatnonzero(p.integer)]
    if ints:
        lines.append("Binaries")
        for k in range(0, len(ints), 8):
            lines.append(" " + " ".join(ints[k:k + 8]))
    lines.append("End")
    return "\n".join(lines) + "\n"


_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?inf"


_TOKEN = re.compile(r"\s*([+-]|(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[A-Za-z_][\w.]*)")


def _parse_expr(text: str, col) -> dict[int, float]:
    out: dict[int, float] = {}
    sign, coef = 1.0, None
    for tok in _TOKEN.findall(text):
        if tok == "+":
            continue
        if tok == "-":
            sign = -sign
        elif tok[0].isdigit() or tok[0] == ".":
            coef = float(tok)
        else:
            j = col(tok)
            out[j] = out.get(j, 0.0) + sign * (1.0 if coef is None else coef)
            sign, coef = 1.0, None
    return out


def read_lp(text: str) -> LpProblem:
    """Parse the LP dialect produced by :func:`write_lp`."""
    names: list[str] = []
    pos: dict[str, int] = {}

    def col(name):
        if name not in pos:
            pos[name] = len(names)
            names.append(name)
        return pos[name]

    section = None
    obj: dict[int, float] = {}
    rows: list[tuple[str, dict[int, float], str, float]] = []
    bounds: dict[int, list[float]] = {}
    ints: list[int] = []
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        low = line.lower()
        if low in ("minimize", "minimise", "min"):
            section = "obj"
            continue
        if low in ("subject to", "st", "s.t."):
            section = "rows"
            continue
        if low == "bounds":
            section = "bounds"
            continue
        if low in ("binaries", "binary", "bin"):
            section = "bin"
            continue
        if low == "end":
            break
        if section == "obj":
            body = line.split(":", 1)[1] if ":" in line else line
            obj.update(_parse_expr(body, col))
        elif section == "rows":
            name, body = line.split(":", 1) if ":" in line else (f"r{len(rows)}", line)
            m = re.match(r"(.*?)(<=|>=|=<|=>|=|<|>)\s*(" + _NUM + r")\s*$", body)
            if not m:
                raise ValueError(f"cannot parse row: {raw}")
            op = {"=<": "<=", "<": "<=", "=>": ">=", ">": ">="}.get(m.group(2), m.group(2))
            rows.append((name.strip(), _parse_expr(m.group(1), col), op, float(m.group(3))))
        elif section == "bounds":
            toks = line.split()
            if len(toks) == 2 and toks[1].lower() == "free":
                bounds[col(toks[0])] = [-math.inf, math.inf]
            elif len(toks) == 3 and toks[1] == "=":
                v = float(toks[2])
                bounds[col(toks[0])] = [v, v]
            elif len(toks) == 5:
                bounds[col(toks[2])] = [float(toks[0]), float(toks[4])]
            elif len(toks) == 3:
                j = col(toks[0])
                b = bounds.setdefault(j, [0.0, math.inf])
                if toks[1] in ("<=", "<"):
                    b[1] = float(toks[2])
                else:
                    b[0] = float(toks[2])
            else:
                raise ValueError(f"cannot parse bound: {raw}")
        elif section == "bin":
            for tok in line.split():
                ints.append(col(tok))
    n = len(names)
    lb = np.zeros(n)
    ub = np.full(n, math.inf)
    integer = np.zeros(n, dtype=bool)
    for j in ints:
        integer[j] = True
        ub[j] = 1.0
    for j, (lo, hi) in bounds.items():
        lb[j], ub[j] = lo, hi
    c = np.zeros(n)
    for j, a in obj.items():
        c[j] = a
    offset = 0.0
    if "__offset" in pos:
        k = pos["__offset"]
        offset = c[k] * lb[k]
        keep = np.array([j != k for j in range(n)])
        remap = np.cumsum(keep) - 1
        names = [nm for j, nm in enumerate(names) if keep[j]]
        c, lb, ub, integer = c[keep], lb[keep], ub[keep], integer[keep]
        rows = [(nm, {int(remap[j]): a for j, a in d.items() if j != k}, op, r) for nm, d, op, r in rows]
        n -= 1
    ri, ci, vals = [], [], []
    for i, (_, d, _, _) in enumerate(rows):
        for j, a in d.items():
            ri.append(i)
            ci.append(j)
            vals.append(a)
    A = sp.csc_matrix((vals, (ri, ci)), shape=(len(rows), n))
    return LpProblem(
        A=A,
        rhs=np.array([r[3] for r in rows], dtype=float),
        sense=np.array([r[2] for r in rows], dtype=object),
        c=c, lb=lb, ub=ub, integer=integer, obj_offset=offset,
        col_names=names, row_names=[r[0] for r in rows],
    )
