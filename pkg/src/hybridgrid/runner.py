"""End-to-end scenario pipeline: load, transform, solve, certify, measure."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import cases
from .acpf import PowerFlowDivergence, linearization_error
from .linflow import IterationTrace, successive_linearization
from .network import NetworkError, load_network, to_per_unit
from .profiles import load_profiles
from .scheduler import ScheduleOptions, Solution, build_model, extract_solution
from .solver.backends import get_backend
from .solver.lp import INFEASIBLE, NONCONVERGED, OPTIMAL, UNBOUNDED, SolverOptions
from .verifier import ViolationReport, check_solution

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_VERIFY = 3
EXIT_NONCONVERGED = 4


class StageError(RuntimeError):
    def __init__(self, stage: str, msg: str):
        super().__init__(f"[{stage}] {msg}")
        self.stage = stage


class InfeasibleSchedule(RuntimeError):
    pass


class SolveLimit(RuntimeError):
    pass


@dataclass
class ScenarioConfig:
    network: str
    profiles: str
    case: str = "none"
    relocate_load: tuple = ()
    relocate_der: tuple = ()
    backend: str = "bundled"
    mip_gap: float = 1e-6
    time_limit: float = math.inf
    tol: float = 1e-4
    max_iter: int = 20
    terminal_energy: bool = False
    verify_tol: float = 1e-6
    measure_error: bool = True
    out_dir: str | None = None
    label: str = ""

    def __post_init__(self):
        self.relocate_load = tuple((str(a), str(b)) for a, b in self.relocate_load)
        self.relocate_der = tuple((str(a), str(b)) for a, b in self.relocate_der)
        if not self.label:
            self.label = self.case

    def validate(self) -> None:
        for what in ("network", "profiles"):
            if not Path(getattr(self, what)).is_file():
                raise StageError("config", f"{what} file {getattr(self, what)!r} does not exist")
        if self.case not in cases.CASES:
            raise StageError("config", f"unknown case {self.case!r}")
        if self.tol <= 0 or self.max_iter < 1 or self.mip_gap < 0:
            raise StageError("config", "tol and max_iter must be positive, gap nonnegative")

    def solver_options(self) -> SolverOptions:
        return SolverOptions(mip_gap=self.mip_gap, time_limit=self.time_limit)

    @classmethod
    def from_dict(cls, doc: dict, base_dir: str | Path | None = None) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known
        if extra:
            raise StageError("config", f"unknown key(s) {sorted(extra)}")
        doc = dict(doc)
        if base_dir is not None:
            for key in ("network", "profiles"):
                if key in doc and not Path(doc[key]).is_absolute():
                    doc[key] = str(Path(base_dir) / doc[key])
        if doc.get("time_limit") is None:
            doc.pop("time_limit", None)
        return cls(**doc)

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise StageError("config", f"cannot read {path}: {exc}") from None
        return cls.from_dict(doc, base_dir=path.parent)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["relocate_load"] = [list(m) for m in self.relocate_load]
        doc["relocate_der"] = [list(m) for m in self.relocate_der]
        if math.isinf(self.time_limit):
            doc["time_limit"] = None
        return doc


@dataclass
class RunReport:
    label: str
    status: str
    objective: float
    losses_kw: float
    line_losses_kw: float
    converter_losses_kw: float
    iterations: int
    converged: bool
    solution: Solution | None
    trace: IterationTrace
    verdict: ViolationReport | None
    oracle: dict | None = None
    oracle_report: object = None
    net: object = None
    profiles: object = None
    notes: list[str] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        if self.status == INFEASIBLE:
            return EXIT_INFEASIBLE
        if self.verdict is not None and not self.verdict.passed:
            return EXIT_VERIFY
        if self.status != OPTIMAL:
            return EXIT_NONCONVERGED
        return EXIT_OK

    def des_states(self) -> dict[str, np.ndarray]:
        if self.solution is None:
            return {}
        return {s: self.solution.des_state(s) for s in self.solution.pb}

    def summary(self) -> dict:
        out = {
            "objective_usd": self.objective,
            "losses_kw": self.losses_kw,
            "status": self.status,
            "iterations": self.iterations,
            "label": self.label,
            "converged": self.converged,
            "line_losses_kw": self.line_losses_kw,
            "converter_losses_kw": self.converter_losses_kw,
        }
        if self.verdict is not None:
            out["verification"] = {"passed": self.verdict.passed, "max_residual_pu": self.verdict.max_residual}
        if self.oracle is not None:
            out["linearization_error"] = self.oracle
        if self.solution is not None:
            out["commitment"] = {g: "".join(str(int(v)) for v in s) for g, s in self.solution.commit.items()}
        return out


def _solve_pipeline(config: ScenarioConfig, net, prof):
    norm = to_per_unit(net)
    backend = get_backend(config.backend)
    opts = ScheduleOptions(terminal_energy=config.terminal_energy)
    sopt = config.solver_options()
    state = {"x": None, "status": OPTIMAL}

    def build_and_solve(point, fixed, radius=None):
        model = build_model(norm, prof, point, opts, radius=radius)
        if fixed:
            model.fix_pattern(fixed)
        out = backend.solve(model, sopt, start=state["x"]) if config.backend == "bundled" else backend.solve(model, sopt)
        if out.status == INFEASIBLE and radius is not None:
            logger.info("trust region infeasible; re-solving without it")
            return build_and_solve(point, fixed, None)
        if out.status in (INFEASIBLE, UNBOUNDED):
            raise InfeasibleSchedule(f"scheduling model is {out.status}")
        if out.x is None:
            raise SolveLimit(f"solver stopped without a feasible schedule ({out.status})")
        if out.status == NONCONVERGED:
            state["status"] = NONCONVERGED
        state["x"] = out.x
        return extract_solution(model, out.x, out.objective, out.status)

    sol, trace = successive_linearization(build_and_solve, net.bus_ids, prof.horizon,
                                          tol=config.tol, max_iter=config.max_iter)
    status = OPTIMAL if trace.converged and state["status"] == OPTIMAL else NONCONVERGED
    sol.status = status
    return norm, sol, trace, status


def run(config: ScenarioConfig) -> RunReport:
    """Load, transform, solve with successive linearization, verify, measure, report."""
    config.validate()
    try:
        net = load_network(config.network)
        prof = load_profiles(config.profiles)
        prof.check_against(net)
    except (NetworkError, ValueError, OSError) as exc:
        raise StageError("load", str(exc)) from exc
    try:
        net, prof = cases.apply_case_transform(net, prof, config.case, config.relocate_load, config.relocate_der)
    except (NetworkError, ValueError) as exc:
        raise StageError("transform", str(exc)) from exc
    return run_loaded(config, net, prof)


def run_loaded(config: ScenarioConfig, net, prof) -> RunReport:
    try:
        norm, sol, trace, status = _solve_pipeline(config, net, prof)
    except InfeasibleSchedule as exc:
        logger.warning("%s: %s", config.label, exc)
        rep = RunReport(config.label, INFEASIBLE, math.nan, math.nan, math.nan, math.nan, 0, False, None,
                        IterationTrace(), None, net=net, profiles=prof, notes=[str(exc)])
        _maybe_emit(config, rep)
        return rep
    except SolveLimit as exc:
        raise StageError("solve", str(exc)) from exc
    verdict = check_solution(net, prof, sol, tol=config.verify_tol)
    if not verdict.passed:
        logger.error("%s: verification failed (max residual %.3e)", config.label, verdict.max_residual)
    oracle = oracle_rep = None
    if config.measure_error:
        try:
            oracle_rep = linearization_error(sol, norm, prof)
        except PowerFlowDivergence as exc:
            raise StageError("oracle", str(exc)) from exc
        oracle = oracle_rep.summary()
    rep = RunReport(config.label, status, sol.objective, sol.losses_kw, sol.line_losses_kw, sol.converter_losses_kw,
                    len(trace), trace.converged, sol, trace, verdict, oracle, oracle_rep, net, prof)
    _maybe_emit(config, rep)
    return rep


def _maybe_emit(config, rep):
    if config.out_dir:
        from .reports import emit_reports
        emit_reports(rep, config.out_dir)


def run_many(configs: list[ScenarioConfig], workers: int = 2) -> list[RunReport]:
    """Independent scenarios side by side; results in input order."""
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(run, configs))
