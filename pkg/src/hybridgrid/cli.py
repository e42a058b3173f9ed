"""Command-line entry point.

Exit codes: 0 success, 1 bad input or usage, 2 infeasible, 3 verification
failure, 4 non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

from . import cases, datasets
from .network import NetworkError, load_network, to_per_unit, validate_topology
from .profiles import load_profiles
from .reports import emit_comparison
from .runner import EXIT_OK, ScenarioConfig, StageError, run, run_many

EXIT_INPUT = 1


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which would read as "infeasible"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _pair(text: str) -> tuple[str, str]:
    a, sep, b = text.partition(":")
    if not sep or not a or not b:
        raise argparse.ArgumentTypeError(f"expected A:B, got {text!r}")
    return a, b


def _data_args(p, required=True):
    p.add_argument("--network", required=required, default=str(datasets.network_path()),
                   help="network JSON (default: bundled 33-bus feeder)")
    p.add_argument("--profiles", required=required, default=str(datasets.profiles_path()),
                   help="profile JSON (default: bundled synthetic day)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="hybridgrid", description="Day-ahead hybrid AC/DC microgrid scheduler")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="schedule one scenario")
    _data_args(s, required=False)
    s.add_argument("--case", choices=cases.CASES, default="none")
    s.add_argument("--relocate-load", type=_pair, action="append", default=[], metavar="FROM:TO")
    s.add_argument("--relocate-der", type=_pair, action="append", default=[], metavar="UNIT:BUS")
    s.add_argument("--tol", type=float, default=1e-4)
    s.add_argument("--max-iter", type=int, default=20)
    s.add_argument("--gap", type=float, default=1e-6)
    s.add_argument("--time-limit", type=float, default=math.inf)
    s.add_argument("--backend", choices=("bundled", "highs"), default="bundled")
    s.add_argument("--terminal-energy", action="store_true", help="require E_T >= E_0 for storage")
    s.add_argument("--no-error-check", action="store_true", help="skip the exact power-flow comparison")
    s.add_argument("--out", default=None, help="directory for CSV/JSON reports")

    v = sub.add_parser("validate", help="parse a network and print its topology")
    v.add_argument("--network", required=True)

    c = sub.add_parser("compare", help="solve two scenario configs and tabulate deltas")
    c.add_argument("--a", required=True, help="scenario config JSON")
    c.add_argument("--b", required=True, help="scenario config JSON")
    c.add_argument("--out", default=None)

    o = sub.add_parser("oracle", help="exhaustive binary enumeration on a small instance")
    _data_args(o)
    o.add_argument("--case", choices=cases.CASES, default="none")
    o.add_argument("--guard", type=int, default=20)
    return ap


def _print(doc) -> None:
    print(json.dumps(doc, indent=1, default=str))


def cmd_solve(args) -> int:
    cfg = ScenarioConfig(
        network=args.network, profiles=args.profiles, case=args.case,
        relocate_load=tuple(args.relocate_load), relocate_der=tuple(args.relocate_der),
        backend=args.backend, mip_gap=args.gap, time_limit=args.time_limit, tol=args.tol,
        max_iter=args.max_iter, terminal_energy=args.terminal_energy,
        measure_error=not args.no_error_check, out_dir=args.out,
    )
    rep = run(cfg)
    _print(rep.summary())
    return rep.exit_code


def cmd_validate(args) -> int:
    net = load_network(args.network)
    rep = validate_topology(net)
    _print(asdict(rep))
    return EXIT_OK


def cmd_compare(args) -> int:
    a, b = ScenarioConfig.load(args.a), ScenarioConfig.load(args.b)
    if a.label == b.label:
        a.label, b.label = f"a_{a.label}", f"b_{b.label}"
    reports = run_many([a, b])
    out = Path(args.out or ".")
    emit_comparison(reports, out / "comparison.csv")
    _print({r.label: r.summary() for r in reports})
    return max((r.exit_code for r in reports), default=EXIT_OK)


def cmd_oracle(args) -> int:
    from .scheduler import build_model
    from .solver.backends import get_backend
    from .verifier import enumerate_oracle

    net, prof = cases.apply_case_transform(load_network(args.network), load_profiles(args.profiles), args.case)
    res = enumerate_oracle(net, prof, guard=args.guard)
    model = build_model(to_per_unit(net), prof)
    out = get_backend("bundled").solve(model)
    _print({
        "oracle_objective": res.objective,
        "milp_objective": out.objective,
        "enumerated": res.enumerated,
        "feasible": res.feasible,
        "pattern": {f"{f}:{e}": "".join(map(str, bits)) for (f, e), bits in res.pattern.items()},
    })
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "validate": cmd_validate, "compare": cmd_compare, "oracle": cmd_oracle}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (StageError, NetworkError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
