"""Command-line front end.

    aqfpsim run deck.cir --out trace.csv
    aqfpsim energy maj --inputs 101 --fmin 1e9 --fmax 1e10 --points 10
    aqfpsim audit maj --inputs 111 --freq 5e9

Exit status: 0 success, 1 unreadable or unparsable input, 2 validation
failure (or usage error), 3 solver failure, 4 indeterminate logic state,
5 energy audit out of tolerance. Diagnostics go to stderr, data to files.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .cells import CellParams, TestbenchPlan, build_testbench, load_params
from .energy import format_report, frequency_sweep, log_grid, write_sweep_csv
from .netlist import NetlistError, parse_netlist, validate
from .solver import SimConfig, SimulationError, TransientSolver, write_trace_csv

EXIT_OK, EXIT_INPUT, EXIT_INVALID, EXIT_SOLVER, EXIT_INDETERMINATE, EXIT_AUDIT = range(6)
AUDIT_RTOL = 1e-3


def _err(msg: str) -> None:
    print(f"aqfpsim: {msg}", file=sys.stderr)


def _load_netlist(path: str):
    """Parse and validate a deck; returns (netlist, exit code)."""
    try:
        net = parse_netlist(Path(path).read_text())
    except OSError as exc:
        _err(f"cannot read {path}: {exc.strerror or exc}")
        return None, EXIT_INPUT
    except NetlistError as exc:
        _err(f"{path}: {exc}")
        return None, EXIT_INPUT
    problems = validate(net)
    if net.tran is None:
        _err(f"{path}: no .tran directive")
        return None, EXIT_INVALID
    if problems:
        for v in problems:
            _err(f"{path}: {v}")
        return None, EXIT_INVALID
    return net, EXIT_OK


def _simulate(net):
    try:
        return TransientSolver(net, check=False).run(SimConfig.from_netlist(net)), EXIT_OK
    except SimulationError as exc:
        _err(f"simulation failed: {exc}")
        return None, EXIT_SOLVER


def cmd_run(args) -> int:
    net, code = _load_netlist(args.netlist)
    if net is None:
        return code
    trace, code = _simulate(net)
    if trace is None:
        return code
    write_trace_csv(trace, args.out)
    return EXIT_OK


def _params(args) -> CellParams | None:
    if args.params is None:
        return CellParams()
    try:
        return load_params(args.params)
    except (OSError, ValueError) as exc:
        _err(f"parameter file {args.params}: {exc}")
        return None


def _plan(args, parser, frequency: float) -> TestbenchPlan:
    bits = args.inputs
    arity = 3 if args.gate == "maj" else 1
    if len(bits) != arity or set(bits) - {"0", "1"}:
        parser.error(f"{args.gate} takes {arity} input bit(s), got {bits!r}")
    try:
        return TestbenchPlan(kind=args.gate, inputs=tuple(int(b) for b in bits), depth=args.depth,
                             frequency=frequency, warmup=args.warmup, dt=args.dt)
    except ValueError as exc:
        parser.error(str(exc))


def cmd_energy(args, parser) -> int:
    if args.points < 3:
        parser.error("--points must be at least 3")
    if not 0 < args.fmin < args.fmax:
        parser.error("need 0 < --fmin < --fmax")
    plan = _plan(args, parser, args.fmin)
    params = _params(args)
    if params is None:
        return EXIT_INPUT
    table = frequency_sweep(plan, log_grid(args.fmin, args.fmax, args.points), params, workers=args.workers)
    out = Path(args.out)
    report = Path(args.report) if args.report else out.with_suffix(".txt")
    write_sweep_csv(table, out)
    report.write_text(format_report(table))
    code = EXIT_OK
    for row in table.rows:
        if row.error is None:
            continue
        _err(row.error)
        if row.error_kind == "indeterminate":
            code = EXIT_INDETERMINATE
        elif code == EXIT_OK:
            code = EXIT_SOLVER
    if table.fit is not None:
        _err(f"{table.label}: alpha={table.fit.alpha:.4e} J s, beta={table.fit.beta:.4e} J, R^2={table.fit.r2:.5f}")
    return code


def cmd_audit(args, parser) -> int:
    if args.gate in ("maj", "buffer"):
        plan = _plan(args, parser, args.freq)
        params = _params(args)
        if params is None:
            return EXIT_INPUT
        net = build_testbench(params, plan).netlist
        window = plan.measurement_window()
    else:
        net, code = _load_netlist(args.gate)
        if net is None:
            return code
        window = None
    trace, code = _simulate(net)
    if trace is None:
        return code
    a = trace.energy_audit(window)
    lines = [f"{k} = {a[k]:.6e}" for k in ("work", "stored_change", "dissipated", "residual", "relative")]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    _err("energy audit: " + ", ".join(lines))
    if a["relative"] >= AUDIT_RTOL:
        _err(f"audit residual {a['relative']:.3e} exceeds {AUDIT_RTOL:g}")
        return EXIT_AUDIT
    return EXIT_OK


def _testbench_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--inputs", default=None, help="input bits, e.g. 101 (default: all ones)")
    p.add_argument("--depth", type=int, default=3, help="peripheral buffers per port")
    p.add_argument("--warmup", type=int, default=3, help="warm-up excitation cycles")
    p.add_argument("--dt", type=float, default=None, help="timestep in seconds (default min(T/4000, 0.25 ps))")
    p.add_argument("--params", default=None, help="cell parameter file (key = value)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aqfpsim", description="AQFP circuit simulation and energy evaluation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a netlist and write its probes as CSV")
    p.add_argument("netlist")
    p.add_argument("--out", default="trace.csv")

    p = sub.add_parser("energy", help="frequency sweep of a gate under test")
    p.add_argument("gate", choices=("buffer", "maj"))
    _testbench_flags(p)
    p.add_argument("--fmin", type=float, default=1e9)
    p.add_argument("--fmax", type=float, default=1e10)
    p.add_argument("--points", type=int, default=10)
    p.add_argument("--out", default="sweep.csv")
    p.add_argument("--report", default=None, help="fit report path (default: --out with .txt)")
    p.add_argument("--workers", type=int, default=1, help="parallel simulation processes")

    p = sub.add_parser("audit", help="energy audit of a testbench or netlist")
    p.add_argument("gate", help="'maj', 'buffer' or a netlist path")
    _testbench_flags(p)
    p.add_argument("--freq", type=float, default=5e9)
    p.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "inputs", "x") is None:
        args.inputs = "111" if args.gate == "maj" else "1"
    if args.command == "run":
        return cmd_run(args)
    if args.command == "energy":
        return cmd_energy(args, parser)
    return cmd_audit(args, parser)


if __name__ == "__main__":
    sys.exit(main())
