"""Energy evaluation of a gate under test from excitation-source work.

The total work of the excitation sources over one steady-state period
(``W_tot``) minus the work done on the circuit under test (``W_CUT``) is the
peripheral work ``W_per``. Peripheral buffers switch adiabatically, so
``W_per = alpha * f + beta`` where ``beta`` is the frequency-independent
interaction energy between the CUT and its neighbours. The CUT dissipation
then follows as ``W_CUT + beta``.

Every estimate is paired with the directly integrated shunt dissipation of
the same junctions, which the simulator knows exactly.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .cells import (
    CellParams,
    IndeterminateStateError,
    Testbench,
    TestbenchPlan,
    build_testbench,
    logic_readout,
)
from .netlist import Probe
from .solver import SimConfig, SimulationError, TransientSolver, TransientTrace

KB_T_4K2 = 1.380649e-23 * 4.2  # J
PERIOD_RTOL = 1e-6
STEADY_RTOL = 5e-3
DC_WORK_RTOL = 1e-3
SWEEP_HEADER = ("f_hz", "W_tot_J", "W_cut_J", "W_per_J", "E_diss_cut_J", "oracle_cut_J")


class SteadyStateError(SimulationError):
    """Work differs between consecutive cycles by more than the tolerance."""


class MissingProbeError(KeyError):
    pass


def _series(trace: TransientTrace, what) -> np.ndarray:
    if isinstance(what, (str, Probe)):
        return trace.probe(what)
    arr = np.asarray(what, dtype=float)
    if arr.shape != trace.time.shape:
        raise ValueError("series does not match the trace time grid")
    return arr


def work_integral(trace: TransientTrace, current, voltage, window, frequency: float) -> float:
    """Trapezoidal integral of ``current * voltage`` over one period.

    ``current`` and ``voltage`` are probe names (``"i(Ix1)"``) or arrays on
    the trace's time grid.
    """
    t0, t1 = window
    period = 1.0 / frequency
    if abs((t1 - t0) - period) > PERIOD_RTOL * period:
        raise ValueError(f"window length {t1 - t0:.6e} s is not one period ({period:.6e} s)")
    i = _series(trace, current)
    v = _series(trace, voltage)
    return trace.integrate(i * v, t0, t1)


@dataclass(frozen=True)
class WorkBreakdown:
    frequency: float
    w_tot: float
    w_cut: float
    w_per: float
    oracle_cut: float
    oracle_per: float
    w_dc: float = 0.0
    steady_mismatch: float = 0.0

    @property
    def oracle_total(self) -> float:
        return self.oracle_cut + self.oracle_per


def _require_probes(trace: TransientTrace, names) -> None:
    have = {p.name for p in trace.netlist.probes}
    for name in names:
        if name not in have:
            raise MissingProbeError(f"missing probe {name}")


def _cut_vsum_probe(trace: TransientTrace) -> str:
    for p in trace.netlist.probes:
        if p.kind == "vsum":
            return p.name
    raise MissingProbeError("missing probe vsum(CUT)")


def compute_works(trace: TransientTrace, tb: Testbench, cycle: int | None = None,
                  check_steady: bool = True) -> WorkBreakdown:
    """Work split for the measurement cycle of a testbench run.

    ``W_tot`` sums ``I_x * V_x`` over every excitation source; ``W_CUT``
    pairs the source driving the CUT with the summed voltage over the CUT
    excitation inductors.
    """
    plan = tb.plan
    f = plan.frequency
    sources = tb.excitation_sources()
    names = [f"i({s})" for s in sources] + [f"v({s})" for s in sources] + ["i(Id)", "v(Id)"]
    _require_probes(trace, names)
    vcut = _cut_vsum_probe(trace)
    cut_source = f"Ix{tb.phase_of[tb.cut[0]][0]}"
    if cycle is None:
        cycle = plan.cycles - 1

    def total(c):
        w = plan.measurement_window(c)
        return sum(work_integral(trace, f"i({s})", f"v({s})", w, f) for s in sources)

    window = plan.measurement_window(cycle)
    w_tot = total(cycle)
    mismatch = 0.0
    if check_steady and cycle >= 1:
        prev = total(cycle - 1)
        mismatch = abs(w_tot - prev) / abs(w_tot)
        if mismatch > STEADY_RTOL:
            raise SteadyStateError(
                f"not in steady state at f={f:g} Hz: cycle work changed by {100 * mismatch:.3f}%",
                time=window[0])
    w_cut = work_integral(trace, f"i({cut_source})", vcut, window, f)
    w_dc = work_integral(trace, "i(Id)", "v(Id)", window, f)
    if abs(w_dc) > DC_WORK_RTOL * abs(w_tot):
        raise SimulationError(f"dc offset source performed work {w_dc:.3e} J")
    return WorkBreakdown(
        frequency=f,
        w_tot=w_tot,
        w_cut=w_cut,
        w_per=w_tot - w_cut,
        oracle_cut=trace.dissipated_energy(["CUT_JJ"], window),
        oracle_per=trace.dissipated_energy(["PER_JJ"], window),
        w_dc=w_dc,
        steady_mismatch=mismatch,
    )


@dataclass(frozen=True)
class LinearFit:
    alpha: float  # J*s
    beta: float  # J
    r2: float

    def __iter__(self):
        return iter((self.alpha, self.beta, self.r2))


def fit_wper(points) -> LinearFit:
    """Ordinary least-squares line through ``(f, W_per)`` points."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or len(pts) < 3:
        raise ValueError("at least 3 points required")
    x, y = pts[:, 0], pts[:, 1]
    if np.ptp(x) == 0:
        raise ValueError("degenerate fit: all frequencies equal")
    alpha, beta = np.polyfit(x, y, 1)
    resid = y - (alpha * x + beta)
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0:
        r2 = 1.0 if ss_res <= 1e-24 * max(1.0, float(y @ y)) else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return LinearFit(float(alpha), float(beta), r2)


def e_diss_cut(breakdown: WorkBreakdown, beta: float) -> float:
    """CUT dissipation ``W_tot - W_per + beta``."""
    return breakdown.w_tot - breakdown.w_per + beta


# ---------------------------------------------------------------------------
# stage decomposition

STAGES = "ABCDE"


@dataclass(frozen=True)
class StageEnergyReport:
    gate: str
    times: tuple  # stage instants A..E (s)
    energies: tuple  # stored energy of the gate at A..E (J)

    @property
    def exc(self) -> float:
        return self.energies[1] - self.energies[0]

    @property
    def fwd(self) -> float:
        return self.energies[2] - self.energies[1]

    @property
    def bwd(self) -> float:
        return self.energies[3] - self.energies[2]

    @property
    def res(self) -> float:
        return self.energies[4] - self.energies[3]

    @property
    def total(self) -> float:
        return self.exc + self.fwd + self.bwd + self.res

    @property
    def peak(self) -> float:
        return max(abs(e) for e in self.energies)


def stage_times(tb: Testbench, gate: str, cycle: int = 0) -> tuple:
    """Instants A..E for ``gate``: midpoints between the clock edges of the
    gate and its two neighbours.

    The edges in order are: previous gate rises, gate rises, previous gate
    falls, next gate rises, gate falls. They are distinct only when each
    phase is driven by its own trapezoid source with a high level lasting
    between a quarter and a half period.
    """
    plan = tb.plan
    if plan.profile != "trapezoid" or not plan.four_source:
        raise ValueError("stage decomposition needs four independent trapezoid sources")
    high = plan.rise + plan.plateau
    if not 0.25 + plan.rise / 2 < high < 0.5 - plan.rise / 2:
        raise ValueError("trapezoid rise+plateau must lie between a quarter and a half period")
    idx = tb.phase_of[gate][0]
    edges = [-0.25, 0.0, high - 0.25, 0.25, high, 0.5]
    mids = [(a + b) / 2 for a, b in zip(edges[:-1], edges[1:])]
    # shift by whole periods so stage A falls inside the requested cycle
    delay = (0.25 * (idx - 1) + mids[0]) % 1.0 - mids[0]
    base = plan.warmup + cycle + delay
    return tuple((base + m) * plan.period for m in mids)


def stage_decomposition(trace: TransientTrace, tb: Testbench, gate: str, cycle: int = 0) -> StageEnergyReport:
    """Sample the gate's stored energy at stages A..E of one cycle."""
    times = stage_times(tb, gate, cycle)
    lo, hi = trace.time[0], trace.time[-1]
    if times[0] < lo or times[-1] > hi:
        raise ValueError(f"stages of cycle {cycle} fall outside the recorded window")
    series = trace.stored_energy([f"E_{gate}"])
    energies = tuple(float(series[trace.index_at(t)]) for t in times)
    return StageEnergyReport(gate, times, energies)


# ---------------------------------------------------------------------------
# frequency sweep


@dataclass(frozen=True)
class SweepRow:
    frequency: float
    breakdown: WorkBreakdown | None = None
    error: str | None = None
    error_kind: str | None = None  # "indeterminate" | "logic" | "solver"
    outputs: tuple = ()

    @property
    def ok(self) -> bool:
        return self.breakdown is not None and self.error is None


@dataclass(frozen=True)
class EnergySweepTable:
    label: str
    rows: tuple
    fit: LinearFit | None
    e_diss_cut: tuple  # per row, nan where the row failed
    fit_error: str | None = None

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([r.frequency for r in self.rows])

    @property
    def ok_rows(self) -> list:
        return [r for r in self.rows if r.ok]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r.breakdown, name) if r.ok else math.nan for r in self.rows])

    def relative_errors(self) -> np.ndarray:
        oracle = self.column("oracle_cut")
        return np.asarray(self.e_diss_cut) / oracle - 1.0

    def cut_fit(self) -> LinearFit:
        """Line through ``(f, E_diss,CUT)``."""
        pts = [(r.frequency, e) for r, e in zip(self.rows, self.e_diss_cut) if r.ok]
        return fit_wper(pts)


def expected_outputs(plan: TestbenchPlan) -> dict:
    if plan.kind == "maj":
        return {f"q{plan.depth - 1}": int(sum(plan.inputs) >= 2)}
    length = 2 * plan.depth + 1 if plan.kind == "buffer" else plan.length
    return {f"c{length - 1}": plan.inputs[0]}


def simulate_row(plan: TestbenchPlan, params: CellParams | None = None) -> SweepRow:
    """Build, run and evaluate one testbench; errors are captured in the row."""
    params = params or CellParams()
    f = plan.frequency
    try:
        tb = build_testbench(params, plan)
        trace = TransientSolver(tb.netlist).run(SimConfig.from_netlist(tb.netlist))
        outputs = {}
        for gate, want in expected_outputs(plan).items():
            got = logic_readout(trace, tb, gate, plan.cycles - 1)
            outputs[gate] = got
            if got != want:
                return SweepRow(f, error=f"logic error at f={f:g} Hz: {gate}={got}, expected {want}",
                                error_kind="logic", outputs=tuple(outputs.items()))
        return SweepRow(f, compute_works(trace, tb), outputs=tuple(outputs.items()))
    except IndeterminateStateError as exc:
        return SweepRow(f, error=f"f={f:g} Hz: {exc}", error_kind="indeterminate")
    except (SimulationError, ValueError, np.linalg.LinAlgError) as exc:
        return SweepRow(f, error=f"f={f:g} Hz: {exc}", error_kind="solver")


def _row_job(args):
    return simulate_row(*args)


def assemble_table(label: str, rows) -> EnergySweepTable:
    """Fit and CUT dissipation estimates over completed rows, sorted by frequency."""
    rows = tuple(sorted(rows, key=lambda r: r.frequency))
    good = [r for r in rows if r.ok]
    fit, fit_error = None, None
    try:
        fit = fit_wper([(r.frequency, r.breakdown.w_per) for r in good])
    except ValueError as exc:
        fit_error = str(exc)
    est = tuple(e_diss_cut(r.breakdown, fit.beta) if (r.ok and fit) else math.nan for r in rows)
    return EnergySweepTable(label, rows, fit, est, fit_error)


def frequency_sweep(plan: TestbenchPlan, grid, params: CellParams | None = None,
                    workers: int = 1) -> EnergySweepTable:
    """One simulation per frequency, then the ``W_per`` fit.

    Rows are independent, so ``workers > 1`` runs them in separate
    processes; the table is identical either way.
    """
    freqs = sorted({float(f) for f in grid})
    if len(freqs) < 3:
        raise ValueError("at least 3 distinct frequencies required")
    jobs = [(replace(plan, frequency=f), params) for f in freqs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_row_job, jobs))
    else:
        rows = [_row_job(j) for j in jobs]
    label = "".join(str(b) for b in plan.inputs)
    return assemble_table(f"{plan.kind} {label}", rows)


def log_grid(fmin: float, fmax: float, points: int) -> np.ndarray:
    if points < 3:
        raise ValueError("at least 3 grid points required")
    if not 0 < fmin < fmax:
        raise ValueError("need 0 < fmin < fmax")
    return np.geomspace(fmin, fmax, points)


# ---------------------------------------------------------------------------
# output


def write_sweep_csv(table: EnergySweepTable, path_or_file) -> None:
    """Sweep rows in the fixed column order; failed rows carry ``nan``."""
    own = isinstance(path_or_file, (str, Path))
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for row, est in zip(table.rows, table.e_diss_cut):
            b = row.breakdown
            vals = (b.w_tot, b.w_cut, b.w_per, est, b.oracle_cut) if row.ok else (math.nan,) * 5
            w.writerow([f"{row.frequency:.17g}"] + [f"{v:.17g}" for v in vals])
    finally:
        if own:
            fh.close()


def read_sweep_csv(path_or_file) -> dict[str, np.ndarray]:
    text = Path(path_or_file).read_text() if isinstance(path_or_file, (str, Path)) else path_or_file.read()
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != SWEEP_HEADER:
        raise ValueError(f"unexpected sweep header {header}")
    data = np.array([[float(v) for v in row] for row in reader if row], dtype=float).reshape(-1, len(header))
    return {name: data[:, k] for k, name in enumerate(header)}


def format_report(table: EnergySweepTable) -> str:
    out = [f"energy sweep: {table.label}"]
    if table.fit is None:
        out.append(f"fit: unavailable ({table.fit_error})")
    else:
        a, b, r2 = table.fit
        out.append(f"alpha (E_diss,per / f) = {a:.6e} J s")
        out.append(f"beta (Delta E_per)     = {b:.6e} J")
        out.append(f"R^2                    = {r2:.6f}")
    out.append(f"k_B T at 4.2 K         = {KB_T_4K2:.4e} J")
    out.append("")
    out.append(f"{'f_hz':>12} {'W_tot_J':>12} {'W_cut_J':>12} {'W_per_J':>12} "
               f"{'E_diss_cut_J':>13} {'oracle_J':>12} {'rel_err':>8} {'E/kBT':>9}")
    for row, est in zip(table.rows, table.e_diss_cut):
        if not row.ok:
            out.append(f"{row.frequency:12.5e} FAILED: {row.error}")
            continue
        b = row.breakdown
        rel = est / b.oracle_cut - 1.0 if b.oracle_cut else math.nan
        out.append(f"{row.frequency:12.5e} {b.w_tot:12.5e} {b.w_cut:12.5e} {b.w_per:12.5e} "
                   f"{est:13.5e} {b.oracle_cut:12.5e} {100 * rel:7.2f}% {est / KB_T_4K2:9.2f}")
    return "\n".join(out) + "\n"
