import copy
from dataclasses import replace
import io
import math

import numpy as np
import pytest

from aqfpsim.cells import CellParams, TestbenchPlan
from aqfpsim.energy import (
    KB_T_4K2,
    SWEEP_HEADER,
    EnergySweepTable,
    MissingProbeError,
    SteadyStateError,
    SweepRow,
    WorkBreakdown,
    assemble_table,
    compute_works,
    e_diss_cut,
    fit_wper,
    format_report,
    frequency_sweep,
    log_grid,
    read_sweep_csv,
    simulate_row,
    stage_decomposition,
    stage_times,
    work_integral,
    write_sweep_csv,
)
from aqfpsim.netlist import Netlist, parse_netlist
from aqfpsim.solver import run_transient

from conftest import simulate

F = 10e9


@pytest.fixture(scope="module")
def grid_trace():
    # any trace serves as a time grid for the analytic integrals
    return run_transient(parse_netlist("I1 0 1 DC 1u\nR1 1 0 1\n.tran 0.1p 200p 50p\n"))


def test_work_integral_zero(grid_trace):
    t = grid_trace.time
    assert work_integral(grid_trace, np.zeros_like(t), np.ones_like(t), (50e-12, 150e-12), F) == 0.0


def test_work_integral_orthogonal(grid_trace):
    t = grid_trace.time
    w = 2 * np.pi * F * t
    val = work_integral(grid_trace, 1e-4 * np.sin(w), 1e-3 * np.cos(w), (50e-12, 150e-12), F)
    assert abs(val) < 1e-30


def test_work_integral_analytic(grid_trace):
    t = grid_trace.time
    w = 2 * np.pi * F * t
    i0, v0 = 1e-4, 1e-3
    val = work_integral(grid_trace, i0 * np.sin(w), v0 * np.sin(w), (50e-12, 150e-12), F)
    assert val == pytest.approx(i0 * v0 / (2 * F), rel=1e-9)


def test_work_integral_window_checks(grid_trace):
    t = grid_trace.time
    with pytest.raises(ValueError, match="not one period"):
        work_integral(grid_trace, t, t, (50e-12, 140e-12), F)
    with pytest.raises(ValueError, match="outside"):
        work_integral(grid_trace, t, t, (0.0, 100e-12), F)


def test_fit_exact_line():
    a, b, r2 = fit_wper([(1, 3), (2, 5), (3, 7)])
    assert a == pytest.approx(2) and b == pytest.approx(1) and r2 == pytest.approx(1)


def test_fit_constant():
    a, b, r2 = fit_wper([(1, 4), (2, 4), (3, 4)])
    assert a == pytest.approx(0, abs=1e-12) and b == pytest.approx(4)


def test_fit_errors():
    with pytest.raises(ValueError, match="at least 3"):
        fit_wper([(1, 1), (2, 2)])
    with pytest.raises(ValueError, match="degenerate"):
        fit_wper([(1, 1), (1, 2), (1, 3)])


def test_fit_matches_numpy_on_noisy_data():
    rng = np.random.default_rng(1)
    f = np.geomspace(1e9, 1e10, 10)
    y = 4e-30 * f + 1.5e-20 + rng.normal(0, 1e-22, f.size)
    fit = fit_wper(zip(f, y))
    ref = np.polynomial.polynomial.polyfit(f, y, 1)
    assert fit.beta == pytest.approx(ref[0], rel=1e-9)
    assert fit.alpha == pytest.approx(ref[1], rel=1e-9)
    assert 0.99 < fit.r2 <= 1


def test_e_diss_cut_formula():
    b = WorkBreakdown(5e9, w_tot=5e-20, w_cut=-2e-20, w_per=7e-20, oracle_cut=0.0, oracle_per=0.0)
    assert e_diss_cut(b, 3e-20) == pytest.approx(1e-20)


def test_kbt_constant():
    assert KB_T_4K2 == pytest.approx(5.799e-23, rel=1e-4)


MAJ5 = TestbenchPlan(kind="maj", inputs=(1, 1, 1), frequency=5e9)


def test_compute_works_maj():
    tb, tr = simulate(MAJ5)
    b = compute_works(tr, tb)
    assert b.w_per + b.w_cut == b.w_tot
    assert b.w_tot > 0
    assert b.w_cut < 0
    assert abs(b.w_dc) < 1e-3 * b.w_tot
    # all dissipation is in junction shunts and the work covers it
    assert b.w_tot == pytest.approx(b.oracle_total, rel=5e-3)
    window = MAJ5.measurement_window()
    all_work = sum(tr.source_work(s, window) for s in tb.sources)
    assert tr.dissipated_energy(None, window) == pytest.approx(all_work, rel=1e-3)


def test_compute_works_missing_probe():
    tb, tr = simulate(MAJ5)
    stripped = copy.copy(tr)
    net = tr.netlist
    stripped.netlist = Netlist(net.elements, net.models, net.tran,
                               tuple(p for p in net.probes if p.name != "v(Ix2)"), net.groups, net.title)
    with pytest.raises(MissingProbeError, match="v\\(Ix2\\)"):
        compute_works(stripped, tb)


def test_compute_works_detects_transient():
    tb, tr = simulate(MAJ5)
    bent = copy.copy(tr)
    bent.x = tr.x.copy()
    first = tr.window_slice(*MAJ5.measurement_window(0))
    bent.x[first] *= 1.1
    with pytest.raises(SteadyStateError):
        compute_works(bent, tb)


STAGE_PLAN = TestbenchPlan(kind="chain", inputs=(1,), length=7, frequency=5e9, profile="trapezoid",
                           rise=0.075, plateau=0.3, four_source=True)


def test_stage_decomposition_signs():
    tb, tr = simulate(STAGE_PLAN)
    r = stage_decomposition(tr, tb, "c3")
    assert r.exc > 0 and r.fwd > 0 and r.bwd < 0 and r.res < 0
    assert abs(r.total) < 0.01 * r.peak
    assert list(r.times) == sorted(r.times)


def test_stage_decomposition_needs_trapezoid_sources():
    tb, _ = simulate(TestbenchPlan(kind="chain", inputs=(1,), length=7, frequency=5e9))
    with pytest.raises(ValueError, match="trapezoid"):
        stage_times(tb, "c3")


def test_stage_decomposition_window():
    tb, tr = simulate(STAGE_PLAN)
    with pytest.raises(ValueError, match="outside"):
        stage_decomposition(tr, tb, "c3", cycle=5)


def _fake_row(f, ok=True):
    if not ok:
        return SweepRow(f, error="boom", error_kind="solver")
    b = WorkBreakdown(f, w_tot=3e-30 * f, w_cut=1e-30 * f - 1e-20, w_per=2e-30 * f + 1e-20,
                      oracle_cut=1e-30 * f, oracle_per=2e-30 * f)
    return SweepRow(f, b)


def test_assemble_table_order_insensitive():
    rows = [_fake_row(f) for f in (1e9, 2e9, 4e9, 8e9)]
    a = assemble_table("x", rows)
    b = assemble_table("x", rows[::-1])
    assert a == b
    assert list(a.frequencies) == sorted(a.frequencies)
    assert a.fit.beta == pytest.approx(1e-20)
    assert np.allclose(a.relative_errors(), 0, atol=1e-9)


def test_sweep_csv_round_trip():
    table = assemble_table("x", [_fake_row(1e9), _fake_row(2e9), _fake_row(3e9), _fake_row(4e9, ok=False)])
    buf = io.StringIO()
    write_sweep_csv(table, buf)
    assert buf.getvalue().splitlines()[0] == ",".join(SWEEP_HEADER)
    buf.seek(0)
    data = read_sweep_csv(buf)
    assert np.array_equal(data["f_hz"], table.frequencies)
    assert np.array_equal(data["W_tot_J"][:3], table.column("w_tot")[:3])
    assert np.isnan(data["E_diss_cut_J"][3])
    report = format_report(table)
    for key in ("alpha", "beta", "R^2", "k_B T", "FAILED"):
        assert key in report


def test_log_grid():
    g = log_grid(1e9, 1e10, 10)
    assert len(g) == 10 and g[0] == pytest.approx(1e9) and g[-1] == pytest.approx(1e10)
    with pytest.raises(ValueError):
        log_grid(1e9, 1e10, 2)


def test_sweep_rows_independent():
    plan = TestbenchPlan(kind="buffer", inputs=(1,), warmup=2)
    grid = [6e9, 8e9, 1e10]
    table = frequency_sweep(plan, grid[::-1])
    assert list(table.frequencies) == grid
    again = simulate_row(replace(plan, frequency=8e9))
    assert again == table.rows[1]
    b = table.rows[0].breakdown
    assert b.w_cut == pytest.approx(b.oracle_cut, rel=0.1)


def test_sweep_reports_bad_rows():
    plan = TestbenchPlan(kind="buffer", inputs=(1,), warmup=2)
    # too little excitation flux to form a double well: no logic state
    weak = CellParams(phi_ac=0.02, phi_dc=0.02, iin=1e-6)
    table = frequency_sweep(plan, [6e9, 8e9, 1e10], weak)
    assert all(r.error_kind == "indeterminate" for r in table.rows)
    assert table.fit is None
