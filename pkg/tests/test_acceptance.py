"""Acceptance criteria 1-9, each at its stated tolerance.

Every test records one PASS/FAIL line; the lines are printed in the pytest
terminal summary (see conftest.py) and when this file runs as a script.
"""

import functools
import itertools
import math

import numpy as np
import pytest

from aqfpsim.cells import TestbenchPlan, build_testbench, logic_readout, reference_params
from aqfpsim.energy import frequency_sweep, log_grid, stage_decomposition
from aqfpsim.netlist import parse_netlist
from aqfpsim.solver import run_transient

RESULTS = []
GRID = log_grid(1e9, 1e10, 10)
REFERENCE_BETA = {(1, 1, 1): 1.48e-20, (1, 0, 1): 2.57e-20}


def record(n, title, ok, detail):
    RESULTS.append(f"criterion {n} ({title}): {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


@functools.lru_cache(maxsize=None)
def sweep(kind, bits):
    table = frequency_sweep(TestbenchPlan(kind=kind, inputs=bits), GRID, reference_params())
    failed = [r.error for r in table.rows if not r.ok]
    assert not failed, failed
    return table


def _rl_error(dt):
    deck = f"I1 0 1 DC 1m\nR1 1 0 1\nL1 1 0 1p\n.tran {dt!r} 5p\n"
    i = run_transient(parse_netlist(deck)).current("L1")[-1]
    exact = 1e-3 * (1 - math.exp(-5))
    return abs(i - exact) / exact


def test_criterion_1_solver_oracles():
    rl = _rl_error(1e-14)
    jj = run_transient(parse_netlist(
        ".model j jj ic=50u r=6 c=0.1p\nI1 0 1 DC 25u\nB1 1 0 j\n.tran 0.05p 200p\n"))
    phi_err = abs(jj.phase("B1")[-1] - math.asin(0.5))
    v_end = abs(jj.voltage("B1")[-1])
    e = [_rl_error(dt) for dt in (4e-14, 2e-14, 1e-14)]
    ratios = (e[0] / e[1], e[1] / e[2])
    ok = rl < 1e-3 and phi_err < 1e-6 and v_end < 1e-9 and all(3.5 < r < 4.5 for r in ratios)
    record(1, "solver oracles", ok,
           f"RL err {rl:.2e}, |phi-asin 0.5| {phi_err:.1e}, |V| {v_end:.1e}, halving ratios "
           f"{ratios[0]:.2f}/{ratios[1]:.2f}")


def test_criterion_2_energy_audit():
    plan = TestbenchPlan(kind="maj", inputs=(1, 0, 1), frequency=5e9)
    tb = build_testbench(reference_params(), plan)
    audit = run_transient(tb.netlist).energy_audit(plan.measurement_window())
    record(2, "energy audit", audit["relative"] < 1e-3,
           f"|W - dE - E_R| / W = {audit['relative']:.2e} (W = {audit['work']:.3e} J)")


def test_criterion_3_majority_truth_table():
    bad = []
    for bits in itertools.product((0, 1), repeat=3):
        plan = TestbenchPlan(kind="maj", inputs=bits, frequency=5e9)
        tb = build_testbench(reference_params(), plan)
        tr = run_transient(tb.netlist)
        q = logic_readout(tr, tb, f"q{plan.depth - 1}", plan.cycles - 1)
        if q != int(sum(bits) >= 2):
            bad.append(bits)
    record(3, "majority logic at 5 GHz", not bad, f"8 vectors, mismatches: {bad or 'none'}")


def test_criterion_4_sign_structure():
    lines, ok = [], True
    for bits in REFERENCE_BETA:
        t = sweep("maj", bits)
        w_tot, w_cut = t.column("w_tot"), t.column("w_cut")
        ok &= bool(np.all(w_tot > 0) and np.all(w_cut < 0))
        lines.append(f"{''.join(map(str, bits))}: min W_tot {w_tot.min():.2e}, max W_cut {w_cut.max():.2e}")
    record(4, "W_tot > 0, W_CUT < 0", ok, "; ".join(lines))


def test_criterion_5_method_matches_oracle():
    lines, ok = [], True
    for bits in REFERENCE_BETA:
        err = sweep("maj", bits).relative_errors()
        worst = float(np.max(np.abs(err)))
        ok &= worst <= 0.10
        lines.append(f"{''.join(map(str, bits))}: max |err| {100 * worst:.2f}%")
    record(5, "method vs oracle within 10%", ok, "; ".join(lines))


def test_criterion_6_adiabatic_separation():
    t111, t101 = sweep("maj", (1, 1, 1)), sweep("maj", (1, 0, 1))
    c111, c101 = t111.cut_fit(), t101.cut_fit()
    e10 = t111.e_diss_cut[-1]
    r2 = (t111.fit.r2, t101.fit.r2)
    ok = (abs(c111.beta) <= 0.1 * e10 and c101.beta > 0 and c101.beta > c111.beta and min(r2) > 0.99)
    record(6, "adiabatic / non-adiabatic separation", ok,
           f"111 intercept {c111.beta:.2e} J vs E(10 GHz) {e10:.2e} J; 101 intercept {c101.beta:.2e} J; "
           f"W_per R^2 {r2[0]:.5f}/{r2[1]:.5f}")


def test_criterion_7_delta_e_per_magnitude():
    lines, ok = [], True
    for bits, ref in REFERENCE_BETA.items():
        beta = sweep("maj", bits).fit.beta
        ok &= ref / 3 <= beta <= 3 * ref
        lines.append(f"{''.join(map(str, bits))}: beta {beta:.3e} J (ref {ref:.2e} J, ratio {beta / ref:.2f})")
    record(7, "Delta E_per within factor 3", ok, "; ".join(lines))


def test_criterion_8_buffer_sanity():
    t = sweep("buffer", (1,))
    w_per_max = t.column("w_per")[-1]
    rel = np.abs(t.column("w_cut") / t.column("oracle_cut") - 1)
    ok = abs(t.fit.beta) <= 0.05 * w_per_max and float(rel.max()) <= 0.10
    record(8, "buffer as CUT", ok,
           f"|beta|/W_per(fmax) {abs(t.fit.beta) / w_per_max:.2%}, max |W_CUT/oracle - 1| {rel.max():.2%}")


def test_criterion_9_stage_decomposition():
    plan = TestbenchPlan(kind="chain", inputs=(1,), length=7, frequency=5e9, profile="trapezoid",
                         rise=0.075, plateau=0.3, four_source=True)
    tb = build_testbench(reference_params(), plan)
    r = stage_decomposition(run_transient(tb.netlist), tb, "c3")
    a = abs(r.total) / r.peak
    b = abs(r.exc + r.res) / abs(r.exc)
    c = abs(r.fwd + r.bwd) / abs(r.exc)
    record(9, "stage decomposition", a < 0.01 and b < 0.05 and c < 0.05,
           f"|dE_i|/peak {a:.2e}, |exc+res|/|exc| {b:.2e}, |fwd+bwd|/|exc| {c:.2e}")


if __name__ == "__main__":
    import sys

    code = pytest.main([__file__, "-q"])
    print("\n".join(RESULTS))
    sys.exit(code)
