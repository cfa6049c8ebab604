import math

import numpy as np
import pytest

from aqfpsim.netlist import (
    Capacitor,
    CurrentSource,
    Inductor,
    JosephsonJunction,
    JunctionModel,
    Resistor,
    parse_netlist,
)
from aqfpsim.solver import (
    PHI0,
    SimConfig,
    SimulationError,
    SystemState,
    default_timestep,
    dissipated_energy,
    junction_current,
    read_trace_csv,
    run_transient,
    stored_energy,
    write_trace_csv,
)

RL = """\
I1 0 1 DC 1m
R1 1 0 1
L1 1 0 {l}
.tran {dt} {tstop}
.probe i(L1) v(R1)
"""

JJ_BIAS = """\
.model jj1 jj ic=50u r=6 c=0.1p
I1 0 1 DC 25u
B1 1 0 jj1
.tran 0.05p 200p
.probe phase(B1) v(B1)
"""


def rl_error(dt, l=1e-12, r=1.0):
    tau = l / r
    net = parse_netlist(RL.format(l=repr(l), dt=repr(dt), tstop=repr(5 * tau)))
    tr = run_transient(net)
    exact = 1e-3 * (1 - math.exp(-5.0))
    return tr.current("L1")[-1] - exact, exact


def test_rl_step_response():
    err, exact = rl_error(1e-14)
    assert abs(err) / exact < 1e-3


def test_rl_second_order():
    errs = [abs(rl_error(dt)[0]) for dt in (4e-14, 2e-14, 1e-14)]
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    for ratio in ratios:
        assert 3.5 < ratio < 4.5, ratios


def test_junction_dc_bias_settles():
    tr = run_transient(parse_netlist(JJ_BIAS))
    assert tr.phase("B1")[-1] == pytest.approx(math.asin(0.5), abs=1e-6)
    assert abs(tr.voltage("B1")[-1]) < 1e-9


def test_phase_voltage_consistency():
    tr = run_transient(parse_netlist(JJ_BIAS))
    phi, v, dt = tr.phase("B1"), tr.voltage("B1"), tr.dt
    rate = np.diff(phi) / dt
    expected = math.pi / PHI0 * (v[1:] + v[:-1])  # trapezoidal steps
    scale = np.max(np.abs(expected))
    mismatch = np.abs(rate - expected)[2:] / scale  # skip startup steps
    assert mismatch.max() < 1e-6


@pytest.mark.parametrize(
    "phi,v,dvdt,ic,r,c,expected",
    [
        (0.0, 0.0, 0.0, 50e-6, 6.0, 1e-13, 0.0),
        (math.pi / 2, 0.0, 0.0, 50e-6, 6.0, 1e-13, 50e-6),
        (0.0, 6e-3, 0.0, 50e-6, 6.0, 0.0, 1e-3),
        (0.0, 0.0, 1e6, 50e-6, 6.0, 1e-12, 1e-6),
    ],
)
def test_junction_current(phi, v, dvdt, ic, r, c, expected):
    assert junction_current(phi, v, dvdt, JunctionModel(ic, r, c)) == pytest.approx(expected, abs=1e-18)


def _state(currents=None, phases=None, voltages=None):
    return SystemState(time=0.0, node_voltages=voltages or {}, inductor_currents=currents or {},
                       phases=phases or {}, phase_velocities={})


def test_stored_energy_inductor():
    net = parse_netlist("L1 1 0 2p\n")
    assert stored_energy(net, _state({"L1": 100e-6})) == pytest.approx(1e-20, rel=1e-12)


def test_stored_energy_junction_reference():
    net = parse_netlist(".model j jj ic=50u r=6 c=0.1p\nB1 1 0 j\nL1 1 0 1p\n")
    assert stored_energy(net, _state({"L1": 0.0}, {"B1": 0.0}, {"1": 0.0}), ["B1"]) == 0.0
    e = stored_energy(net, _state({"L1": 0.0}, {"B1": math.pi}, {"1": 0.0}), ["B1"])
    assert e == pytest.approx(PHI0 * 50e-6 / math.pi)


def test_stored_energy_coupled_pair():
    l, k, i = 3e-12, 0.4, 20e-6
    net = parse_netlist(f"L1 1 0 {l!r}\nL2 2 0 {l!r}\nK1 L1 L2 {k}\n.group PAIR L1 L2\n")
    e = stored_energy(net, _state({"L1": i, "L2": i}), ["PAIR"])
    assert e == pytest.approx(l * i * i * (1 + k), rel=1e-12)


def test_stored_energy_unknown_group():
    net = parse_netlist("L1 1 0 2p\n")
    with pytest.raises(KeyError, match="unknown group"):
        stored_energy(net, _state({"L1": 0.0}), ["NOPE"])


def test_dissipated_energy_resistor():
    tr = run_transient(parse_netlist("I1 0 1 DC 1u\nR1 1 0 1\nC1 1 0 1f\n.tran 1p 1.1n 0.1n\n"))
    assert dissipated_energy(tr, ["R1"], (0.1e-9, 1.1e-9)) == pytest.approx(1e-21, rel=1e-6)


def test_dissipated_energy_superconducting_state():
    tr = run_transient(parse_netlist(JJ_BIAS.replace("200p", "400p")))
    assert dissipated_energy(tr, None, (300e-12, 400e-12)) < 1e-30


def test_dissipated_energy_window_checked():
    tr = run_transient(parse_netlist(JJ_BIAS))
    with pytest.raises(ValueError, match="outside"):
        dissipated_energy(tr, None, (0.0, 1e-9))


def test_energy_audit_closes():
    deck = """\
.model j jj ic=50u r=4 c=0.2p
I1 0 1 SIN 0 80u 20g 0
L1 1 2 3p
B1 2 0 j
R1 1 0 10
L2 1 0 5p
.tran 0.05p 400p 100p
"""
    tr = run_transient(parse_netlist(deck))
    a = tr.energy_audit()
    assert a["dissipated"] > 0
    assert a["relative"] < 1e-3


def _kcl_residuals(tr):
    net = tr.netlist
    nodes = [n for n in net.nodes if n != "0"]
    total = {n: np.zeros(len(tr.time)) for n in nodes}
    for el in net.elements:
        if not isinstance(el, (Resistor, Inductor, Capacitor, JosephsonJunction, CurrentSource)):
            continue
        i = tr.current(el.id)
        # current leaves n+ through the element and enters n-
        if el.npos != "0":
            total[el.npos] -= i
        if el.nneg != "0":
            total[el.nneg] += i
    # sample 0 is the all-zero initial condition, not an accepted step
    return np.max([np.max(np.abs(v[1:])) for v in total.values()])


def test_kcl_every_step():
    deck = """\
.model j jj ic=50u r=6 c=0.1p
I1 0 1 SIN 10u 60u 10g 0
L1 1 2 2p
B1 2 0 j
L2 2 3 4p
B2 3 0 j
R1 1 0 30
.tran 0.1p 300p
"""
    tr = run_transient(parse_netlist(deck))
    assert _kcl_residuals(tr) < 1e-12


def test_determinism():
    net = parse_netlist(JJ_BIAS)
    a, b = run_transient(net), run_transient(net)
    assert np.array_equal(a.x, b.x)


def test_trace_csv_round_trip(tmp_path):
    net = parse_netlist(RL.format(l="1p", dt="0.1p", tstop="2p") + ".probe vsum(L1,L1)\n")
    tr = run_transient(net)
    path = tmp_path / "t.csv"
    write_trace_csv(tr, path)
    assert path.read_text().startswith("time,")
    back = read_trace_csv(path)
    assert list(back) == ["time", "i(L1)", "v(R1)", "vsum(L1,L1)"]
    assert np.array_equal(back["i(L1)"], tr.current("L1"))


def test_simconfig_validation():
    with pytest.raises(ValueError):
        SimConfig(dt=0, tstop=1e-9)
    with pytest.raises(ValueError):
        SimConfig(dt=1e-12, tstop=1e-9, tstart=2e-9)
    with pytest.raises(ValueError):
        SimConfig(dt=1e-12, tstop=1e-9, reltol=1.0)
    with pytest.raises(ValueError):
        SimConfig(dt=1e-12, tstop=1e-9, max_iter=0)


def test_default_timestep():
    assert default_timestep(5e9) == pytest.approx(0.05e-12)
    assert default_timestep(1e9) == pytest.approx(0.25e-12)


def test_newton_failure_reported():
    net = parse_netlist(JJ_BIAS)
    with pytest.raises(SimulationError) as info:
        run_transient(net, SimConfig(dt=0.05e-12, tstop=10e-12, max_iter=1, abstol=1e-30, reltol=1e-15))
    assert info.value.time is not None
