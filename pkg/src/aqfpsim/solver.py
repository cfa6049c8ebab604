"""Nonlinear transient analysis with an exact energy audit.

Unknowns are node voltages, inductor branch currents and junction phases
(modified nodal analysis). Every element is discretized with the
trapezoidal rule; the first two steps and the two steps after a source
breakpoint use backward Euler so that trapezoidal ringing on purely
inductive, current-driven nodes does not start.

The junctions (RCSJ: ``Ic sin(phi) + V/R + C dV/dt``) are the only
nonlinear elements. Their supercurrent is split into a linear part
``Ic*phi`` that lives in the factored system matrix and a remainder
``Ic*(sin(phi) - phi)``; Newton's method then runs on the junction phases
alone through the precomputed response ``A^-1 U`` of the linear network.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .netlist import (
    GROUND,
    Capacitor,
    CurrentSource,
    Inductor,
    JosephsonJunction,
    JunctionModel,
    MutualCoupling,
    Netlist,
    Probe,
    Resistor,
    expand_members,
    inductance_matrix,
    validate,
)

PHI0 = 2.067833848e-15  # Wb, h/2e
KB_4K2 = 1.380649e-23 * 4.2  # J


class SimulationError(RuntimeError):
    """Solver failure (non-convergence or non-finite state)."""

    def __init__(self, message: str, time: float | None = None):
        self.time = time
        if time is not None:
            message = f"{message} at t={time:.6e} s"
        super().__init__(message)


@dataclass(frozen=True)
class SimConfig:
    dt: float
    tstop: float
    tstart: float = 0.0
    reltol: float = 1e-9
    abstol: float = 1e-12  # A, KCL residual
    max_iter: int = 50

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not (self.tstop > self.tstart >= 0):
            raise ValueError("need tstop > tstart >= 0")
        if not (0 < self.reltol < 1):
            raise ValueError("reltol must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")

    @classmethod
    def from_netlist(cls, netlist: Netlist, **overrides) -> "SimConfig":
        if netlist.tran is None:
            raise ValueError("netlist has no .tran directive")
        t = netlist.tran
        return cls(dt=t.dt, tstop=t.tstop, tstart=t.tstart, **overrides)


def junction_current(phi, v, dvdt, model: JunctionModel):
    """RCSJ branch current: supercurrent + shunt + displacement."""
    return model.ic * np.sin(phi) + v / model.r + model.c * dvdt


@dataclass
class SystemState:
    """Snapshot of the circuit at one accepted time point."""

    time: float
    node_voltages: dict
    inductor_currents: dict
    phases: dict
    phase_velocities: dict


class _Layout:
    """Index bookkeeping shared by the solver and its traces."""

    def __init__(self, netlist: Netlist):
        self.netlist = netlist
        self.node_names = [n for n in netlist.nodes if n != GROUND]
        self.node_index = {n: i for i, n in enumerate(self.node_names)}
        self.inductors = netlist.of_kind(Inductor)
        self.inductor_ids, self.lmat = inductance_matrix(netlist)
        self.ind_index = {el.id: i for i, el in enumerate(self.inductors)}
        self.junctions = netlist.of_kind(JosephsonJunction)
        self.jj_index = {el.id: i for i, el in enumerate(self.junctions)}
        self.models = [netlist.models[j.model] for j in self.junctions]
        self.resistors = netlist.of_kind(Resistor)
        self.capacitors = netlist.of_kind(Capacitor)
        self.sources = netlist.of_kind(CurrentSource)
        self.src_index = {el.id: i for i, el in enumerate(self.sources)}
        self.couplings = netlist.of_kind(MutualCoupling)
        self.nn = len(self.node_names)
        self.nl = len(self.inductors)
        self.nj = len(self.junctions)
        self.dim = self.nn + self.nl + self.nj
        self.ic = np.array([m.ic for m in self.models])
        self.jr = np.array([m.r for m in self.models])
        self.jc = np.array([m.c for m in self.models])
        # capacitive branches: junction capacitances first, then capacitors
        self.cap_pos = [self._ni(j.npos) for j in self.junctions] + [self._ni(c.npos) for c in self.capacitors]
        self.cap_neg = [self._ni(j.nneg) for j in self.junctions] + [self._ni(c.nneg) for c in self.capacitors]
        self.cap_val = np.concatenate([self.jc, [c.farads for c in self.capacitors]]).astype(float)

    def _ni(self, node: str) -> int:
        return -1 if node == GROUND else self.node_index[node]

    def incidence(self, elements) -> sp.csr_matrix:
        """Matrix D with branch voltage = D @ node_voltages."""
        rows, cols, vals = [], [], []
        for k, el in enumerate(elements):
            for node, sign in ((el.npos, 1.0), (el.nneg, -1.0)):
                i = self._ni(node)
                if i >= 0:
                    rows.append(k)
                    cols.append(i)
                    vals.append(sign)
        return sp.csr_matrix((vals, (rows, cols)), shape=(len(elements), self.nn))


class _System:
    """Factored linear part of the theta-discretized MNA system."""

    def __init__(self, lay: _Layout, dt: float, theta: float):
        self.dt, self.theta = dt, theta
        nn, nl, nj = lay.nn, lay.nl, lay.nj
        rows, cols, vals = [], [], []

        def add(r, c, v):
            if r >= 0 and c >= 0:
                rows.append(r)
                cols.append(c)
                vals.append(v)

        def stamp_g(a, b, g):
            add(a, a, g)
            add(b, b, g)
            add(a, b, -g)
            add(b, a, -g)

        for r in lay.resistors:
            stamp_g(lay._ni(r.npos), lay._ni(r.nneg), 1.0 / r.ohms)
        gcap = lay.cap_val / (theta * dt)
        for a, b, g in zip(lay.cap_pos, lay.cap_neg, gcap):
            if g:
                stamp_g(a, b, g)
        for k, el in enumerate(lay.inductors):
            a, b = lay._ni(el.npos), lay._ni(el.nneg)
            col = nn + k
            add(a, col, 1.0)
            add(b, col, -1.0)
            # theta*V - (1/dt) * sum_j M_kj I_j = history
            add(nn + k, a, theta)
            add(nn + k, b, -theta)
        lm = sp.coo_matrix(lay.lmat)
        for i, j, m in zip(lm.row, lm.col, lm.data):
            add(nn + i, nn + j, -m / dt)
        kphi = 2.0 * math.pi * dt / PHI0
        for k, el in enumerate(lay.junctions):
            a, b = lay._ni(el.npos), lay._ni(el.nneg)
            col = nn + nl + k
            stamp_g(a, b, 1.0 / lay.jr[k])
            add(a, col, lay.ic[k])
            add(b, col, -lay.ic[k])
            add(col, col, 1.0)
            add(col, a, -theta * kphi)
            add(col, b, theta * kphi)
        mat = sp.csc_matrix((vals, (rows, cols)), shape=(lay.dim, lay.dim))
        try:
            self.lu = spla.splu(mat)
        except RuntimeError as exc:
            raise SimulationError(f"singular circuit matrix ({exc}); check for floating nodes") from None
        # response of the linear network to unit junction supercurrent injections
        u = np.zeros((lay.dim, nj))
        for k, el in enumerate(lay.junctions):
            a, b = lay._ni(el.npos), lay._ni(el.nneg)
            if a >= 0:
                u[a, k] = 1.0
            if b >= 0:
                u[b, k] = -1.0
        self.z = self.lu.solve(u) if nj else u
        self.g = self.z[nn + nl:, :] if nj else np.zeros((0, 0))


class TransientTrace:
    """Recorded window of a transient run.

    ``x`` holds the full solution vector per accepted step (node voltages,
    inductor currents, junction phases) and ``icap`` the capacitive branch
    currents (junction capacitances, then capacitors).
    """

    def __init__(self, netlist: Netlist, layout: _Layout, time, x, icap, config: SimConfig, kcl_residual, newton_iters):
        self.netlist = netlist
        self._lay = layout
        self.time = time
        self.x = x
        self.icap = icap
        self.config = config
        self.kcl_residual = kcl_residual
        self.newton_iters = newton_iters

    # -- raw quantities ---------------------------------------------------
    @property
    def dt(self) -> float:
        return self.config.dt

    def _v(self, node: str) -> np.ndarray:
        i = self._lay._ni(node)
        return np.zeros(len(self.time)) if i < 0 else self.x[:, i]

    def node_voltage(self, node: str) -> np.ndarray:
        return self._v(node)

    def voltage(self, ident: str) -> np.ndarray:
        """Branch voltage v(n+) - v(n-); for current sources the voltage
        the source develops in its delivery direction, v(n-) - v(n+)."""
        el = self.netlist.element(ident)
        if isinstance(el, CurrentSource):
            return self._v(el.nneg) - self._v(el.npos)
        return self._v(el.npos) - self._v(el.nneg)

    def phase(self, ident: str) -> np.ndarray:
        return self.x[:, self._lay.nn + self._lay.nl + self._lay.jj_index[ident]]

    def current(self, ident: str) -> np.ndarray:
        el = self.netlist.element(ident)
        lay = self._lay
        if isinstance(el, Inductor):
            return self.x[:, lay.nn + lay.ind_index[ident]]
        if isinstance(el, CurrentSource):
            return np.asarray(el.waveform(self.time), dtype=float)
        if isinstance(el, Resistor):
            return self.voltage(ident) / el.ohms
        if isinstance(el, JosephsonJunction):
            k = lay.jj_index[ident]
            return lay.ic[k] * np.sin(self.phase(ident)) + self.voltage(ident) / lay.jr[k] + self.icap[:, k]
        if isinstance(el, Capacitor):
            k = lay.nj + lay.capacitors.index(el)
            return self.icap[:, k]
        raise KeyError(f"no current for {ident!r}")

    def power(self, ident: str) -> np.ndarray:
        """Instantaneous power absorbed by an element (delivered, for sources)."""
        return self.voltage(ident) * self.current(ident)

    def vsum(self, members) -> np.ndarray:
        ids = expand_members(self.netlist, members)
        return np.sum([self.voltage(i) for i in ids], axis=0)

    def probe(self, probe: Probe | str) -> np.ndarray:
        if isinstance(probe, str):
            probe = _probe_from_name(probe)
        if probe.kind == "i":
            return self.current(probe.targets[0])
        if probe.kind == "v":
            return self.voltage(probe.targets[0])
        if probe.kind == "p":
            return self.power(probe.targets[0])
        if probe.kind == "phase":
            return self.phase(probe.targets[0])
        if probe.kind == "vsum":
            return self.vsum(probe.targets)
        raise KeyError(probe.kind)

    def probe_table(self) -> dict[str, np.ndarray]:
        return {p.name: self.probe(p) for p in self.netlist.probes}

    # -- energy -----------------------------------------------------------
    def resistive_power(self, subset=None) -> np.ndarray:
        """Sum of V^2/R over resistors and junction shunts in ``subset``."""
        members = None if subset is None else set(expand_members(self.netlist, subset))
        total = np.zeros(len(self.time))
        for el in self._lay.resistors:
            if members is None or el.id in members:
                total += self.voltage(el.id) ** 2 / el.ohms
        for k, el in enumerate(self._lay.junctions):
            if members is None or el.id in members:
                total += self.voltage(el.id) ** 2 / self._lay.jr[k]
        return total

    def source_power(self, ident: str) -> np.ndarray:
        return self.power(ident)

    def stored_energy(self, subset=None) -> np.ndarray:
        """Stored energy time series over ``subset`` (default: whole circuit).

        A coupling contributes when its own id is listed or both of its
        inductors are in the subset.
        """
        lay = self._lay
        nl0 = lay.nn
        members = None if subset is None else set(expand_members(self.netlist, subset))
        cur = self.x[:, nl0:nl0 + lay.nl]
        total = np.zeros(len(self.time))
        for k, el in enumerate(lay.inductors):
            if members is None or el.id in members:
                total += 0.5 * el.henries * cur[:, k] ** 2
        for kc in lay.couplings:
            if members is None or kc.id in members or (kc.inductor_a in members and kc.inductor_b in members):
                a, b = lay.ind_index[kc.inductor_a], lay.ind_index[kc.inductor_b]
                total += lay.lmat[a, b] * cur[:, a] * cur[:, b]
        for k, el in enumerate(lay.junctions):
            if members is None or el.id in members:
                v = self.voltage(el.id)
                total += PHI0 * lay.ic[k] / (2 * math.pi) * (1 - np.cos(self.phase(el.id))) + 0.5 * lay.jc[k] * v**2
        for el in lay.capacitors:
            if members is None or el.id in members:
                total += 0.5 * el.farads * self.voltage(el.id) ** 2
        return total

    def window_slice(self, t0: float, t1: float) -> slice:
        tol = 1e-6 * self.dt
        if t0 < self.time[0] - tol or t1 > self.time[-1] + tol or t1 <= t0:
            raise ValueError(f"window [{t0:.6e}, {t1:.6e}] outside recorded range [{self.time[0]:.6e}, {self.time[-1]:.6e}]")
        i0 = int(np.searchsorted(self.time, t0 - tol))
        i1 = int(np.searchsorted(self.time, t1 + tol))
        return slice(i0, i1)

    def integrate(self, series: np.ndarray, t0: float, t1: float) -> float:
        sl = self.window_slice(t0, t1)
        return float(np.trapezoid(series[sl], self.time[sl]))

    def dissipated_energy(self, subset=None, window=None) -> float:
        """Trapezoidal quadrature of resistive power over ``window``."""
        t0, t1 = window if window is not None else (self.time[0], self.time[-1])
        return self.integrate(self.resistive_power(subset), t0, t1)

    def source_work(self, ident: str, window=None) -> float:
        t0, t1 = window if window is not None else (self.time[0], self.time[-1])
        return self.integrate(self.source_power(ident), t0, t1)

    def energy_audit(self, window=None) -> dict:
        """Source work, stored-energy change and dissipation over ``window``."""
        t0, t1 = window if window is not None else (self.time[0], self.time[-1])
        sl = self.window_slice(t0, t1)
        work = sum(self.source_work(s.id, (t0, t1)) for s in self._lay.sources)
        stored = self.stored_energy()[sl]
        dissipated = self.dissipated_energy(None, (t0, t1))
        d_stored = float(stored[-1] - stored[0])
        residual = work - d_stored - dissipated
        return {
            "work": work,
            "stored_change": d_stored,
            "dissipated": dissipated,
            "residual": residual,
            "relative": abs(residual) / abs(work) if work else math.inf,
        }

    def state_at(self, index: int) -> SystemState:
        lay = self._lay
        row = self.x[index]
        vel = {}
        for el in lay.junctions:
            vel[el.id] = 2 * math.pi / PHI0 * float(self.voltage(el.id)[index])
        return SystemState(
            time=float(self.time[index]),
            node_voltages={n: float(row[i]) for n, i in lay.node_index.items()},
            inductor_currents={el.id: float(row[lay.nn + k]) for k, el in enumerate(lay.inductors)},
            phases={el.id: float(row[lay.nn + lay.nl + k]) for k, el in enumerate(lay.junctions)},
            phase_velocities=vel,
        )

    def index_at(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.time - t)))
        if abs(self.time[i] - t) > 0.5 * self.dt * (1 + 1e-9):
            raise ValueError(f"time {t:.6e} outside recorded range")
        return i

    def to_csv(self, path_or_file) -> None:
        write_trace_csv(self, path_or_file)


def _probe_from_name(name: str) -> Probe:
    kind, rest = name.split("(", 1)
    return Probe(kind.lower(), tuple(t.strip() for t in rest.rstrip(")").split(",")))


def stored_energy(netlist: Netlist, state: SystemState, subset=None) -> float:
    """Stored energy of ``subset`` in a single state (see
    :meth:`TransientTrace.stored_energy` for the coupling rule)."""
    members = None if subset is None else set(expand_members(netlist, subset))
    if subset is not None:
        for g in subset:
            if g not in netlist.groups and not any(el.id == g for el in netlist.elements):
                raise KeyError(f"unknown group {g!r}")
    ids, lmat = inductance_matrix(netlist)
    index = {n: i for i, n in enumerate(ids)}
    cur = state.inductor_currents
    volt = state.node_voltages

    def bv(el):
        return volt.get(el.npos, 0.0) - volt.get(el.nneg, 0.0)

    total = 0.0
    for el in netlist.of_kind(Inductor):
        if members is None or el.id in members:
            total += 0.5 * el.henries * cur[el.id] ** 2
    for kc in netlist.of_kind(MutualCoupling):
        if members is None or kc.id in members or (kc.inductor_a in members and kc.inductor_b in members):
            total += lmat[index[kc.inductor_a], index[kc.inductor_b]] * cur[kc.inductor_a] * cur[kc.inductor_b]
    for el in netlist.of_kind(JosephsonJunction):
        if members is None or el.id in members:
            m = netlist.models[el.model]
            total += PHI0 * m.ic / (2 * math.pi) * (1 - math.cos(state.phases[el.id])) + 0.5 * m.c * bv(el) ** 2
    for el in netlist.of_kind(Capacitor):
        if members is None or el.id in members:
            total += 0.5 * el.farads * bv(el) ** 2
    return total


def dissipated_energy(trace: TransientTrace, subset=None, window=None) -> float:
    return trace.dissipated_energy(subset, window)


def default_timestep(frequency: float) -> float:
    """min(T/4000, 0.25 ps) for the fastest excitation frequency."""
    return min(1.0 / frequency / 4000.0, 0.25e-12)


class TransientSolver:
    """Fixed-step transient integrator for one netlist."""

    startup_steps = 2  # backward-Euler steps at t=0 and after breakpoints

    def __init__(self, netlist: Netlist, check: bool = True):
        if check:
            problems = validate(netlist)
            if problems:
                raise ValueError("invalid netlist: " + "; ".join(map(str, problems)))
        self.netlist = netlist
        self.lay = _Layout(netlist)
        self._systems: dict[tuple[float, float], _System] = {}
        lay = self.lay
        # source injection: rhs[n+] -= I, rhs[n-] += I
        src = np.zeros((lay.dim, len(lay.sources)))
        for k, el in enumerate(lay.sources):
            a, b = lay._ni(el.npos), lay._ni(el.nneg)
            if a >= 0:
                src[a, k] -= 1.0
            if b >= 0:
                src[b, k] += 1.0
        self._src = src
        self._dind = lay.incidence(lay.inductors)
        self._djj = lay.incidence(lay.junctions)
        self._dcap = _index_incidence(lay.cap_pos, lay.cap_neg, lay.nn)
        self._dcap_t = self._dcap.T.tocsr()

    def system(self, dt: float, theta: float) -> _System:
        key = (dt, theta)
        if key not in self._systems:
            self._systems[key] = _System(self.lay, dt, theta)
        return self._systems[key]

    def _sources_at(self, t: float) -> np.ndarray:
        return np.array([float(el.waveform(t)) for el in self.lay.sources])

    def _breakpoints(self, tstop: float) -> np.ndarray:
        pts = []
        for el in self.lay.sources:
            pts.extend(el.waveform.breakpoints(0.0, tstop))
        return np.unique(np.array(pts, dtype=float))

    def _step(self, x, icap, t, dt, theta, cfg):
        """Advance one step; returns (x_new, icap_new, iterations, residual)."""
        lay = self.lay
        nn, nl, nj = lay.nn, lay.nl, lay.nj
        sysm = self.system(dt, theta)
        v = x[:nn]
        il = x[nn:nn + nl]
        phi = x[nn + nl:]
        b = self._src @ self._sources_at(t + dt)
        # inductor history: -(1-theta) V_n - (1/dt) M I_n
        vind = self._dind @ v
        b[nn:nn + nl] = -(1 - theta) * vind - (lay.lmat @ il) / dt
        # junction phase history
        kphi = 2.0 * math.pi * dt / PHI0
        vjj = self._djj @ v
        b[nn + nl:] = phi + (1 - theta) * kphi * vjj
        # capacitive history currents
        if len(lay.cap_val):
            vcap = self._dcap @ v
            hist = lay.cap_val / (theta * dt) * vcap + (1 - theta) / theta * icap
            b[:nn] += self._dcap_t @ hist
        xb = sysm.lu.solve(b)
        iters = 0
        resid = 0.0
        if nj:
            phib = xb[nn + nl:]
            g = sysm.g
            ic = lay.ic
            p = phi.copy()
            converged = False
            for iters in range(1, cfg.max_iter + 1):
                nl_cur = ic * (np.sin(p) - p)
                f = p - phib + g @ nl_cur
                jac = np.eye(nj) + g * (ic * (np.cos(p) - 1.0))
                dp = np.linalg.solve(jac, -f)
                p = p + dp
                resid = float(np.max(ic * np.abs(dp)))
                if np.max(np.abs(dp)) <= cfg.reltol * max(1.0, float(np.max(np.abs(p)))) and resid <= cfg.abstol:
                    converged = True
                    break
            if not converged or not np.all(np.isfinite(p)):
                raise SimulationError("Newton iteration did not converge", t + dt)
            xn = xb - sysm.z @ (ic * (np.sin(p) - p))
            # KCL residual of the full system after the final update
            resid = float(np.max(ic * np.abs(np.sin(xn[nn + nl:]) - np.sin(p)))) if nj else 0.0
        else:
            xn = xb
        if not np.all(np.isfinite(xn)):
            raise SimulationError("non-finite state", t + dt)
        if len(lay.cap_val):
            vcap_new = self._dcap @ xn[:nn]
            icap_new = lay.cap_val / (theta * dt) * (vcap_new - vcap) - (1 - theta) / theta * icap
        else:
            icap_new = icap
        return xn, icap_new, iters, resid

    def _advance(self, x, icap, t, dt, theta, cfg):
        try:
            return self._step(x, icap, t, dt, theta, cfg)
        except SimulationError:
            # one retry with two half steps
            h = dt / 2
            x1, c1, i1, _ = self._step(x, icap, t, h, theta, cfg)
            x2, c2, i2, r2 = self._step(x1, c1, t + h, h, theta, cfg)
            return x2, c2, i1 + i2, r2

    def initial_state(self) -> np.ndarray:
        x = np.zeros(self.lay.dim)
        for k, el in enumerate(self.lay.junctions):
            x[self.lay.nn + self.lay.nl + k] = el.phi0
        return x

    def run(self, config: SimConfig) -> TransientTrace:
        lay = self.lay
        dt = config.dt
        nsteps = int(round(config.tstop / dt))
        first_rec = int(math.ceil(config.tstart / dt - 1e-9))
        nrec = nsteps - first_rec + 1
        x = self.initial_state()
        icap = np.zeros(len(lay.cap_val))
        xs = np.empty((nrec, lay.dim))
        cs = np.empty((nrec, len(lay.cap_val)))
        resid = np.zeros(nrec)
        iters = np.zeros(nrec, dtype=np.int32)
        if first_rec == 0:
            xs[0], cs[0] = x, icap
        bps = self._breakpoints(config.tstop)
        bp_i = 0
        be_left = self.startup_steps
        for n in range(nsteps):
            t = n * dt
            while bp_i < len(bps) and bps[bp_i] <= t + 1e-9 * dt:
                bp_i += 1
            if bp_i < len(bps) and bps[bp_i] <= t + dt * (1 + 1e-9):
                be_left = max(be_left, self.startup_steps)
            theta = 1.0 if be_left > 0 else 0.5
            be_left -= 1
            x, icap, it, r = self._advance(x, icap, t, dt, theta, config)
            k = n + 1 - first_rec
            if k >= 0:
                xs[k], cs[k] = x, icap
                resid[k], iters[k] = r, it
        time = (np.arange(nrec) + first_rec) * dt
        return TransientTrace(self.netlist, lay, time, xs, cs, config, resid, iters)


def _index_incidence(pos, neg, nn) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for k, (a, b) in enumerate(zip(pos, neg)):
        for i, sign in ((a, 1.0), (b, -1.0)):
            if i >= 0:
                rows.append(k)
                cols.append(i)
                vals.append(sign)
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(pos), nn))


def run_transient(netlist: Netlist, config: SimConfig | None = None) -> TransientTrace:
    """Validate and simulate ``netlist``; ``config`` defaults to its .tran line."""
    if config is None:
        config = SimConfig.from_netlist(netlist)
    return TransientSolver(netlist).run(config)


def write_trace_csv(trace: TransientTrace, path_or_file, probes=None) -> None:
    """``time,<probe>,...`` with 17 significant digits."""
    probes = list(trace.netlist.probes) if probes is None else probes
    cols = [trace.time] + [trace.probe(p) for p in probes]
    header = ["time"] + [p.name if isinstance(p, Probe) else p for p in probes]
    data = np.column_stack(cols)
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        # vsum names contain commas, so the header uses csv quoting
        csv.writer(fh, lineterminator="\n").writerow(header)
        for row in data:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    finally:
        if own:
            fh.close()


def read_trace_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        header = next(csv.reader(fh))
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {h: data[:, i] for i, h in enumerate(header)}
