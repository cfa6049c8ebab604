"""AQFP netlist generators: buffer, buffer chain and the majority-gate
testbench surrounded by peripheral buffers.

Buffer ``g`` (nodes ``a_g``, ``n1_g``, ``n2_g``)::

    a_g --L1--> n1_g --J1--> 0
    0   --J2--> n2_g --L2--> a_g
    a_g --Lq--> 0                  (load; coupled to Lout_g)
    a_next --Lout--> 0             (input inductor of the next gate)
    Lx1 ~ L1, Lx2 ~ L2             (ac excitation line, coupling +-kx)

A positive state current (``a -> 0`` through Lq) is logic 1. The dc
offset flux is applied through a separate offset line (``Ld1 ~ L1``,
``Ld2 ~ L2``) driven by ``Id``, which all gates see with the same sign.
Four-phase clocking comes from the two ac sources and the coupling sign:
stage ``s`` uses ``PHASES[s % 4]`` relative to the circuit under test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .netlist import (
    DC,
    CurrentSource,
    Inductor,
    JosephsonJunction,
    JunctionModel,
    MutualCoupling,
    Netlist,
    Probe,
    Sinusoid,
    Trapezoid,
    TranDirective,
    parse_value,
)
from .solver import PHI0, SimulationError, TransientTrace

# (source index, coupling sign); source 1 leads source 2 by 90 degrees
PHASES = ((1, +1), (2, +1), (1, -1), (2, -1))
JJ_MODEL = "jjaqfp"


@dataclass(frozen=True)
class CellParams:
    ic: float = 50e-6
    r: float = 80.0
    c: float = 5e-15
    l1: float = 1.5e-12  # L1 = L2
    lq: float = 10e-12
    lout: float = 10e-12
    lx: float = 2e-12  # Lx1 = Lx2
    kx: float = 0.5
    kout: float = 0.4
    phi_ac: float = 0.5  # flux quanta
    phi_dc: float = 0.5
    iin: float = 20e-6
    merge_scale: float = 1.0  # MAJ output inductors relative to lout

    def __post_init__(self):
        problems = []
        for name in ("ic", "r", "l1", "lq", "lout", "lx"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be positive")
        if self.c < 0:
            problems.append("c must be non-negative")
        for name in ("kx", "kout"):
            if not abs(getattr(self, name)) < 1:
                problems.append(f"|{name}| must be < 1")
        if not math.isclose(self.lq, self.lout, rel_tol=1e-12):
            problems.append("lq must equal lout (symmetric chain)")
        if self.merge_scale <= 0:
            problems.append("merge_scale must be positive")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def model(self) -> JunctionModel:
        return JunctionModel(self.ic, self.r, self.c)

    @property
    def excitation_mutual(self) -> float:
        """Mutual inductance between one excitation inductor and L1."""
        return self.kx * math.sqrt(self.lx * self.l1)

    @property
    def ac_amplitude(self) -> float:
        """Excitation current giving ``phi_ac`` flux quanta of loop flux
        (each gate is threaded by both Lx1 and Lx2)."""
        return self.phi_ac * PHI0 / (2 * self.excitation_mutual)

    @property
    def dc_amplitude(self) -> float:
        return self.phi_dc * PHI0 / (2 * self.excitation_mutual)

    @property
    def beta_c(self) -> float:
        return 2 * math.pi * self.ic * self.r**2 * self.c / PHI0


_PARAM_FIELDS = {f.name for f in fields(CellParams)}


def load_params(path) -> CellParams:
    """Read a ``key = value`` parameter file (unit suffixes allowed)."""
    return parse_params(Path(path).read_text())


def parse_params(text: str, base: CellParams | None = None) -> CellParams:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith("*"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.lower()
        if key not in _PARAM_FIELDS:
            raise ValueError(f"line {lineno}: unknown parameter {key!r}")
        values[key] = parse_value(val)
    return replace(base or CellParams(), **values)


def format_params(params: CellParams) -> str:
    return "".join(f"{f.name} = {getattr(params, f.name)!r}\n" for f in fields(CellParams))


# ---------------------------------------------------------------------------


@dataclass
class Fragment:
    """Netlist pieces for one gate, with its port nodes."""

    name: str
    elements: list
    input: str
    output: str  # node the output inductor drives (next gate's node a)
    excitation: tuple[str, str]  # (Lx1, Lx2) ids, to be threaded on a line
    state_inductor: str
    junctions: tuple[str, str]
    members: list = field(default_factory=list)  # gate energy group


def build_buffer(params: CellParams, sign: int, name: str, node_in: str, node_out: str, lout: float | None = None):
    """One buffer cell: 2 junctions, 6 inductors, 3 couplings.

    ``sign`` (+1/-1) is the polarity of the ac excitation coupling. The
    excitation inductors are emitted with placeholder nodes; the line
    builder rewires them in series.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    a, n1, n2 = node_in, f"n1_{name}", f"n2_{name}"
    lout = params.lout if lout is None else lout
    els = [
        Inductor(f"L1_{name}", a, n1, params.l1),
        JosephsonJunction(f"B1_{name}", n1, "0", JJ_MODEL),
        JosephsonJunction(f"B2_{name}", "0", n2, JJ_MODEL),
        Inductor(f"L2_{name}", n2, a, params.l1),
        Inductor(f"Lq_{name}", a, "0", params.lq),
        Inductor(f"Lout_{name}", node_out, "0", lout),
        Inductor(f"Lx1_{name}", f"x1_{name}", f"x2_{name}", params.lx),
        Inductor(f"Lx2_{name}", f"x2_{name}", f"x3_{name}", params.lx),
        MutualCoupling(f"Kx1_{name}", f"L1_{name}", f"Lx1_{name}", sign * params.kx),
        MutualCoupling(f"Kx2_{name}", f"L2_{name}", f"Lx2_{name}", sign * params.kx),
        MutualCoupling(f"Kq_{name}", f"Lq_{name}", f"Lout_{name}", params.kout),
    ]
    return Fragment(
        name=name,
        elements=els,
        input=a,
        output=node_out,
        excitation=(f"Lx1_{name}", f"Lx2_{name}"),
        state_inductor=f"Lq_{name}",
        junctions=(f"B1_{name}", f"B2_{name}"),
        members=[e.id for e in els],
    )


def _offset_elements(params: CellParams, name: str) -> list:
    return [
        Inductor(f"Ld1_{name}", "?", "?", params.lx),
        Inductor(f"Ld2_{name}", "?", "?", params.lx),
        MutualCoupling(f"Kd1_{name}", f"L1_{name}", f"Ld1_{name}", params.kx),
        MutualCoupling(f"Kd2_{name}", f"L2_{name}", f"Ld2_{name}", params.kx),
    ]


def _thread(elements: list, inductor_ids: list[str], prefix: str) -> list:
    """Rewire ``inductor_ids`` into one series line ``prefix0 -> ... -> 0``."""
    pos = {el.id: i for i, el in enumerate(elements)}
    for k, ident in enumerate(inductor_ids):
        el = elements[pos[ident]]
        npos = f"{prefix}{k}"
        nneg = "0" if k == len(inductor_ids) - 1 else f"{prefix}{k + 1}"
        elements[pos[ident]] = Inductor(el.id, npos, nneg, el.henries)
    return elements


@dataclass(frozen=True)
class TestbenchPlan:
    """What to build and how to clock it."""

    kind: str = "maj"  # "maj" | "buffer" | "chain"
    inputs: tuple = (1, 1, 1)
    depth: int = 3
    frequency: float = 5e9
    profile: str = "sinusoid"  # "sinusoid" | "trapezoid"
    warmup: int = 3
    cycles: int = 2  # recorded cycles after warm-up
    dt: float | None = None
    rise: float = 0.1  # trapezoid fractions
    plateau: float = 0.4
    four_source: bool = False  # independent source per phase (stage studies)
    length: int = 7  # for kind == "chain"
    __test__ = False  # not a pytest class

    def __post_init__(self):
        arity = {"maj": 3, "buffer": 1, "chain": 1}
        if self.kind not in arity:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if len(self.inputs) != arity[self.kind] or any(b not in (0, 1) for b in self.inputs):
            raise ValueError(f"{self.kind} takes {arity[self.kind]} input bit(s)")
        if self.depth < 3:
            raise ValueError("peripheral depth >= 3 required")
        if self.kind == "chain" and self.length < 3:
            raise ValueError("peripheral depth >= 3 required")
        if self.profile not in ("sinusoid", "trapezoid"):
            raise ValueError(f"unknown profile {self.profile!r}")
        if not self.frequency > 0:
            raise ValueError("frequency must be positive")
        if self.warmup < 2:
            raise ValueError("at least 2 warm-up cycles required")
        if self.cycles < 1:
            raise ValueError("at least one recorded cycle required")

    @property
    def period(self) -> float:
        return 1.0 / self.frequency

    @property
    def timestep(self) -> float:
        if self.dt is not None:
            return self.dt
        return min(self.period / 4000.0, 0.25e-12)

    def measurement_window(self, cycle: int | None = None) -> tuple[float, float]:
        """One full period starting at a zero-phase instant of Ix1."""
        k = self.warmup + (self.cycles - 1 if cycle is None else cycle)
        return (k * self.period, (k + 1) * self.period)

    def tran(self) -> TranDirective:
        total = (self.warmup + self.cycles) * self.period
        return TranDirective(self.timestep, total, self.warmup * self.period)


@dataclass
class Testbench:
    netlist: Netlist
    plan: TestbenchPlan
    params: CellParams
    gates: dict  # gate name -> Fragment
    stages: dict  # gate name -> pipeline stage index
    phase_of: dict  # gate name -> (source index, sign)
    cut: list  # gate names forming the circuit under test
    state_probes: dict  # label -> state inductor id
    __test__ = False

    @property
    def sources(self) -> dict:
        return {el.id: el for el in self.netlist.of_kind(CurrentSource)}

    def excitation_sources(self) -> list[str]:
        return [s for s in self.sources if s.startswith("Ix")]

    def peak_time(self, gate: str, cycle: int) -> float:
        """Centre of the gate's excitation maximum in recorded cycle ``cycle``."""
        p = self.plan
        idx, sign = self.phase_of[gate]
        offset = 0.25 if p.profile == "sinusoid" else (p.rise + p.plateau) / 2
        if self.plan.four_source:
            delay = 0.25 * (idx - 1)
        else:
            delay = 0.25 * (idx - 1) + (0.5 if sign < 0 else 0.0)
        return (p.warmup + cycle + offset + delay) * p.period

    def junction_count(self) -> int:
        return len(self.netlist.of_kind(JosephsonJunction))


def _excitation_waveform(params: CellParams, plan: TestbenchPlan, degrees: float):
    amp = params.ac_amplitude
    if plan.profile == "sinusoid":
        return Sinusoid(0.0, amp, plan.frequency, degrees)
    return Trapezoid(0.0, amp, plan.frequency, plan.rise, plan.plateau, degrees)


def _phase_for_stage(stage: int, cut_stage: int, four_source: bool):
    rel = (stage - cut_stage) % 4
    if four_source:
        return (rel + 1, +1)
    return PHASES[rel]


def _finish(params: CellParams, plan: TestbenchPlan, frags: list[Fragment], stages: dict, cut_stage: int,
            heads: list[tuple[str, int]], tail_nodes: list[str], cut: list[str], state_probes: dict,
            title: str, extra: list | None = None) -> Testbench:
    elements: list = []
    phase_of = {}
    lines: dict[int, list[str]] = {}
    offset_line: list[str] = []
    for frag in frags:
        ph = _phase_for_stage(stages[frag.name], cut_stage, plan.four_source)
        phase_of[frag.name] = ph
        elements.extend(frag.elements)
        lines.setdefault(ph[0], []).extend(frag.excitation)
        off = _offset_elements(params, frag.name)
        elements.extend(off)
        offset_line.extend([off[0].id, off[1].id])
    if extra:
        elements.extend(extra)
    # coupling sign was fixed at build time; four-source mode uses +1 only
    for idx, ids in sorted(lines.items()):
        _thread(elements, ids, f"ex{idx}_")
    _thread(elements, offset_line, "exd_")

    for k, (node, bit) in enumerate(heads):
        elements.append(Inductor(f"Lin_{k}", node, "0", params.lout))
        level = params.iin if bit else -params.iin
        elements.append(CurrentSource(f"Iin_{k}", "0", node, DC(level)))
    for k, node in enumerate(tail_nodes):
        elements.append(Inductor(f"Lterm_{k}", node, "0", params.lq))

    n_src = 4 if plan.four_source else 2
    for idx in range(1, n_src + 1):
        if idx in lines:
            deg = -90.0 * (idx - 1)
            elements.append(CurrentSource(f"Ix{idx}", "0", f"ex{idx}_0", _excitation_waveform(params, plan, deg)))
    elements.append(CurrentSource("Id", "0", "exd_0", DC(params.dc_amplitude)))

    groups = {}
    for frag in frags:
        groups[f"X_{frag.name}"] = tuple(frag.excitation)
        groups[f"G_{frag.name}"] = tuple(frag.members)
        groups[f"E_{frag.name}"] = _storage_members(frag, elements)
    cut_ex = tuple(i for g in cut for i in frags_by_name(frags)[g].excitation)
    groups["CUT"] = cut_ex
    cut_jj = tuple(j for g in cut for j in frags_by_name(frags)[g].junctions)
    groups["CUT_JJ"] = cut_jj
    all_jj = [el.id for el in elements if isinstance(el, JosephsonJunction)]
    groups["PER_JJ"] = tuple(j for j in all_jj if j not in cut_jj)

    probes = [Probe("i", (s,)) for s in sorted(f"Ix{i}" for i in lines)]
    probes += [Probe("v", (s,)) for s in sorted(f"Ix{i}" for i in lines)]
    probes += [Probe("i", ("Id",)), Probe("v", ("Id",)), Probe("vsum", cut_ex)]
    probes += [Probe("i", (ind,)) for ind in state_probes.values()]
    net = Netlist(
        elements=tuple(elements),
        models={JJ_MODEL: params.model},
        tran=plan.tran(),
        probes=tuple(probes),
        groups=groups,
        title=title,
    )
    gates = frags_by_name(frags)
    return Testbench(net, plan, params, gates, stages, phase_of, list(cut), dict(state_probes))


def _storage_members(frag: Fragment, elements: list) -> tuple:
    """Elements holding the gate's potential energy: its junctions, L1, L2,
    Lq and every other inductor attached to its input node (the input
    inductor of the gate's loop)."""
    own = [frag.junctions[0], frag.junctions[1], f"L1_{frag.name}", f"L2_{frag.name}", frag.state_inductor]
    attached = [el.id for el in elements
                if isinstance(el, Inductor) and el.id not in own and frag.input in (el.npos, el.nneg)]
    return tuple(own + attached)


def frags_by_name(frags):
    return {f.name: f for f in frags}


def build_buffer_chain(length: int, params: CellParams, bit: int, plan: TestbenchPlan | None = None) -> Testbench:
    """Chain of ``length`` buffers, head driven by a dc input source and
    tail closed by a grounded inductor. The middle buffer is the CUT."""
    if length < 3:
        raise ValueError("peripheral depth >= 3 required")
    if plan is None:
        plan = TestbenchPlan(kind="chain", inputs=(bit,), length=length)
    frags, stages = [], {}
    for k in range(length):
        name = f"c{k}"
        stages[name] = k
        frags.append(None)
    cut_stage = length // 2
    for k in range(length):
        name = f"c{k}"
        _, sign = _phase_for_stage(k, cut_stage, plan.four_source)
        frags[k] = build_buffer(params, sign, name, f"a_c{k}", f"a_c{k + 1}")
    probes = {f"st{k}": f"Lq_c{k}" for k in range(length)}
    return _finish(params, plan, frags, stages, cut_stage, [("a_c0", bit)], [f"a_c{length}"],
                   [f"c{cut_stage}"], probes, f"aqfp buffer chain length={length} input={bit}")


def build_buffer_testbench(params: CellParams, plan: TestbenchPlan) -> Testbench:
    """Buffer CUT with ``depth`` peripheral buffers on each side."""
    d = plan.depth
    length = 2 * d + 1
    tb = build_buffer_chain(length, params, plan.inputs[0], replace(plan, length=length))
    return tb


def build_maj_testbench(params: CellParams, plan: TestbenchPlan) -> Testbench:
    """Three input chains (source-driven head buffer + ``depth`` peripheral
    buffers each), the MAJ cell on Ix1, and ``depth`` output buffers."""
    if plan.kind != "maj":
        raise ValueError("plan kind must be 'maj'")
    d = plan.depth
    frags, stages = [], {}
    heads = []
    cut_stage = d + 1
    for port in "abc":
        for k in range(d + 1):
            name = f"{port}{k}"
            out = f"a_{port}{k + 1}" if k < d else f"a_m{port}"
            _, sign = _phase_for_stage(k, cut_stage, plan.four_source)
            frags.append(build_buffer(params, sign, name, f"a_{port}{k}", out))
            stages[name] = k
        heads.append((f"a_{port}0", plan.inputs["abc".index(port)]))
    # MAJ cell: output inductors in series into the first output buffer
    merge_nodes = {"a": ("a_q0", "mq1"), "b": ("mq1", "mq2"), "c": ("mq2", "0")}
    lm = params.lout * params.merge_scale
    for port in "abc":
        name = f"m{port}"
        frag = build_buffer(params, +1, name, f"a_m{port}", "__unused__", lout=lm)
        pos, neg = merge_nodes[port]
        els = [Inductor(e.id, pos, neg, e.henries) if e.id == f"Lout_{name}" else e for e in frag.elements]
        frag.elements = els
        frag.output = "a_q0"
        frags.append(frag)
        stages[name] = cut_stage
    for k in range(d):
        name = f"q{k}"
        stage = cut_stage + 1 + k
        _, sign = _phase_for_stage(stage, cut_stage, plan.four_source)
        frags.append(build_buffer(params, sign, name, f"a_q{k}", f"a_q{k + 1}"))
        stages[name] = stage
    probes = {"sta": "Lq_a0", "stb": "Lq_b0", "stc": "Lq_c0", "stq": f"Lq_q{d - 1}"}
    for port in "abc":
        probes[f"stm{port}"] = f"Lq_m{port}"
    probes["stq0"] = "Lq_q0"
    bits = "".join(str(b) for b in plan.inputs)
    return _finish(params, plan, frags, stages, cut_stage, heads, [f"a_q{d}"], ["ma", "mb", "mc"], probes,
                   f"aqfp maj testbench inputs={bits} f={plan.frequency:g}")


def build_testbench(params: CellParams, plan: TestbenchPlan) -> Testbench:
    if plan.kind == "maj":
        return build_maj_testbench(params, plan)
    if plan.kind == "buffer":
        return build_buffer_testbench(params, plan)
    return build_buffer_chain(plan.length, params, plan.inputs[0], plan)


class IndeterminateStateError(SimulationError):
    pass


def logic_readout(trace: TransientTrace, tb: Testbench, gate: str, cycle: int, threshold: float | None = None) -> int:
    """Sign of the gate's state current at its excitation peak."""
    ind = tb.gates[gate].state_inductor
    t = tb.peak_time(gate, cycle)
    value = float(trace.current(ind)[trace.index_at(t)])
    if threshold is None:
        threshold = 0.1 * nominal_state_current(tb.params)
    return readout_value(value, threshold)


def readout_value(value: float, threshold: float) -> int:
    if value > threshold:
        return 1
    if value < -threshold:
        return 0
    raise IndeterminateStateError(f"indeterminate state: |I_st|={abs(value):.3e} A <= {threshold:.3e} A")


def nominal_state_current(params: CellParams) -> float:
    """Rough state-current scale Phi0 / (2 Lq)."""
    return PHI0 / (2 * params.lq)


REFERENCE_PARAMS = Path(__file__).with_name("data") / "reference.params"


def reference_params() -> CellParams:
    """The committed reference parameter set."""
    return load_params(REFERENCE_PARAMS)
