"""Circuit data model, text netlist parser/serializer and validator.

The format is a small SPICE-like grammar::

    * comment
    R1 1 0 6           L1 1 2 2p          C1 2 0 0.1p
    K1 L1 L2 0.3
    B1 2 0 jj1 phi=0.1
    I1 0 1 DC 50u
    I2 0 1 SIN 0 1m 5g 0
    I3 0 1 TRAP 0 1m 5g 0.1 0.3 0
    I4 0 1 PWL 0 0 10p 1m
    .model jj1 jj ic=50u r=6 c=0.1p
    .tran 0.25p 1n 0.5n
    .probe i(L1) v(B1) p(B1) vsum(Lx1,Lx2)
    .group CUT Lx1 Lx2

Current sources follow the SPICE sign convention: ``I n+ n- ...`` drives
current from ``n+`` through the source into ``n-``.
"""

from __future__ import annotations

import math
import re
from decimal import Decimal
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

GROUND = "0"

SUFFIXES = {
    "f": 1e-15,
    "p": 1e-12,
    "n": 1e-9,
    "u": 1e-6,
    "m": 1e-3,
    "k": 1e3,
    "meg": 1e6,
    "g": 1e9,
}

_EXPONENTS = {"f": -15, "p": -12, "n": -9, "u": -6, "m": -3, "k": 3, "meg": 6, "g": 9}

_NUMBER_RE = re.compile(
    r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(meg|[fpnumkg])?([a-z]*)$"
)


class NetlistError(ValueError):
    """Raised when netlist text cannot be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def parse_value(token: str) -> float:
    """Convert a number with an optional engineering suffix to a float.

    Trailing unit letters after the suffix are ignored (``2pH`` -> 2e-12),
    as in SPICE.
    """
    m = _NUMBER_RE.match(token.strip().lower())
    if m is None:
        raise ValueError(f"invalid number {token!r}")
    if not m.group(2):
        return float(m.group(1))
    # scale in decimal so "50u" is the double nearest 5e-5, not 50 * 1e-6
    return float(Decimal(m.group(1)).scaleb(_EXPONENTS[m.group(2)]))


def format_value(value: float) -> str:
    """Full-precision text form that :func:`parse_value` reads back exactly."""
    return repr(float(value))


# ---------------------------------------------------------------------------
# Waveforms


@dataclass(frozen=True)
class DC:
    value: float

    def __call__(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.value) if np.ndim(t) else float(self.value)

    def breakpoints(self, t0: float, t1: float) -> list[float]:
        return []

    def to_tokens(self) -> list[str]:
        return ["DC", format_value(self.value)]


@dataclass(frozen=True)
class Sinusoid:
    offset: float
    amplitude: float
    frequency: float
    phase: float = 0.0  # degrees

    def __call__(self, t):
        arg = 2.0 * math.pi * self.frequency * np.asarray(t, dtype=float) + math.radians(self.phase)
        out = self.offset + self.amplitude * np.sin(arg)
        return out if np.ndim(out) else float(out)

    def breakpoints(self, t0: float, t1: float) -> list[float]:
        return []

    def to_tokens(self) -> list[str]:
        return ["SIN"] + [format_value(v) for v in (self.offset, self.amplitude, self.frequency, self.phase)]


@dataclass(frozen=True)
class Trapezoid:
    """Periodic trapezoid swinging between ``offset - amplitude`` and
    ``offset + amplitude``.

    Phase zero puts the centre of the rising edge at t = 0, like the zero
    crossing of a sine. With ``rise + plateau == 0.5`` the waveform is
    half-wave antisymmetric and peaks at the same instants as ``sin``.
    """

    offset: float
    amplitude: float
    frequency: float
    rise: float
    plateau: float
    phase: float = 0.0  # degrees

    def shape(self, t):
        u = np.mod(self.frequency * np.asarray(t, dtype=float) + self.phase / 360.0 + self.rise / 2.0, 1.0)
        r, p = self.rise, self.plateau
        s = np.full_like(u, -1.0)
        up = u < r
        s[up] = -1.0 + 2.0 * u[up] / r
        s[(u >= r) & (u < r + p)] = 1.0
        down = (u >= r + p) & (u < 2 * r + p)
        s[down] = 1.0 - 2.0 * (u[down] - r - p) / r
        return s

    def __call__(self, t):
        out = self.offset + self.amplitude * self.shape(np.atleast_1d(t))
        return out if np.ndim(t) else float(out[0])

    def breakpoints(self, t0: float, t1: float) -> list[float]:
        period = 1.0 / self.frequency
        shift = (self.phase / 360.0 + self.rise / 2.0) * period
        corners = np.array([0.0, self.rise, self.rise + self.plateau, 2 * self.rise + self.plateau]) * period
        out = []
        k = math.floor((t0 + shift) / period) - 1
        while True:
            base = k * period - shift
            if base > t1:
                break
            out.extend(float(base + c) for c in corners if t0 < base + c <= t1)
            k += 1
        return sorted(out)

    def to_tokens(self) -> list[str]:
        vals = (self.offset, self.amplitude, self.frequency, self.rise, self.plateau, self.phase)
        return ["TRAP"] + [format_value(v) for v in vals]


@dataclass(frozen=True)
class PiecewiseLinear:
    points: tuple[tuple[float, float], ...]

    def __call__(self, t):
        ts = [p[0] for p in self.points]
        vs = [p[1] for p in self.points]
        out = np.interp(np.asarray(t, dtype=float), ts, vs)
        return out if np.ndim(out) else float(out)

    def breakpoints(self, t0: float, t1: float) -> list[float]:
        return [p[0] for p in self.points if t0 < p[0] <= t1]

    def to_tokens(self) -> list[str]:
        tokens = ["PWL"]
        for t, v in self.points:
            tokens += [format_value(t), format_value(v)]
        return tokens


Waveform = Union[DC, Sinusoid, Trapezoid, PiecewiseLinear]


# ---------------------------------------------------------------------------
# Elements


@dataclass(frozen=True)
class Resistor:
    id: str
    npos: str
    nneg: str
    ohms: float


@dataclass(frozen=True)
class Inductor:
    id: str
    npos: str
    nneg: str
    henries: float


@dataclass(frozen=True)
class Capacitor:
    id: str
    npos: str
    nneg: str
    farads: float


@dataclass(frozen=True)
class MutualCoupling:
    id: str
    inductor_a: str
    inductor_b: str
    k: float


@dataclass(frozen=True)
class JosephsonJunction:
    id: str
    npos: str
    nneg: str
    model: str
    phi0: float = 0.0  # initial phase, radians


@dataclass(frozen=True)
class CurrentSource:
    id: str
    npos: str
    nneg: str
    waveform: Waveform


Element = Union[Resistor, Inductor, Capacitor, MutualCoupling, JosephsonJunction, CurrentSource]

_KIND_LETTER = {
    Resistor: "R",
    Inductor: "L",
    Capacitor: "C",
    MutualCoupling: "K",
    JosephsonJunction: "B",
    CurrentSource: "I",
}


@dataclass(frozen=True)
class JunctionModel:
    ic: float
    r: float
    c: float = 0.0


@dataclass(frozen=True)
class TranDirective:
    dt: float
    tstop: float
    tstart: float = 0.0


@dataclass(frozen=True)
class Probe:
    """``kind`` is one of ``i``, ``v``, ``p``, ``phase``, ``vsum``."""

    kind: str
    targets: tuple[str, ...]

    @property
    def name(self) -> str:
        return f"{self.kind}({','.join(self.targets)})"


@dataclass(frozen=True)
class Netlist:
    elements: tuple = ()
    models: dict = field(default_factory=dict)
    tran: TranDirective | None = None
    probes: tuple = ()
    groups: dict = field(default_factory=dict)
    title: str = ""

    @property
    def nodes(self) -> list[str]:
        seen = {}
        for el in self.elements:
            for n in element_nodes(el):
                seen.setdefault(n, None)
        return list(seen)

    def of_kind(self, kind) -> list:
        return [el for el in self.elements if isinstance(el, kind)]

    def element(self, ident: str):
        for el in self.elements:
            if el.id == ident:
                return el
        raise KeyError(ident)

    def group(self, name: str) -> tuple[str, ...]:
        try:
            return self.groups[name]
        except KeyError:
            raise KeyError(f"unknown group {name!r}") from None

    def with_tran(self, tran: TranDirective) -> "Netlist":
        return Netlist(self.elements, dict(self.models), tran, self.probes, dict(self.groups), self.title)


def element_nodes(el) -> tuple[str, ...]:
    if isinstance(el, MutualCoupling):
        return ()
    return (el.npos, el.nneg)


# ---------------------------------------------------------------------------
# Parsing


def _split_kv(token: str, lineno: int) -> tuple[str, float]:
    if "=" not in token:
        raise NetlistError(f"expected key=value, got {token!r}", lineno)
    key, val = token.split("=", 1)
    try:
        return key.strip().lower(), parse_value(val)
    except ValueError as exc:
        raise NetlistError(str(exc), lineno) from None


def _num(token: str, lineno: int) -> float:
    try:
        return parse_value(token)
    except ValueError as exc:
        raise NetlistError(str(exc), lineno) from None


def _parse_waveform(tokens: Sequence[str], lineno: int) -> Waveform:
    if not tokens:
        raise NetlistError("current source needs a waveform", lineno)
    kind = tokens[0].upper()
    args = [_num(t, lineno) for t in tokens[1:]]
    if kind == "DC":
        if len(args) != 1:
            raise NetlistError("DC takes one value", lineno)
        return DC(args[0])
    if kind == "SIN":
        if len(args) not in (3, 4):
            raise NetlistError("SIN takes offset amp freq [phase]", lineno)
        return Sinusoid(*args)
    if kind == "TRAP":
        if len(args) not in (5, 6):
            raise NetlistError("TRAP takes offset amp freq rise plateau [phase]", lineno)
        return Trapezoid(*args)
    if kind == "PWL":
        if len(args) < 2 or len(args) % 2:
            raise NetlistError("PWL takes time/value pairs", lineno)
        return PiecewiseLinear(tuple(zip(args[0::2], args[1::2])))
    if len(tokens) == 1:
        # bare number means DC
        try:
            return DC(parse_value(tokens[0]))
        except ValueError:
            pass
    raise NetlistError(f"unknown waveform {tokens[0]!r}", lineno)


_PROBE_RE = re.compile(r"^(i|v|p|phase|vsum)\((.+)\)$", re.IGNORECASE)


def _parse_probes(text: str, lineno: int) -> list[Probe]:
    probes = []
    # vsum(a,b,c) may contain commas; split on whitespace outside parens
    for tok in re.findall(r"\w+\([^)]*\)|\S+", text):
        m = _PROBE_RE.match(tok)
        if m is None:
            raise NetlistError(f"bad probe {tok!r}", lineno)
        targets = tuple(t.strip() for t in m.group(2).split(",") if t.strip())
        if not targets:
            raise NetlistError(f"empty probe {tok!r}", lineno)
        kind = m.group(1).lower()
        if kind != "vsum" and len(targets) != 1:
            raise NetlistError(f"probe {kind} takes one element", lineno)
        probes.append(Probe(kind, targets))
    return probes


def parse_netlist(text: str) -> Netlist:
    """Parse netlist text; elements keep their source order."""
    elements = []
    models: dict[str, JunctionModel] = {}
    probes: list[Probe] = []
    groups: dict[str, tuple[str, ...]] = {}
    tran = None
    title = ""
    seen: dict[tuple[str, str], int] = {}
    pending_models: list[tuple[str, int]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("*"):
            if lineno == 1 and not title:
                title = line[1:].strip()
            continue
        tokens = line.split()
        head = tokens[0]
        if head.startswith("."):
            directive = head.lower()
            if directive == ".model":
                if len(tokens) < 3 or tokens[2].lower() != "jj":
                    raise NetlistError(".model needs '<name> jj key=value...'", lineno)
                params = dict(_split_kv(t, lineno) for t in tokens[3:])
                unknown = set(params) - {"ic", "r", "c"}
                if unknown:
                    raise NetlistError(f"unknown model parameter(s) {sorted(unknown)}", lineno)
                if "ic" not in params or "r" not in params:
                    raise NetlistError(".model requires ic and r", lineno)
                name = tokens[1].lower()
                if name in models:
                    raise NetlistError(f"duplicate model {tokens[1]!r}", lineno)
                models[name] = JunctionModel(params["ic"], params["r"], params.get("c", 0.0))
            elif directive == ".tran":
                if len(tokens) not in (3, 4):
                    raise NetlistError(".tran takes dt tstop [tstart]", lineno)
                vals = [_num(t, lineno) for t in tokens[1:]]
                tran = TranDirective(*vals)
            elif directive == ".probe":
                probes.extend(_parse_probes(line[len(head):], lineno))
            elif directive == ".group":
                if len(tokens) < 3:
                    raise NetlistError(".group takes a name and at least one element", lineno)
                if tokens[1] in groups:
                    raise NetlistError(f"duplicate group {tokens[1]!r}", lineno)
                groups[tokens[1]] = tuple(tokens[2:])
            elif directive == ".end":
                break
            else:
                raise NetlistError(f"unknown directive {head!r}", lineno)
            continue

        letter = head[0].upper()
        try:
            if letter in "RLC":
                if len(tokens) != 4:
                    raise NetlistError(f"{letter} element takes 2 nodes and a value", lineno)
                cls = {"R": Resistor, "L": Inductor, "C": Capacitor}[letter]
                el = cls(head, tokens[1], tokens[2], _num(tokens[3], lineno))
            elif letter == "K":
                if len(tokens) != 4:
                    raise NetlistError("K element takes two inductors and k", lineno)
                el = MutualCoupling(head, tokens[1], tokens[2], _num(tokens[3], lineno))
            elif letter == "B":
                if len(tokens) not in (4, 5):
                    raise NetlistError("B element takes 2 nodes, a model and optional phi=", lineno)
                phi = 0.0
                if len(tokens) == 5:
                    key, phi = _split_kv(tokens[4], lineno)
                    if key != "phi":
                        raise NetlistError(f"unknown junction option {key!r}", lineno)
                pending_models.append((tokens[3].lower(), lineno))
                el = JosephsonJunction(head, tokens[1], tokens[2], tokens[3].lower(), phi)
            elif letter == "I":
                if len(tokens) < 4:
                    raise NetlistError("I element takes 2 nodes and a waveform", lineno)
                el = CurrentSource(head, tokens[1], tokens[2], _parse_waveform(tokens[3:], lineno))
            else:
                raise NetlistError(f"unknown element letter {head[0]!r} in {head!r}", lineno)
        except TypeError as exc:  # wrong arity into a waveform dataclass
            raise NetlistError(str(exc), lineno) from None
        key = (letter, head.upper())
        if key in seen:
            raise NetlistError(f"duplicate identifier {head!r} (first on line {seen[key]})", lineno)
        seen[key] = lineno
        elements.append(el)

    for model, lineno in pending_models:
        if model not in models:
            raise NetlistError(f"unknown model {model!r}", lineno)
    return Netlist(tuple(elements), models, tran, tuple(probes), groups, title)


def serialize_netlist(netlist: Netlist) -> str:
    """Inverse of :func:`parse_netlist` (values written at full precision)."""
    lines = [f"* {netlist.title}" if netlist.title else "* netlist"]
    for name, m in netlist.models.items():
        lines.append(f".model {name} jj ic={format_value(m.ic)} r={format_value(m.r)} c={format_value(m.c)}")
    for el in netlist.elements:
        if isinstance(el, Resistor):
            lines.append(f"{el.id} {el.npos} {el.nneg} {format_value(el.ohms)}")
        elif isinstance(el, Inductor):
            lines.append(f"{el.id} {el.npos} {el.nneg} {format_value(el.henries)}")
        elif isinstance(el, Capacitor):
            lines.append(f"{el.id} {el.npos} {el.nneg} {format_value(el.farads)}")
        elif isinstance(el, MutualCoupling):
            lines.append(f"{el.id} {el.inductor_a} {el.inductor_b} {format_value(el.k)}")
        elif isinstance(el, JosephsonJunction):
            extra = f" phi={format_value(el.phi0)}" if el.phi0 else ""
            lines.append(f"{el.id} {el.npos} {el.nneg} {el.model}{extra}")
        elif isinstance(el, CurrentSource):
            lines.append(" ".join([el.id, el.npos, el.nneg] + el.waveform.to_tokens()))
    if netlist.tran is not None:
        t = netlist.tran
        lines.append(f".tran {format_value(t.dt)} {format_value(t.tstop)} {format_value(t.tstart)}")
    for name, members in netlist.groups.items():
        lines.append(f".group {name} {' '.join(members)}")
    for p in netlist.probes:
        lines.append(f".probe {p.name}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class Violation:
    element: str
    reason: str

    def __str__(self) -> str:
        return f"{self.element}: {self.reason}"


def _check_waveform(el: CurrentSource) -> list[Violation]:
    w = el.waveform
    out = []
    if isinstance(w, (Sinusoid, Trapezoid)) and not w.frequency > 0:
        out.append(Violation(el.id, "non-positive frequency"))
    if isinstance(w, Trapezoid):
        if w.rise <= 0 or w.plateau < 0 or w.rise + w.plateau > 0.5:
            out.append(Violation(el.id, "trapezoid rise/plateau fractions do not fit one period"))
    if isinstance(w, PiecewiseLinear):
        ts = [p[0] for p in w.points]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            out.append(Violation(el.id, "PWL times not strictly increasing"))
    values = [getattr(w, a, 0.0) for a in ("value", "offset", "amplitude")]
    if isinstance(w, PiecewiseLinear):
        values += [p[1] for p in w.points]
    if not all(math.isfinite(v) for v in values):
        out.append(Violation(el.id, "non-finite waveform value"))
    return out


def validate(netlist: Netlist) -> list[Violation]:
    """Return every well-formedness violation; an empty list means valid."""
    out: list[Violation] = []
    nodes = set(netlist.nodes)
    if GROUND not in nodes:
        out.append(Violation("0", "missing ground"))

    ids: dict[tuple[str, str], int] = {}
    for el in netlist.elements:
        key = (_KIND_LETTER[type(el)], el.id.upper())
        ids[key] = ids.get(key, 0) + 1
    for (letter, ident), count in ids.items():
        if count > 1:
            out.append(Violation(ident, "duplicate identifier"))

    inductors = {el.id: el for el in netlist.of_kind(Inductor)}
    for el in netlist.elements:
        value = {Resistor: "ohms", Inductor: "henries", Capacitor: "farads"}.get(type(el))
        if value is not None:
            v = getattr(el, value)
            if not (math.isfinite(v) and v > 0):
                out.append(Violation(el.id, "non-positive value"))
        if isinstance(el, MutualCoupling):
            if not abs(el.k) < 1:
                out.append(Violation(el.id, "coupling coefficient out of range"))
            for ind in (el.inductor_a, el.inductor_b):
                if ind not in inductors:
                    out.append(Violation(el.id, f"unknown inductor {ind!r}"))
            if el.inductor_a == el.inductor_b:
                out.append(Violation(el.id, "coupling references the same inductor twice"))
        if isinstance(el, JosephsonJunction) and el.model not in netlist.models:
            out.append(Violation(el.id, f"unknown model {el.model!r}"))
        if isinstance(el, CurrentSource):
            out.extend(_check_waveform(el))
        if not isinstance(el, MutualCoupling) and el.npos == el.nneg:
            out.append(Violation(el.id, "both terminals on the same node"))

    for name, m in netlist.models.items():
        if not (m.ic > 0):
            out.append(Violation(name, "non-positive critical current"))
        if not (m.r > 0):
            out.append(Violation(name, "non-positive shunt resistance"))
        if not (m.c >= 0):
            out.append(Violation(name, "negative capacitance"))

    if netlist.tran is not None:
        t = netlist.tran
        if not (t.dt > 0 and t.tstop > t.tstart >= 0):
            out.append(Violation(".tran", "need dt > 0 and tstop > tstart >= 0"))

    known = {el.id for el in netlist.elements}
    for name, members in netlist.groups.items():
        for m in members:
            if m not in known:
                out.append(Violation(name, f"group member {m!r} does not exist"))
    for p in netlist.probes:
        for tgt in p.targets:
            if tgt not in known and not (p.kind == "vsum" and tgt in netlist.groups):
                out.append(Violation(p.name, f"probe target {tgt!r} does not exist"))

    # the inductance matrix must be positive definite for a well-posed system
    if inductors and not any(v.reason.startswith(("coupling", "unknown inductor", "non-positive")) for v in out):
        mat = inductance_matrix(netlist)[1]
        if np.linalg.eigvalsh(mat).min() <= 0:
            out.append(Violation("K", "inductance matrix is not positive definite"))
    return out


def inductance_matrix(netlist: Netlist) -> tuple[list[str], np.ndarray]:
    """Inductor ids and the symmetric (self + mutual) inductance matrix."""
    inds = netlist.of_kind(Inductor)
    index = {el.id: i for i, el in enumerate(inds)}
    mat = np.diag([el.henries for el in inds]).astype(float)
    for k in netlist.of_kind(MutualCoupling):
        a, b = index[k.inductor_a], index[k.inductor_b]
        m = k.k * math.sqrt(inds[a].henries * inds[b].henries)
        mat[a, b] += m
        mat[b, a] += m
    return [el.id for el in inds], mat


def expand_members(netlist: Netlist, names: Iterable[str]) -> list[str]:
    """Resolve a mix of element ids and group names into element ids."""
    out = []
    for n in names:
        if n in netlist.groups:
            out.extend(netlist.groups[n])
        else:
            out.append(n)
    return out
