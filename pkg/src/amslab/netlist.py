"""SPICE-subset netlist model: parse, validate, emit.

The text format is the package's only persistent netlist representation.
Supported cards (one statement per line):

    M<name> <drain> <gate> <source> <bulk> NMOS|PMOS [key=value ...]
    R/C/L/V/I<name> <plus> <minus> [value | key=value ...]
    .port <name> <net> [type]        port declaration (extension card)
    .param <NAME>=<value>            named constant, usable as a value
    .subckt <name> <net ...> / .ends single level, wraps the whole DUT
    .end                             optional terminator, rest ignored
    * comment                        `*! key=value` lines carry metadata

Values accept SI suffixes (f p n u m k meg g, case-insensitive) and the
tunable range form ``[lo,hi]``.  Everything is stored in base SI units.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, Union

from .errors import (
    ArityError,
    DuplicateNameError,
    NetlistError,
    NetlistSyntaxError,
    UnknownCardError,
)


class DeviceKind(Enum):
    NMOS = "NMOS"
    PMOS = "PMOS"
    RESISTOR = "R"
    CAPACITOR = "C"
    INDUCTOR = "L"
    VSOURCE = "V"
    ISOURCE = "I"


MOS_KINDS = (DeviceKind.NMOS, DeviceKind.PMOS)

# Terminal role names, by arity.
MOS_TERMINALS = ("drain", "gate", "source", "bulk")
TWO_TERMINALS = ("plus", "minus")

_KIND_PREFIX = {
    "M": None,  # resolved from the model token (NMOS/PMOS)
    "R": DeviceKind.RESISTOR,
    "C": DeviceKind.CAPACITOR,
    "L": DeviceKind.INDUCTOR,
    "V": DeviceKind.VSOURCE,
    "I": DeviceKind.ISOURCE,
}

# Default positional value parameter for two-terminal devices.
_VALUE_PARAM = {
    DeviceKind.RESISTOR: "R",
    DeviceKind.CAPACITOR: "C",
    DeviceKind.INDUCTOR: "L",
    DeviceKind.VSOURCE: "V",
    DeviceKind.ISOURCE: "I",
}


class PortType(Enum):
    UNKNOWN = "unknown"
    INPUT_PLUS = "input_plus"
    INPUT_MINUS = "input_minus"
    INPUT_SINGLE = "input_single"
    OUTPUT = "output"
    OUTPUT_PLUS = "output_plus"
    OUTPUT_MINUS = "output_minus"
    VDD = "vdd"
    VSS = "vss"
    BIAS = "bias"
    FEEDBACK = "feedback"
    ENABLE = "enable"


PORT_VOCABULARY = tuple(t.value for t in PortType if t is not PortType.UNKNOWN)


@dataclass(frozen=True)
class Fixed:
    value: float


@dataclass(frozen=True)
class Tunable:
    lower: float
    upper: float

    def __post_init__(self):
        if not (self.lower < self.upper):
            raise NetlistError(f"tunable range requires lower < upper, got [{self.lower}, {self.upper}]")
        if self.lower <= 0:
            raise NetlistError(f"tunable range must be strictly positive, got lower={self.lower}")


Param = Union[Fixed, Tunable]


@dataclass(frozen=True)
class Device:
    name: str
    kind: DeviceKind
    terminals: tuple[str, ...]
    params: Mapping[str, Param] = field(default_factory=dict)

    def __post_init__(self):
        expected = 4 if self.kind in MOS_KINDS else 2
        if len(self.terminals) != expected:
            raise ArityError(self.name, f"{self.kind.name} needs {expected} terminals, got {len(self.terminals)}")

    @property
    def terminal_roles(self) -> tuple[str, ...]:
        return MOS_TERMINALS if self.kind in MOS_KINDS else TWO_TERMINALS

    def terminal(self, role: str) -> str:
        return self.terminals[self.terminal_roles.index(role)]

    @property
    def is_mos(self) -> bool:
        return self.kind in MOS_KINDS


@dataclass(frozen=True)
class Port:
    name: str
    net: str
    ptype: PortType = PortType.UNKNOWN


@dataclass(frozen=True)
class Netlist:
    """Immutable device/net graph. Construction validates all invariants."""

    name: str
    devices: tuple[Device, ...] = ()
    ports: tuple[Port, ...] = ()
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        seen_dev = set()
        for d in self.devices:
            if d.name in seen_dev:
                raise DuplicateNameError(d.name)
            seen_dev.add(d.name)
        seen_port = set()
        port_nets = set()
        for p in self.ports:
            if p.name in seen_port:
                raise DuplicateNameError(p.name)
            seen_port.add(p.name)
            if p.net in port_nets:
                raise NetlistError(f"ports may not share a net: {p.net}")
            port_nets.add(p.net)

    @property
    def nets(self) -> tuple[str, ...]:
        """All net names, sorted: derived from terminals and port references."""
        names = {t for d in self.devices for t in d.terminals}
        names.update(p.net for p in self.ports)
        return tuple(sorted(names))

    def device(self, name: str) -> Device:
        for d in self.devices:
            if d.name == name:
                return d
        raise KeyError(name)

    def port(self, name: str) -> Port:
        for p in self.ports:
            if p.name == name:
                return p
        raise KeyError(name)

    def ports_of_type(self, ptype: PortType) -> tuple[Port, ...]:
        return tuple(p for p in self.ports if p.ptype == ptype)

    def port_on_net(self, net: str) -> Optional[Port]:
        for p in self.ports:
            if p.net == net:
                return p
        return None

    def net_attachments(self, net: str) -> list[tuple[Device, str]]:
        """(device, terminal role) pairs touching the net."""
        out = []
        for d in self.devices:
            for role, t in zip(d.terminal_roles, d.terminals):
                if t == net:
                    out.append((d, role))
        return out

    def dangling_nets(self) -> tuple[str, ...]:
        """Nets with exactly one attachment, ports counted as attachments."""
        counts: dict[str, int] = {}
        for d in self.devices:
            for t in d.terminals:
                counts[t] = counts.get(t, 0) + 1
        for p in self.ports:
            counts[p.net] = counts.get(p.net, 0) + 1
        return tuple(sorted(n for n, c in counts.items() if c == 1))

    def with_ports(self, ports: Iterable[Port]) -> "Netlist":
        return Netlist(self.name, self.devices, tuple(ports), dict(self.metadata))

    def with_port_types(self, mapping: Mapping[str, PortType]) -> "Netlist":
        ports = tuple(
            Port(p.name, p.net, mapping.get(p.name, p.ptype)) for p in self.ports
        )
        return self.with_ports(ports)

    def with_devices(self, devices: Iterable[Device]) -> "Netlist":
        return Netlist(self.name, tuple(devices), self.ports, dict(self.metadata))

    def with_metadata(self, **kv: str) -> "Netlist":
        md = dict(self.metadata)
        md.update(kv)
        return Netlist(self.name, self.devices, self.ports, md)


# --------------------------------------------------------------------------
# value parsing

_SI = [
    ("meg", 1e6),
    ("f", 1e-15),
    ("p", 1e-12),
    ("n", 1e-9),
    ("u", 1e-6),
    ("m", 1e-3),
    ("k", 1e3),
    ("g", 1e9),
]

_NUM_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")
_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def parse_value(token: str, params: Mapping[str, float] | None = None) -> float:
    """Parse one scalar value: float, SI-suffixed float, or .param reference.

    Trailing unit letters after a recognized suffix are ignored (``10pF``).
    """
    token = token.strip()
    m = _NUM_RE.match(token)
    if not m:
        if params is not None and token in params:
            return params[token]
        raise ValueError(f"not a number: {token!r}")
    base = float(m.group(0))
    rest = token[m.end():].lower()
    if not rest:
        return base
    for suffix, mult in _SI:
        if rest.startswith(suffix):
            tail = rest[len(suffix):]
            if tail and not tail.isalpha():
                raise ValueError(f"bad unit suffix: {token!r}")
            return base * mult
    if rest.isalpha():
        # unit annotation without a scale factor, e.g. "0.5V"
        return base
    raise ValueError(f"bad unit suffix: {token!r}")


def parse_param_token(token: str, params: Mapping[str, float] | None = None) -> Param:
    """Parse ``value`` or ``[lo,hi]`` into Fixed/Tunable."""
    token = token.strip()
    if token.startswith("[") and token.endswith("]"):
        inner = token[1:-1]
        pieces = inner.split(",")
        if len(pieces) != 2:
            raise ValueError(f"tunable range needs two bounds: {token!r}")
        return Tunable(parse_value(pieces[0], params), parse_value(pieces[1], params))
    return Fixed(parse_value(token, params))


def format_value(v: float) -> str:
    return repr(float(v))


def format_param(p: Param) -> str:
    if isinstance(p, Tunable):
        return f"[{format_value(p.lower)},{format_value(p.upper)}]"
    return format_value(p.value)


# --------------------------------------------------------------------------
# parser

_PTYPE_BY_TOKEN = {t.value: t for t in PortType}


def _split_statement(line: str) -> list[str]:
    """Tokenize, stripping an inline ``* comment`` tail."""
    toks = []
    for tok in line.split():
        if tok.startswith("*"):
            break
        toks.append(tok)
    return toks


def parse_netlist(text: str | bytes, name: str = "netlist") -> Netlist:
    """Parse SPICE-subset source into a validated Netlist.

    Raises NetlistSyntaxError / ArityError / DuplicateNameError /
    UnknownCardError; never any other exception type, whatever the input.
    """
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as e:
            raise NetlistSyntaxError(0, f"input is not UTF-8: {e}") from None
    if not isinstance(text, str):
        raise NetlistSyntaxError(0, f"expected text, got {type(text).__name__}")

    params: dict[str, float] = {}
    devices: list[Device] = []
    port_cards: list[tuple[int, str, str, str | None]] = []
    metadata: dict[str, str] = {}
    subckt_name: str | None = None
    subckt_nets: list[str] = []
    in_subckt = False
    saw_subckt = False

    lines = text.splitlines()
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("*"):
            if line.startswith("*!"):
                body = line[2:].strip()
                if "=" in body:
                    k, _, v = body.partition("=")
                    metadata[k.strip()] = v.strip()
            continue
        toks = _split_statement(line)
        if not toks:
            continue
        card = toks[0]
        lead = card[0].upper()

        if lead == ".":
            directive = card.lower()
            if directive == ".end":
                break
            if directive == ".param":
                body = " ".join(toks[1:])
                if "=" not in body:
                    raise NetlistSyntaxError(line_no, ".param needs NAME=value")
                pname, _, pval = body.partition("=")
                pname = pname.strip()
                if not _NAME_RE.match(pname):
                    raise NetlistSyntaxError(line_no, f"bad .param name {pname!r}")
                try:
                    params[pname] = parse_value(pval.strip(), params)
                except ValueError as e:
                    raise NetlistSyntaxError(line_no, str(e)) from None
            elif directive == ".port":
                if len(toks) not in (3, 4):
                    raise NetlistSyntaxError(line_no, ".port needs <name> <net> [type]")
                port_cards.append((line_no, toks[1], toks[2], toks[3] if len(toks) == 4 else None))
            elif directive == ".subckt":
                if in_subckt or saw_subckt:
                    raise UnknownCardError(line_no, ".subckt (nested or repeated)")
                if devices:
                    raise NetlistSyntaxError(line_no, "cannot mix top-level devices with a .subckt wrapper")
                if len(toks) < 2:
                    raise NetlistSyntaxError(line_no, ".subckt needs a name")
                in_subckt = True
                saw_subckt = True
                subckt_name = toks[1]
                subckt_nets = toks[2:]
            elif directive == ".ends":
                if not in_subckt:
                    raise NetlistSyntaxError(line_no, ".ends without .subckt")
                in_subckt = False
            else:
                raise UnknownCardError(line_no, card)
            continue

        if lead not in _KIND_PREFIX:
            raise UnknownCardError(line_no, card)

        if saw_subckt and not in_subckt:
            raise NetlistSyntaxError(line_no, "device outside the .subckt wrapper")

        dev_name = card
        if lead == "M":
            if len(toks) < 6:
                raise ArityError(dev_name, f"MOS line needs 4 nets and a model, got {len(toks) - 1} fields")
            model = toks[5].upper()
            if model not in ("NMOS", "PMOS"):
                raise NetlistSyntaxError(line_no, f"unknown MOS model {toks[5]!r}")
            kind = DeviceKind[model]
            terminals = tuple(toks[1:5])
            extra = toks[6:]
            positional: list[str] = []
        else:
            kind = _KIND_PREFIX[lead]
            if len(toks) < 3:
                raise ArityError(dev_name, "two-terminal line needs 2 nets")
            terminals = tuple(toks[1:3])
            rest = toks[3:]
            positional = [t for t in rest if "=" not in t]
            extra = [t for t in rest if "=" in t]
            if len(positional) > 1:
                raise NetlistSyntaxError(line_no, f"too many positional values on {dev_name}")

        dparams: dict[str, Param] = {}
        if positional:
            try:
                dparams[_VALUE_PARAM[kind]] = parse_param_token(positional[0], params)
            except ValueError as e:
                raise NetlistSyntaxError(line_no, str(e)) from None
        for tok in extra:
            if "=" not in tok:
                raise NetlistSyntaxError(line_no, f"expected key=value, got {tok!r}")
            k, _, v = tok.partition("=")
            if not _NAME_RE.match(k):
                raise NetlistSyntaxError(line_no, f"bad parameter name {k!r}")
            try:
                dparams[k.upper()] = parse_param_token(v, params)
            except ValueError as e:
                raise NetlistSyntaxError(line_no, str(e)) from None
            except NetlistError:
                raise
        if any(d.name == dev_name for d in devices):
            raise DuplicateNameError(dev_name)
        try:
            devices.append(Device(dev_name, kind, terminals, dparams))
        except ArityError:
            raise

    if in_subckt:
        raise NetlistSyntaxError(len(lines), ".subckt without .ends")

    known_nets = {t for d in devices for t in d.terminals}
    ports: list[Port] = []
    for line_no, pname, pnet, ptok in port_cards:
        if ptok is None:
            ptype = PortType.UNKNOWN
        else:
            key = ptok.lower()
            if key not in _PTYPE_BY_TOKEN:
                raise NetlistSyntaxError(line_no, f"unknown port type {ptok!r}")
            ptype = _PTYPE_BY_TOKEN[key]
        ports.append(Port(pname, pnet, ptype))

    declared = {p.net for p in ports}
    for net in subckt_nets:
        if net not in declared:
            ports.append(Port(net, net, PortType.UNKNOWN))
            declared.add(net)

    known_nets.update(p.net for p in ports)

    nl_name = metadata.pop("name", None) or subckt_name or name
    netlist = Netlist(nl_name, tuple(devices), tuple(ports), metadata)
    dangling = netlist.dangling_nets()
    if dangling:
        netlist = netlist.with_metadata(dangling_nets=",".join(dangling))
    return netlist


# --------------------------------------------------------------------------
# emitter

def emit_netlist(n: Netlist) -> str:
    """Emit deterministic SPICE-subset text: metadata, devices, then ports,
    each sorted by name. Round-trips through parse_netlist."""
    out = [f"*! name={n.name}"]
    for key in sorted(n.metadata):
        if key == "dangling_nets":
            continue
        out.append(f"*! {key}={n.metadata[key]}")
    for d in sorted(n.devices, key=lambda d: d.name):
        toks = [d.name, *d.terminals]
        if d.is_mos:
            toks.append(d.kind.name)
        for k in sorted(d.params):
            toks.append(f"{k}={format_param(d.params[k])}")
        out.append(" ".join(toks))
    for p in sorted(n.ports, key=lambda p: p.name):
        out.append(f".port {p.name} {p.net} {p.ptype.value}")
    return "\n".join(out) + "\n"


def canonical_form(n: Netlist):
    """Hashable structural summary used for graph-isomorphism checks with
    matched names: devices (name, kind, terminals, params) and ports."""
    devs = tuple(
        (
            d.name,
            d.kind.name,
            d.terminals,
            tuple(sorted((k, type(v).__name__, format_param(v)) for k, v in d.params.items())),
        )
        for d in sorted(n.devices, key=lambda d: d.name)
    )
    ports = tuple((p.name, p.net, p.ptype.value) for p in sorted(n.ports, key=lambda p: p.name))
    return devs, ports


def isomorphic(a: Netlist, b: Netlist) -> bool:
    return canonical_form(a) == canonical_form(b)
