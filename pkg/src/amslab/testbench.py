"""Testbench templates: selection, instantiation, deck emission.

A template is a declarative text file, one per circuit class, with
placeholder syntax resolved at instantiation time:

    template <id>                  identifier
    class <CircuitClass>           which spec table applies
    require <ptype> ...            port-type multiset the DUT must cover
    open <ptype> ...               DUT ports deliberately left unconnected
    harness <none|require_probe|accept_cmfb>
    const <NAME> <value>           named constant (SI suffixes allowed)
    bias <ptype> <lo> <hi>         tunable DC source per port of that type
    cmfbref <lo> <hi>              tunable reference for an injected CMFB block
    stim <card ...>                testbench card, SPICE subset
    meas <Metric> <directive ...>  measurement directive, adapter passthrough

Placeholders: {PORT:<ptype>} resolves to the bound port's net,
{CONST:<NAME>} to a constant, {PROBE} to the loop probe device name.
Authoring one such file per class is the only per-class manual step.
"""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .annotate import PolarityAssignment
from .errors import MissingHarness, TemplateError, UnboundPort
from .netlist import (
    Fixed,
    Netlist,
    PortType,
    Tunable,
    emit_netlist,
    format_value,
    parse_value,
)
from .specs import CircuitClass, SpecTable, load_spec_tables
from .topomod import ModKind, modification_of

_PLACEHOLDER = re.compile(r"\{(PORT|CONST|PROBE|BIAS)(?::([A-Za-z0-9_]+))?\}")

CMFB_REF_SLOT = "CMFBREF"


@dataclass(frozen=True)
class TestbenchTemplate:
    template_id: str
    circuit_class: CircuitClass
    required_ports: tuple[PortType, ...]       # multiset, sorted by token
    open_ports: tuple[PortType, ...]
    harness: str                               # none | require_probe | accept_cmfb
    consts: Mapping[str, float]
    bias_rules: tuple[tuple[PortType, float, float], ...]
    cmfb_ref_range: Optional[tuple[float, float]]
    stim_lines: tuple[str, ...]
    meas_lines: tuple[tuple[str, str], ...]    # (metric name, directive text)

    @property
    def metric_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.meas_lines)


def parse_template(text: str, source: str = "<template>") -> TestbenchTemplate:
    template_id = None
    circuit_class = None
    required: list[PortType] = []
    open_ports: list[PortType] = []
    harness = "none"
    consts: dict[str, float] = {}
    bias_rules: list[tuple[PortType, float, float]] = []
    cmfb_ref = None
    stim: list[str] = []
    meas: list[tuple[str, str]] = []

    def ptype(tok: str, line_no: int) -> PortType:
        try:
            return PortType(tok.lower())
        except ValueError:
            raise TemplateError(f"{source}:{line_no}: unknown port type {tok!r}") from None

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        rest = rest.strip()
        if key == "template":
            template_id = rest
        elif key == "class":
            try:
                circuit_class = CircuitClass(rest)
            except ValueError:
                raise TemplateError(f"{source}:{line_no}: unknown class {rest!r}") from None
        elif key == "require":
            required.extend(ptype(t, line_no) for t in rest.split())
        elif key == "open":
            open_ports.extend(ptype(t, line_no) for t in rest.split())
        elif key == "harness":
            if rest not in ("none", "require_probe", "accept_cmfb"):
                raise TemplateError(f"{source}:{line_no}: unknown harness mode {rest!r}")
            harness = rest
        elif key == "const":
            name, _, val = rest.partition(" ")
            consts[name.strip()] = parse_value(val.strip())
        elif key == "bias":
            toks = rest.split()
            if len(toks) != 3:
                raise TemplateError(f"{source}:{line_no}: bias needs <ptype> <lo> <hi>")
            bias_rules.append((ptype(toks[0], line_no), parse_value(toks[1]), parse_value(toks[2])))
        elif key == "cmfbref":
            toks = rest.split()
            cmfb_ref = (parse_value(toks[0]), parse_value(toks[1]))
        elif key == "stim":
            stim.append(rest)
        elif key == "meas":
            metric, _, directive = rest.partition(" ")
            meas.append((metric.strip(), directive.strip()))
        else:
            raise TemplateError(f"{source}:{line_no}: unknown statement {key!r}")

    if template_id is None or circuit_class is None:
        raise TemplateError(f"{source}: template and class statements are mandatory")
    counts = Counter(required)
    if counts[PortType.VDD] != 1 or counts[PortType.VSS] != 1:
        raise TemplateError(f"{source}: required ports must contain exactly one vdd and one vss")
    return TestbenchTemplate(
        template_id=template_id,
        circuit_class=circuit_class,
        required_ports=tuple(sorted(required, key=lambda t: t.value)),
        open_ports=tuple(sorted(set(open_ports), key=lambda t: t.value)),
        harness=harness,
        consts=consts,
        bias_rules=tuple(bias_rules),
        cmfb_ref_range=cmfb_ref,
        stim_lines=tuple(stim),
        meas_lines=tuple(meas),
    )


def load_template_library(
    template_dir: Optional[Path] = None,
    spec_tables: Optional[Mapping[CircuitClass, SpecTable]] = None,
) -> list[TestbenchTemplate]:
    """Load and validate every *.tpl file; each metric in the class spec
    table must have at least one measurement directive."""
    tables = spec_tables or load_spec_tables()
    templates = []
    if template_dir is None:
        root = resources.files("amslab").joinpath("data/templates")
        entries = sorted((f.name, f.read_text()) for f in root.iterdir() if f.name.endswith(".tpl"))
    else:
        entries = sorted((p.name, p.read_text()) for p in Path(template_dir).glob("*.tpl"))
    for name, text in entries:
        t = parse_template(text, source=name)
        table = tables.get(t.circuit_class)
        if table is None:
            raise TemplateError(f"{name}: no spec table for class {t.circuit_class.value}")
        missing = set(table.names) - set(t.metric_names)
        if missing:
            raise TemplateError(f"{name}: metrics without a directive: {sorted(missing)}")
        templates.append(t)
    return templates


def select_templates(n: Netlist, library: Sequence[TestbenchTemplate]) -> list[TestbenchTemplate]:
    """Every template whose required port multiset the netlist covers.
    Multiple matches are all returned for parallel validation; no match is
    a legal outcome (the circuit belongs to no known class)."""
    have = Counter(p.ptype for p in n.ports)
    out = []
    for t in library:
        need = Counter(t.required_ports)
        if all(have[pt] >= cnt for pt, cnt in need.items()):
            out.append(t)
    return out


# --------------------------------------------------------------------------
# decks

@dataclass(frozen=True)
class Deck:
    """A fully specified simulation deck: the modified DUT, testbench cards,
    tunable slots, and an ordered measurement directive block."""

    dut: Netlist
    circuit_class: CircuitClass
    template_id: str
    bindings: tuple[tuple[str, str], ...]            # (port name, binding kind)
    bias_slots: tuple[tuple[str, float, float], ...]  # (param name, lo, hi)
    stim_cards: tuple[str, ...]                       # concrete, {param} markers for slots
    directives: tuple[str, ...]
    spec_table: SpecTable
    polarity: tuple[tuple[str, str], ...]             # (port name, ptype token)
    permutation_index: int = 0

    @property
    def dut_tunables(self) -> dict[str, tuple[float, float]]:
        out = {}
        for d in self.dut.devices:
            for pname, p in d.params.items():
                if isinstance(p, Tunable):
                    out[f"{d.name}.{pname}"] = (p.lower, p.upper)
        return out

    @property
    def space(self) -> dict[str, tuple[float, float]]:
        out = dict(sorted(self.dut_tunables.items()))
        for name, lo, hi in self.bias_slots:
            out[name] = (lo, hi)
        return out

    def _resolved_dut(self, params: Mapping[str, float]) -> Netlist:
        devices = []
        for d in self.dut.devices:
            if any(isinstance(p, Tunable) for p in d.params.values()):
                resolved = {
                    k: Fixed(params[f"{d.name}.{k}"]) if isinstance(p, Tunable) else p
                    for k, p in d.params.items()
                }
                devices.append(type(d)(d.name, d.kind, d.terminals, resolved))
            else:
                devices.append(d)
        return self.dut.with_devices(devices)

    def render(self, params: Mapping[str, float]) -> str:
        """Concrete deck text: netlist section, `.end`, then directives."""
        lines = [emit_netlist(self._resolved_dut(params)).rstrip("\n")]
        lines.append("* testbench")
        for card in self.stim_cards:
            lines.append(_substitute_slots(card, params))
        lines.append(".end")
        lines.extend(self.directives)
        return "\n".join(lines) + "\n"

    def symbolic_text(self) -> str:
        lines = [emit_netlist(self.dut).rstrip("\n"), "* testbench"]
        lines.extend(self.stim_cards)
        lines.append(".end")
        lines.extend(self.directives)
        return "\n".join(lines) + "\n"

    def fingerprint(self) -> str:
        cached = self.__dict__.get("_fingerprint")
        if cached is None:
            cached = hashlib.sha256(self.symbolic_text().encode()).hexdigest()
            object.__setattr__(self, "_fingerprint", cached)
        return cached


def _substitute_slots(card: str, params: Mapping[str, float]) -> str:
    def sub(m: re.Match) -> str:
        return format_value(params[m.group(1)])

    return re.sub(r"\{(bias\.[A-Za-z0-9_]+)\}", sub, card)


def instantiate(
    n: Netlist,
    template: TestbenchTemplate,
    pa: PolarityAssignment,
    spec_table: Optional[SpecTable] = None,
) -> Deck:
    """Wire the template around the DUT and emit a deterministic deck."""
    dut = pa.apply(n)
    ports_by_type: dict[PortType, list] = {}
    for p in dut.ports:
        ports_by_type.setdefault(p.ptype, []).append(p)
    for lst in ports_by_type.values():
        lst.sort(key=lambda p: p.name)

    need = Counter(template.required_ports)
    for pt, cnt in need.items():
        if len(ports_by_type.get(pt, [])) < cnt:
            raise TemplateError(
                f"template {template.template_id} requires {cnt} x {pt.value}, DUT has "
                f"{len(ports_by_type.get(pt, []))}"
            )

    mod = modification_of(dut)
    probe_device = None
    if template.harness == "require_probe":
        if mod is None or mod.kind != ModKind.LDO_LOOP_SEVER:
            raise MissingHarness(
                f"template {template.template_id} needs a loop probe; run topology modification first"
            )
        probe_device = mod.added_devices[0]

    bindings: dict[str, str] = {}
    consts = template.consts

    def resolve(card: str, line_kind: str) -> str:
        def sub(m: re.Match) -> str:
            kind, arg = m.group(1), m.group(2)
            if kind == "PORT":
                pt = PortType(arg.lower())
                plist = ports_by_type.get(pt)
                if not plist:
                    raise TemplateError(f"template {template.template_id}: no {arg} port to wire")
                if line_kind == "stim":
                    bindings.setdefault(plist[0].name, "stim")
                return plist[0].net
            if kind == "CONST":
                if arg not in consts:
                    raise TemplateError(f"template {template.template_id}: unknown const {arg}")
                return format_value(consts[arg])
            if kind == "PROBE":
                if probe_device is None:
                    raise MissingHarness(f"template {template.template_id}: {{PROBE}} needs a loop probe")
                return probe_device
            raise TemplateError(f"template {template.template_id}: bad placeholder {m.group(0)}")

        return _PLACEHOLDER.sub(sub, card)

    stim_cards = [resolve(card, "stim") for card in template.stim_lines]

    bias_slots: list[tuple[str, float, float]] = []
    for ptype, lo, hi in template.bias_rules:
        for p in ports_by_type.get(ptype, []):
            slot = f"bias.{p.name}"
            bias_slots.append((slot, lo, hi))
            stim_cards.append(f"VBIAS_{p.name} {p.net} 0 V={{{slot}}}")
            bindings[p.name] = "bias"

    if mod is not None and mod.kind == ModKind.CMFB_INJECTION and template.harness == "accept_cmfb":
        if template.cmfb_ref_range is None:
            raise TemplateError(f"template {template.template_id}: accept_cmfb needs a cmfbref range")
        lo, hi = template.cmfb_ref_range
        slot = f"bias.{CMFB_REF_SLOT}"
        bias_slots.append((slot, lo, hi))
        stim_cards.append(f"VCMREF {mod.probe_net} 0 V={{{slot}}}")

    for pt in template.open_ports:
        for p in ports_by_type.get(pt, []):
            bindings.setdefault(p.name, "open")

    for p in dut.ports:
        if p.name not in bindings:
            raise UnboundPort(p.name)

    directives = tuple(resolve(text, "meas") for _, text in template.meas_lines)

    return Deck(
        dut=dut,
        circuit_class=template.circuit_class,
        template_id=template.template_id,
        bindings=tuple(sorted(bindings.items())),
        bias_slots=tuple(sorted(bias_slots)),
        stim_cards=tuple(stim_cards),
        directives=directives,
        spec_table=spec_table if spec_table is not None else _default_table(template.circuit_class),
        polarity=tuple(sorted((k, v.value) for k, v in pa.mapping.items())),
        permutation_index=pa.permutation_index,
    )


_tables_cache: dict[CircuitClass, SpecTable] = {}


def _default_table(cls: CircuitClass) -> SpecTable:
    if not _tables_cache:
        _tables_cache.update(load_spec_tables())
    return _tables_cache[cls]
