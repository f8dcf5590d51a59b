"""Intrusive topology modification.

Two documented patterns: common-mode feedback injection for fully
differential stages with floating output common mode, and feedback-loop
severing with a zero-volt probe for regulators. Both preserve the external
port set exactly and return a Modification record that the database keeps
so the original DUT can be reconstructed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .errors import (
    AlreadyModified,
    NoFeedbackDivider,
    NoPassDevice,
    NotFullyDifferential,
)
from .netlist import Device, DeviceKind, Fixed, Netlist, PortType, Tunable
from .signature import resistor_graph, walk_resistor_chain

MODIFICATION_KEY = "modification"


class ModKind(Enum):
    CMFB_INJECTION = "cmfb_injection"
    CMFB_HARNESS_ACTUATION = "cmfb_harness_actuation"
    LDO_LOOP_SEVER = "ldo_loop_sever"
    NONE = "none"


class OutputStage(Enum):
    HIGH_IMPEDANCE = "high_impedance"
    RESISTIVE_OR_DIVIDER = "resistive_or_divider"


@dataclass(frozen=True)
class Modification:
    kind: ModKind
    added_devices: tuple[str, ...] = ()
    added_nets: tuple[str, ...] = ()
    severed: Optional[tuple[str, str]] = None   # (net, "device.terminal")
    probe_net: Optional[str] = None             # probe/reference net the harness drives

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": self.kind.value,
                "added_devices": list(self.added_devices),
                "added_nets": list(self.added_nets),
                "severed": list(self.severed) if self.severed else None,
                "probe_net": self.probe_net,
            },
            sort_keys=True,
        )

    @staticmethod
    def from_json(text: str) -> "Modification":
        d = json.loads(text)
        return Modification(
            kind=ModKind(d["kind"]),
            added_devices=tuple(d.get("added_devices", ())),
            added_nets=tuple(d.get("added_nets", ())),
            severed=tuple(d["severed"]) if d.get("severed") else None,
            probe_net=d.get("probe_net"),
        )


def modification_of(n: Netlist) -> Optional[Modification]:
    raw = n.metadata.get(MODIFICATION_KEY)
    return Modification.from_json(raw) if raw else None


def _check_unmodified(n: Netlist):
    if MODIFICATION_KEY in n.metadata:
        raise AlreadyModified(f"netlist {n.name} already carries a modification")


def _record(n: Netlist, mod: Modification) -> Netlist:
    return n.with_metadata(**{MODIFICATION_KEY: mod.to_json()})


def _fresh_name(taken: set[str], base: str) -> str:
    if base not in taken:
        return base
    i = 1
    while f"{base}_{i}" in taken:
        i += 1
    return f"{base}_{i}"


# --------------------------------------------------------------------------
# fully differential output stage

def _rail_nets(n: Netlist) -> set[str]:
    return {p.net for p in n.ports if p.ptype in (PortType.VDD, PortType.VSS)}


def _resistor_reach(n: Netlist, start: str) -> set[str]:
    g = resistor_graph(n)
    seen = {start}
    frontier = [start]
    while frontier:
        net = frontier.pop()
        for r in g.get(net, []):
            for t in r.terminals:
                if t not in seen:
                    seen.add(t)
                    frontier.append(t)
    return seen


def classify_output_stage(n: Netlist) -> OutputStage:
    """High-impedance iff neither differential output net has a resistor
    path to a supply rail or to the other output."""
    plus = n.ports_of_type(PortType.OUTPUT_PLUS)
    minus = n.ports_of_type(PortType.OUTPUT_MINUS)
    if not plus or not minus:
        raise NotFullyDifferential(f"netlist {n.name} lacks output_plus/output_minus ports")
    rails = _rail_nets(n)
    p_net, m_net = plus[0].net, minus[0].net
    if (_resistor_reach(n, p_net) & (rails | {m_net})) or (
        _resistor_reach(n, m_net) & (rails | {p_net})
    ):
        return OutputStage.RESISTIVE_OR_DIVIDER
    return OutputStage.HIGH_IMPEDANCE


def _controlling_bias_port(n: Netlist, out_nets: set[str]):
    """Bias port whose net gates the most MOS devices draining into the
    outputs (the load current sources)."""
    best = None
    best_count = 0
    for p in sorted(n.ports_of_type(PortType.BIAS), key=lambda p: p.name):
        count = sum(
            1
            for d in n.devices
            if d.is_mos and d.terminal("gate") == p.net and d.terminal("drain") in out_nets
        )
        if count > best_count:
            best, best_count = p, count
    return best


def apply_cmfb(n: Netlist) -> tuple[Netlist, Modification]:
    """Stabilize a floating output common mode.

    Inserts two sensing resistors into a common-mode net plus one MOS error
    device comparing it against a new reference net and steering the
    identified bias net. Falls back to harness actuation (no devices; the
    testbench drives the existing bias port) when no controlling bias net
    exists, and is a no-op for resistive/divider output stages.
    """
    _check_unmodified(n)
    if classify_output_stage(n) == OutputStage.RESISTIVE_OR_DIVIDER:
        mod = Modification(ModKind.NONE)
        return _record(n, mod), mod

    out_p = n.ports_of_type(PortType.OUTPUT_PLUS)[0].net
    out_m = n.ports_of_type(PortType.OUTPUT_MINUS)[0].net
    bias_port = _controlling_bias_port(n, {out_p, out_m})
    if bias_port is None:
        mod = Modification(ModKind.CMFB_HARNESS_ACTUATION)
        return _record(n, mod), mod

    nets = set(n.nets)
    cm_net = _fresh_name(nets, "cmfb_sense")
    nets.add(cm_net)
    ref_net = _fresh_name(nets, "cmfb_ref")
    dev_names = {d.name for d in n.devices}
    r1 = _fresh_name(dev_names, "RCMFB1")
    dev_names.add(r1)
    r2 = _fresh_name(dev_names, "RCMFB2")
    dev_names.add(r2)
    mdev = _fresh_name(dev_names, "MCMFB")

    # Sensing resistors are tunable so the sizing engine can trade loading
    # against sense bandwidth.
    added = (
        Device(r1, DeviceKind.RESISTOR, (out_p, cm_net), {"R": Tunable(1e4, 1e6)}),
        Device(r2, DeviceKind.RESISTOR, (out_m, cm_net), {"R": Tunable(1e4, 1e6)}),
        Device(
            mdev,
            DeviceKind.NMOS,
            (bias_port.net, cm_net, ref_net, ref_net),
            {"W": Fixed(2e-6), "L": Fixed(2e-7)},
        ),
    )
    out = n.with_devices(tuple(n.devices) + added)
    mod = Modification(
        ModKind.CMFB_INJECTION,
        added_devices=tuple(d.name for d in added),
        added_nets=(cm_net, ref_net),
        probe_net=ref_net,
    )
    return _record(out, mod), mod


# --------------------------------------------------------------------------
# regulator loop sever

def _param_upper(p) -> float:
    return p.upper if isinstance(p, Tunable) else p.value


# Amplifier loads also bridge the supply and output nets; only genuinely
# wide devices qualify as a regulator pass transistor.
PASS_DEVICE_MIN_WIDTH = 5e-5


def find_pass_device(n: Netlist) -> Device:
    """Widest MOS (at least PASS_DEVICE_MIN_WIDTH wide) whose drain/source
    directly bridges the supply and output nets. Ties are refused rather
    than guessed."""
    vdd = n.ports_of_type(PortType.VDD)
    out = n.ports_of_type(PortType.OUTPUT)
    if not vdd or not out:
        raise NoPassDevice("need vdd and output ports to locate a pass device")
    vdd_net, out_net = vdd[0].net, out[0].net
    candidates = [
        d
        for d in n.devices
        if d.is_mos
        and {d.terminal("drain"), d.terminal("source")} == {vdd_net, out_net}
        and _param_upper(d.params.get("W", Fixed(1e-9))) >= PASS_DEVICE_MIN_WIDTH
    ]
    if not candidates:
        raise NoPassDevice(f"no sufficiently wide MOS bridges {vdd_net} and {out_net}")
    widths = sorted(
        ((_param_upper(d.params.get("W", Fixed(0.0))), d.name, d) for d in candidates),
        reverse=True,
    )
    if len(widths) > 1 and widths[0][0] == widths[1][0]:
        raise NoPassDevice("ambiguous pass device: equal maximum widths")
    return widths[0][2]


@dataclass
class LdoStructure:
    pass_device: Device
    chain: tuple[str, ...]          # resistor names, output side first
    taps: tuple[str, ...]
    sense_tap: str                  # tap net feeding the error amplifier
    amp_gates: tuple[tuple[str, str], ...] = field(default_factory=tuple)  # (device, "gate")


def ldo_structure(n: Netlist) -> LdoStructure:
    pass_dev = find_pass_device(n)
    out_net = n.ports_of_type(PortType.OUTPUT)[0].net
    vss = n.ports_of_type(PortType.VSS)
    if not vss:
        raise NoFeedbackDivider("no vss port for the divider to land on")
    vss_net = vss[0].net
    g = resistor_graph(n)
    for first in sorted(g.get(out_net, []), key=lambda d: d.name):
        path, taps, end = walk_resistor_chain(g, out_net, first)
        if end != vss_net or not taps:
            continue
        for tap in taps:
            gates = tuple(
                (d.name, "gate")
                for d, role in n.net_attachments(tap)
                if role == "gate" and d.name != pass_dev.name
            )
            if gates:
                return LdoStructure(
                    pass_device=pass_dev,
                    chain=tuple(r.name for r in path),
                    taps=tuple(taps),
                    sense_tap=tap,
                    amp_gates=gates,
                )
    raise NoFeedbackDivider(f"no resistor chain from {out_net} to {vss_net} feeds an amplifier gate")


def apply_ldo_sever(n: Netlist) -> tuple[Netlist, Modification]:
    """Split the net between the divider tap and the error-amplifier input
    and bridge it with a zero-volt probe source (a DC short), so loop gain
    can be measured without disturbing the operating point."""
    _check_unmodified(n)
    structure = ldo_structure(n)
    tap = structure.sense_tap
    moved = {name for name, _ in structure.amp_gates}

    nets = set(n.nets)
    sense_net = _fresh_name(nets, "iprobe_sense")
    dev_names = {d.name for d in n.devices}
    probe_name = _fresh_name(dev_names, "VIPROBE")

    devices = []
    for d in n.devices:
        if d.name in moved:
            terms = tuple(
                sense_net if role == "gate" and t == tap else t
                for role, t in zip(d.terminal_roles, d.terminals)
            )
            devices.append(Device(d.name, d.kind, terms, dict(d.params)))
        else:
            devices.append(d)
    devices.append(Device(probe_name, DeviceKind.VSOURCE, (tap, sense_net), {"V": Fixed(0.0)}))

    out = n.with_devices(devices)
    mod = Modification(
        ModKind.LDO_LOOP_SEVER,
        added_devices=(probe_name,),
        added_nets=(sense_net,),
        severed=(tap, f"{sorted(moved)[0]}.gate"),
        probe_net=sense_net,
    )
    return _record(out, mod), mod
