"""Structural analysis of netlists: motif detection and the canonical
connectivity signature used for template selection and polarity work.

Motifs detected:
  * differential-pair candidates: two same-kind MOS sharing a source net
    that no port touches (the tail is internal)
  * current-mirror candidates: two same-kind MOS sharing a gate net where
    at least one is diode-connected
  * resistive dividers: a series resistor chain (length >= 2) whose end
    nets carry ports

The signature proper only contains names that survive net renaming
(device names, port names, counts), so it is stable under reordering and
renaming of nets.
"""

from __future__ import annotations

from dataclasses import dataclass

from .netlist import Device, DeviceKind, Netlist


@dataclass(frozen=True)
class DiffPair:
    devices: tuple[str, str]      # sorted device names
    kind: DeviceKind
    tail_net: str
    gate_nets: tuple[str, str]    # aligned with devices


@dataclass(frozen=True)
class Mirror:
    diode_device: str
    mirror_device: str
    kind: DeviceKind
    gate_net: str


@dataclass(frozen=True)
class DividerChain:
    resistors: tuple[str, ...]    # in path order
    end_ports: tuple[str, str]    # port names, sorted
    tap_nets: tuple[str, ...]     # internal junction nets, in path order


@dataclass(frozen=True)
class Signature:
    device_kind_counts: tuple[tuple[str, int], ...]
    port_fanout: tuple[tuple[str, int], ...]
    diff_pairs: tuple[tuple[str, str], ...]
    mirrors: tuple[tuple[str, str], ...]
    dividers: tuple[tuple[str, ...], ...]


def find_diff_pairs(n: Netlist) -> list[DiffPair]:
    port_nets = {p.net for p in n.ports}
    by_source: dict[tuple[str, str], list[Device]] = {}
    for d in n.devices:
        if d.is_mos:
            by_source.setdefault((d.kind.name, d.terminal("source")), []).append(d)
    pairs = []
    for (kind_name, src), devs in sorted(by_source.items()):
        if src in port_nets:
            continue
        devs = sorted(devs, key=lambda d: d.name)
        for i in range(len(devs)):
            for j in range(i + 1, len(devs)):
                a, b = devs[i], devs[j]
                pairs.append(
                    DiffPair(
                        devices=(a.name, b.name),
                        kind=a.kind,
                        tail_net=src,
                        gate_nets=(a.terminal("gate"), b.terminal("gate")),
                    )
                )
    return pairs


def is_diode_connected(d: Device) -> bool:
    return d.is_mos and d.terminal("gate") == d.terminal("drain")


def find_mirrors(n: Netlist) -> list[Mirror]:
    by_gate: dict[tuple[str, str], list[Device]] = {}
    for d in n.devices:
        if d.is_mos:
            by_gate.setdefault((d.kind.name, d.terminal("gate")), []).append(d)
    mirrors = []
    for (kind_name, gate), devs in sorted(by_gate.items()):
        devs = sorted(devs, key=lambda d: d.name)
        diodes = [d for d in devs if is_diode_connected(d)]
        others = [d for d in devs if not is_diode_connected(d)]
        for diode in diodes:
            for other in others:
                mirrors.append(Mirror(diode.name, other.name, diode.kind, gate))
    return mirrors


def resistor_graph(n: Netlist) -> dict[str, list[Device]]:
    """net -> resistors touching it."""
    g: dict[str, list[Device]] = {}
    for d in n.devices:
        if d.kind == DeviceKind.RESISTOR:
            for t in d.terminals:
                g.setdefault(t, []).append(d)
    return g


def walk_resistor_chain(g: dict[str, list[Device]], start_net: str, first: Device):
    """Follow a series chain from start_net through `first` until a net whose
    resistor degree differs from 2. Returns (path devices, tap nets, end net);
    tap nets may carry ports."""
    path = [first]
    taps: list[str] = []
    prev_net = start_net
    current = first
    while True:
        nxt = current.terminals[0] if current.terminals[1] == prev_net else current.terminals[1]
        attached = g.get(nxt, [])
        if len(attached) != 2:
            return path, taps, nxt
        follow = attached[0] if attached[1] is current else attached[1]
        if follow is current or follow in path:
            return path, taps, nxt
        taps.append(nxt)
        path.append(follow)
        prev_net = nxt
        current = follow


def find_divider_chains(n: Netlist) -> list[DividerChain]:
    g = resistor_graph(n)
    port_by_net = {p.net: p for p in n.ports}
    chains = []
    seen: set[tuple[str, ...]] = set()
    for start_net in sorted(g):
        if len(g[start_net]) == 2:
            continue  # interior junction, chains start at degree != 2
        for first in sorted(g[start_net], key=lambda d: d.name):
            path, taps, end_net = walk_resistor_chain(g, start_net, first)
            if len(path) < 2:
                continue
            if start_net not in port_by_net or end_net not in port_by_net:
                continue
            key = tuple(sorted(r.name for r in path))
            if key in seen:
                continue
            seen.add(key)
            ends = tuple(sorted((port_by_net[start_net].name, port_by_net[end_net].name)))
            chains.append(DividerChain(tuple(r.name for r in path), ends, tuple(taps)))
    return chains


def connectivity_signature(n: Netlist) -> Signature:
    """Net-name-independent canonical summary of the netlist structure."""
    counts: dict[str, int] = {}
    for d in n.devices:
        counts[d.kind.name] = counts.get(d.kind.name, 0) + 1
    fanout = []
    for p in sorted(n.ports, key=lambda p: p.name):
        fanout.append((p.name, len(n.net_attachments(p.net))))
    return Signature(
        device_kind_counts=tuple(sorted(counts.items())),
        port_fanout=tuple(fanout),
        diff_pairs=tuple(dp.devices for dp in find_diff_pairs(n)),
        mirrors=tuple((m.diode_device, m.mirror_device) for m in find_mirrors(n)),
        dividers=tuple(c.resistors for c in find_divider_chains(n)),
    )
