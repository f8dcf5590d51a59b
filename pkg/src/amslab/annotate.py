"""Port-type resolution and polarity enumeration.

Unknown port types are resolved either by an external annotator speaking a
small HTTP+JSON contract (POST /annotate) or by the built-in deterministic
heuristic. Differential polarity is never assigned from names: ambiguous
ports are left as input_single/output and every legal +/- permutation is
enumerated for downstream validation by sizing feasibility.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Protocol, Sequence

import httpx

from .errors import AnnotatorInvalidLabel, AnnotatorUnavailable, DegenerateDiffPair
from .netlist import Netlist, Port, PortType, PORT_VOCABULARY, emit_netlist, parse_netlist
from .signature import find_diff_pairs


class Strategy(Enum):
    SEQUENTIAL_PORT_WISE = "sequential_port_wise"
    GLOBAL_SINGLE_PASS = "global_single_pass"


class AnnotatorClient(Protocol):
    def annotate_port(self, netlist_text: str, port: str, vocabulary: Sequence[str]) -> tuple[str, float]:
        """Label one port. Returns (label, confidence)."""
        ...

    def annotate_all(self, netlist_text: str, vocabulary: Sequence[str]) -> dict[str, tuple[str, float]]:
        """Label every unknown port in a single request (port field '*')."""
        ...


# --------------------------------------------------------------------------
# heuristic fallback

# Name rules in precedence order; first substring match wins.
_NAME_RULES = [
    (("vdd", "vcc"), PortType.VDD),
    (("gnd", "vss"), PortType.VSS),
    (("bias", "vb"), PortType.BIAS),
    (("in",), PortType.INPUT_SINGLE),
    (("out",), PortType.OUTPUT),
    (("fb",), PortType.FEEDBACK),
    (("en",), PortType.ENABLE),
]


def _name_match(port_name: str) -> PortType | None:
    lowered = port_name.lower()
    for needles, ptype in _NAME_RULES:
        if any(s in lowered for s in needles):
            return ptype
    return None


def heuristic_labels(n: Netlist) -> dict[str, PortType]:
    """Deterministic rule table for every port with ptype unknown.

    Name substrings first, then connectivity tie-breaks:
    net on every device bulk -> vss; net on a diff-pair gate -> input_single;
    the single highest non-gate fan-out net -> output; leftovers -> bias.
    """
    labels: dict[str, PortType] = {}
    unknown = sorted((p for p in n.ports if p.ptype == PortType.UNKNOWN), key=lambda p: p.name)
    unresolved: list[Port] = []
    for p in unknown:
        hit = _name_match(p.name)
        if hit is not None:
            labels[p.name] = hit
        else:
            unresolved.append(p)
    if not unresolved:
        return labels

    mos = [d for d in n.devices if d.is_mos]
    bulk_nets = {d.terminal("bulk") for d in mos}
    diff_gate_nets = {g for dp in find_diff_pairs(n) for g in dp.gate_nets}

    def non_gate_fanout(net: str) -> int:
        return sum(1 for _, role in n.net_attachments(net) if role != "gate")

    still: list[Port] = []
    for p in unresolved:
        if mos and bulk_nets == {p.net}:
            labels[p.name] = PortType.VSS
        elif p.net in diff_gate_nets:
            labels[p.name] = PortType.INPUT_SINGLE
        else:
            still.append(p)
    if still:
        ranked = sorted(still, key=lambda p: (-non_gate_fanout(p.net), p.name))
        fanouts = [non_gate_fanout(p.net) for p in ranked]
        if len(ranked) == 1 or fanouts[0] > fanouts[1]:
            labels[ranked[0].name] = PortType.OUTPUT
            still = ranked[1:]
        else:
            still = ranked
    for p in still:
        labels[p.name] = PortType.BIAS
    return labels


def heuristic_annotate(n: Netlist) -> Netlist:
    """Resolve every unknown port by the heuristic rule table."""
    return n.with_port_types({k: v for k, v in heuristic_labels(n).items()})


class HeuristicAnnotator:
    """In-process client serving the heuristic rule table."""

    def annotate_port(self, netlist_text: str, port: str, vocabulary: Sequence[str]) -> tuple[str, float]:
        n = parse_netlist(netlist_text)
        labels = heuristic_labels(n)
        if port not in labels:
            # a known port that is not unknown keeps its declared type
            ptype = n.port(port).ptype
            return ptype.value, 1.0
        return labels[port].value, 1.0

    def annotate_all(self, netlist_text: str, vocabulary: Sequence[str]) -> dict[str, tuple[str, float]]:
        n = parse_netlist(netlist_text)
        return {name: (ptype.value, 1.0) for name, ptype in heuristic_labels(n).items()}


class HttpAnnotatorClient:
    """Client for the POST /annotate contract.

    Body: {"netlist": <spice text>, "port": <name or "*">, "vocabulary": [...]}.
    Response: {"port", "label", "confidence"} for one port, or a JSON array of
    the same objects when port is "*".
    """

    def __init__(self, base_url: str, timeout: float = 10.0, retries: int = 2,
                 client: httpx.Client | None = None):
        self._client = client or httpx.Client(base_url=base_url, timeout=timeout)
        self._retries = retries

    def _post(self, payload: dict):
        last = None
        for _ in range(self._retries + 1):
            try:
                resp = self._client.post("/annotate", json=payload)
            except httpx.HTTPError as e:
                last = e
                continue
            if resp.status_code != 200:
                raise AnnotatorUnavailable(f"annotator returned HTTP {resp.status_code}")
            try:
                return resp.json()
            except json.JSONDecodeError as e:
                raise AnnotatorUnavailable(f"annotator returned invalid JSON: {e}") from None
        raise AnnotatorUnavailable(f"annotator unreachable: {last}")

    def annotate_port(self, netlist_text: str, port: str, vocabulary: Sequence[str]) -> tuple[str, float]:
        data = self._post({"netlist": netlist_text, "port": port, "vocabulary": list(vocabulary)})
        if not isinstance(data, dict) or "label" not in data:
            raise AnnotatorUnavailable("malformed annotator response")
        return str(data["label"]), float(data.get("confidence", 0.0))

    def annotate_all(self, netlist_text: str, vocabulary: Sequence[str]) -> dict[str, tuple[str, float]]:
        data = self._post({"netlist": netlist_text, "port": "*", "vocabulary": list(vocabulary)})
        if not isinstance(data, list):
            raise AnnotatorUnavailable("expected a JSON array for a '*' request")
        out = {}
        for item in data:
            out[str(item["port"])] = (str(item["label"]), float(item.get("confidence", 0.0)))
        return out


# --------------------------------------------------------------------------
# annotation driver

_LABEL_TO_PTYPE = {t.value: t for t in PortType if t is not PortType.UNKNOWN}


def annotate_ports(n: Netlist, client: AnnotatorClient,
                   strategy: Strategy = Strategy.SEQUENTIAL_PORT_WISE) -> Netlist:
    """Resolve unknown ports through the client; returns a fully typed copy.

    Sequential strategy issues exactly one request per unknown port; the
    single-pass strategy issues one request total.
    """
    unknown = sorted((p.name for p in n.ports if p.ptype == PortType.UNKNOWN))
    if not unknown:
        return n
    text = emit_netlist(n)
    raw: dict[str, tuple[str, float]] = {}
    if strategy == Strategy.SEQUENTIAL_PORT_WISE:
        for name in unknown:
            raw[name] = client.annotate_port(text, name, PORT_VOCABULARY)
    else:
        raw = client.annotate_all(text, PORT_VOCABULARY)
    mapping: dict[str, PortType] = {}
    for name in unknown:
        if name not in raw:
            raise AnnotatorInvalidLabel(name, "<missing>")
        label, _conf = raw[name]
        if label not in _LABEL_TO_PTYPE:
            raise AnnotatorInvalidLabel(name, label)
        mapping[name] = _LABEL_TO_PTYPE[label]
    return n.with_port_types(mapping)


# --------------------------------------------------------------------------
# polarity enumeration

@dataclass(frozen=True)
class PolarityAssignment:
    """One +/- role assignment for the ambiguous differential ports."""

    mapping: Mapping[str, PortType]
    permutation_index: int

    def apply(self, n: Netlist) -> Netlist:
        return n.with_port_types(dict(self.mapping))


def _ambiguous_pairs(n: Netlist) -> list[tuple[tuple[str, str], tuple[PortType, PortType]]]:
    """Port-name pairs to permute, each with its (plus, minus) role types."""
    pairs: list[tuple[tuple[str, str], tuple[PortType, PortType]]] = []
    input_ports = {p.net: p for p in n.ports if p.ptype == PortType.INPUT_SINGLE}
    taken: set[str] = set()
    for dp in find_diff_pairs(n):
        ga, gb = dp.gate_nets
        if ga == gb:
            if ga in input_ports:
                raise DegenerateDiffPair(f"pair {dp.devices} gates share net {ga}")
            continue
        if ga in input_ports and gb in input_ports:
            a, b = sorted((input_ports[ga].name, input_ports[gb].name))
            if a not in taken and b not in taken:
                pairs.append(((a, b), (PortType.INPUT_PLUS, PortType.INPUT_MINUS)))
                taken.update((a, b))
    outs = sorted(p.name for p in n.ports if p.ptype == PortType.OUTPUT)
    if len(outs) == 2:
        pairs.append(((outs[0], outs[1]), (PortType.OUTPUT_PLUS, PortType.OUTPUT_MINUS)))
    return sorted(pairs, key=lambda item: item[0])


def enumerate_polarities(n: Netlist) -> list[PolarityAssignment]:
    """All legal polarity permutations, in permutation_index order.

    One differential input pair with a single-ended output yields 2
    assignments, input plus output pairs yield 4, and a netlist with no
    ambiguous differential structure yields the single identity assignment.
    """
    pairs = _ambiguous_pairs(n)
    count = 1 << len(pairs)
    out = []
    for index in range(count):
        mapping: dict[str, PortType] = {}
        for bit, ((a, b), (plus, minus)) in enumerate(pairs):
            if (index >> bit) & 1:
                mapping[b], mapping[a] = plus, minus
            else:
                mapping[a], mapping[b] = plus, minus
        out.append(PolarityAssignment(mapping, index))
    return out
