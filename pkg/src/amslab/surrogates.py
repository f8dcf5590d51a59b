"""Analytical surrogate models: a desk-scale stand-in for a foundry-grade
simulator, fast and bit-deterministic.

Each model declares its own parameter box and closed-form metric formulas
(documented per model below). Models are structure-aware where that keeps
validation honest:

  * amplifier models inspect the deck's polarity assignment against the
    differential pair and mirror wiring, so a swapped +/- permutation
    collapses the gain instead of silently passing;
  * the regulator model derives its DC output from the actual feedback
    divider and checks the error-amplifier input is DC-reachable through
    any inserted probe, so a botched loop sever shows up as VO = 0.

Running a deck of a different class than the model returns decisively
threshold-failing values for every metric, the way a wrong testbench around
a wrong circuit produces garbage rather than a crash.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Optional

from .errors import ConfigError, NoPassDevice
from .netlist import DeviceKind, Fixed, Netlist, PortType, Tunable
from .sim import EvalStatus, Evaluation, _freeze
from .signature import find_diff_pairs, find_mirrors
from .specs import CircuitClass, Direction, MetricSpec
from .testbench import Deck
from .topomod import find_pass_device

SURROGATE_KEY = "surrogate"


@dataclass(frozen=True)
class SurrogateModel:
    name: str
    circuit_class: CircuitClass
    box: Mapping[str, tuple[float, float]]
    feasible: bool                     # advertised: does a feasible point exist
    fn: Callable[[Deck, Mapping[str, float]], dict[str, float]]

    def metrics(self, deck: Deck, params: Mapping[str, float]) -> dict[str, float]:
        return self.fn(deck, params)


# --------------------------------------------------------------------------
# structural helpers

def _input_pair_devices(dut: Netlist):
    """The diff-pair devices whose gates carry the +/- input ports, ordered
    (plus side, minus side). None when the structure is absent."""
    plus = dut.ports_of_type(PortType.INPUT_PLUS)
    minus = dut.ports_of_type(PortType.INPUT_MINUS)
    if not plus or not minus:
        return None
    pnet, mnet = plus[0].net, minus[0].net
    for dp in find_diff_pairs(dut):
        if set(dp.gate_nets) == {pnet, mnet}:
            a = dut.device(dp.devices[0])
            b = dut.device(dp.devices[1])
            if a.terminal("gate") == pnet:
                return a, b
            return b, a
    return None


def single_ended_polarity_ok(dut: Netlist) -> Optional[bool]:
    """In a mirror-loaded stage the non-inverting input is the gate on the
    mirror-input (diode) side. True/False, or None if undetectable."""
    pair = _input_pair_devices(dut)
    if pair is None:
        return None
    plus_dev, minus_dev = pair
    pair_drains = {plus_dev.terminal("drain"), minus_dev.terminal("drain")}
    for mirror in find_mirrors(dut):
        diode = dut.device(mirror.diode_device)
        diode_net = diode.terminal("drain")
        if diode_net in pair_drains:
            return plus_dev.terminal("drain") == diode_net
    return None


def fully_diff_polarity_ok(dut: Netlist) -> Optional[bool]:
    """Each side inverts: the minus output must sit on the drain of the
    plus-input device. Flipping both pairs together is also electrically
    consistent and passes."""
    pair = _input_pair_devices(dut)
    out_minus = dut.ports_of_type(PortType.OUTPUT_MINUS)
    if pair is None or not out_minus:
        return None
    plus_dev, _ = pair
    return plus_dev.terminal("drain") == out_minus[0].net


# --------------------------------------------------------------------------
# DC analysis for the regulator model

def _dc_merged(n: Netlist) -> dict[str, str]:
    """Union-find representative per net, merging nets joined at DC: zero
    volt sources and inductors are shorts."""
    parent: dict[str, str] = {net: net for net in n.nets}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a: str, b: str):
        ra, rb = find(a), find(b)
        if ra != rb:
            # deterministic: smaller name wins
            lo, hi = sorted((ra, rb))
            parent[hi] = lo

    for d in n.devices:
        if d.kind == DeviceKind.INDUCTOR:
            union(*d.terminals)
        elif d.kind == DeviceKind.VSOURCE:
            v = d.params.get("V")
            if isinstance(v, Fixed) and v.value == 0.0:
                union(*d.terminals)
    return {net: find(net) for net in n.nets}


def _resolved(value, device_name: str, pname: str, params: Mapping[str, float]) -> float:
    if isinstance(value, Tunable):
        return float(params[f"{device_name}.{pname}"])
    return float(value.value)


def dc_output_voltage(dut: Netlist, params: Mapping[str, float], vref: float) -> float:
    """Regulated DC output: vref scaled by the feedback divider ratio, with
    the loop considered closed only when some non-pass MOS gate is
    DC-connected to a divider tap. A broken loop regulates nothing: 0 V."""
    try:
        pass_dev = find_pass_device(dut)
    except NoPassDevice:
        return 0.0
    outs = dut.ports_of_type(PortType.OUTPUT)
    vsses = dut.ports_of_type(PortType.VSS)
    if not outs or not vsses:
        return 0.0
    rep = _dc_merged(dut)
    out_net, vss_net = rep[outs[0].net], rep[vsses[0].net]

    graph: dict[str, list] = {}
    for d in dut.devices:
        if d.kind == DeviceKind.RESISTOR:
            for t in d.terminals:
                graph.setdefault(rep[t], []).append(d)

    gate_reps = {
        rep[d.terminal("gate")]
        for d in dut.devices
        if d.is_mos and d.name != pass_dev.name
    }

    for first in sorted(graph.get(out_net, []), key=lambda d: d.name):
        path = [first]
        junctions: list[str] = []
        prev, cur = out_net, first
        while True:
            nxt = rep[cur.terminals[0]] if rep[cur.terminals[1]] == prev else rep[cur.terminals[1]]
            if nxt == vss_net:
                break
            attached = graph.get(nxt, [])
            if len(attached) != 2:
                path = []
                break
            follow = attached[0] if attached[1] is cur else attached[1]
            if follow is cur or follow in path:
                path = []
                break
            junctions.append(nxt)
            path.append(follow)
            prev, cur = nxt, follow
        if not path or not junctions:
            continue
        values = [_resolved(r.params["R"], r.name, "R", params) for r in path]
        total = sum(values)
        for idx, tap in enumerate(junctions):
            if tap in gate_reps:
                below = sum(values[idx + 1:])
                if below <= 0:
                    return 0.0
                return vref * total / below
    return 0.0


# --------------------------------------------------------------------------
# models

def _amplifier_metrics(deck: Deck, params: Mapping[str, float],
                       gain_cap: Optional[float], fully_diff: bool) -> dict[str, float]:
    gm, ro, ibias = params["gm"], params["ro"], params["ibias"]
    gain = 20.0 * math.log10(gm * ro)
    ok = fully_diff_polarity_ok(deck.dut) if fully_diff else single_ended_polarity_ok(deck.dut)
    if ok is False:
        gain = min(gain, 10.0)
    if gain_cap is not None:
        gain = min(gain, gain_cap)
    return {
        "Gain": gain,
        "GBW": gm / (2.0 * math.pi * 1e-12) / 1e3,
        "PhaseMargin": 60.0,
        "Power": 1.8 * ibias,
        "SlewRate": ibias,
        "CMRR": gain + 20.0,
        "PSRR": -gain,
        "Area": 0.05 * ibias,
    }


_AMP_BOX = {"gm": (1e-4, 1e-2), "ro": (1e4, 1e7), "ibias": (1.0, 100.0)}


def _ota_feasible(deck, params):
    """gm [S], ro [ohm], ibias [uA]; Gain=20log10(gm*ro) dB,
    GBW=gm/(2*pi*1pF) in kHz, PM=60 deg, Power=1.8*ibias uW, SR=ibias V/us,
    CMRR=Gain+20 dB, PSRR=-Gain dB, Area=0.05*ibias um^2."""
    return _amplifier_metrics(deck, params, gain_cap=None, fully_diff=False)


def _ota_infeasible(deck, params):
    """Same formulas with Gain capped at 30 dB, below the 40 dB gate
    everywhere on the box."""
    return _amplifier_metrics(deck, params, gain_cap=30.0, fully_diff=False)


def _fd_feasible(deck, params):
    """Fully differential variant of the amplifier formulas."""
    return _amplifier_metrics(deck, params, gain_cap=None, fully_diff=True)


def _comp_feasible(deck, params):
    """itail [uA], wratio [-]; OutputSwing=1.8*w/(w+4) V,
    Power=2.16*itail uW, SlewRate=itail V/us, PropagationDelay=80/itail ns,
    InputOffset=12/sqrt(w*itail) mV, Area=0.08*w+0.01*itail um^2."""
    itail, w = params["itail"], params["wratio"]
    return {
        "OutputSwing": 1.8 * w / (w + 4.0),
        "Power": 2.16 * itail,
        "SlewRate": itail,
        "PropagationDelay": 80.0 / itail,
        "InputOffset": 12.0 / math.sqrt(w * itail),
        "Area": 0.08 * w + 0.01 * itail,
    }


def _ldo_feasible(deck, params):
    """gme [S], roe [ohm], iq [uA], drive [-], plus the reference-port bias
    slot; VO comes from the DC divider analysis, the loop metrics from the
    error amplifier small-signal formulas, the load metrics from drive."""
    gme, roe, iq, drive = params["gme"], params["roe"], params["iq"], params["drive"]
    vref = None
    for name, _, _ in deck.bias_slots:
        vref = params[name]
        break
    if vref is None:
        raise ConfigError("ldo surrogate needs a bias slot driving the reference port")
    gain = 20.0 * math.log10(gme * roe)
    return {
        "VO": dc_output_voltage(deck.dut, params, vref),
        "CurrentCapability_1mA": 1.2 * drive / (drive + 0.5),
        "CurrentCapability_4mA": 4.8 * drive / (drive + 0.5),
        "LoadRegulation_1uA": 1.1 * drive / (drive + 0.35),
        "LoadRegulation_4mA": 33.0 * drive / (drive + 0.6),
        "Gain": gain,
        "GBW": gme / (2.0 * math.pi * 1e-11) / 1e3,
        "PhaseMargin": 60.0,
        "CMRR": gain + 10.0,
        "PSRR": -gain - 2.0,
        "Power": 1.8 * iq,
        "StartupTime": 50.0 / iq,
        "RecoveryTime": 3000.0 / drive,
        "Area": 4.0 * drive + iq,
    }


def surrogate_bank() -> list[SurrogateModel]:
    """The shipped models. Infeasible variants violate at least one gating
    threshold everywhere on their box."""
    return [
        SurrogateModel("ota-feasible", CircuitClass.SINGLE_ENDED_OPAMP, _AMP_BOX, True, _ota_feasible),
        SurrogateModel("ota-infeasible", CircuitClass.SINGLE_ENDED_OPAMP, _AMP_BOX, False, _ota_infeasible),
        SurrogateModel("fd-feasible", CircuitClass.FULLY_DIFF_OPAMP, _AMP_BOX, True, _fd_feasible),
        SurrogateModel(
            "comp-feasible", CircuitClass.COMPARATOR,
            {"itail": (10.0, 500.0), "wratio": (1.0, 50.0)}, True, _comp_feasible,
        ),
        SurrogateModel(
            "ldo-feasible", CircuitClass.LDO,
            {"gme": (1e-4, 1e-2), "roe": (1e4, 1e7), "iq": (1.0, 20.0), "drive": (0.1, 10.0)},
            True, _ldo_feasible,
        ),
    ]


def get_surrogate(name: str) -> SurrogateModel:
    for m in surrogate_bank():
        if m.name == name:
            return m
    raise ConfigError(f"no surrogate model named {name!r}")


def _failing_value(spec: MetricSpec) -> float:
    """A decisively threshold-violating value for one metric."""
    if spec.direction == Direction.HIGHER_BETTER:
        span = abs(float(spec.target) - float(spec.threshold))
        return float(spec.threshold) - 10.0 * span
    if spec.direction == Direction.LOWER_BETTER:
        span = abs(float(spec.threshold) - float(spec.target))
        return float(spec.threshold) + 10.0 * span
    rl, rh = spec.threshold
    return rl - 10.0 * max(rh - rl, 1e-3)


class SurrogateBackend:
    """Dispatches decks to the surrogate named in the DUT metadata."""

    def __init__(self, bank: Optional[list[SurrogateModel]] = None):
        models = bank if bank is not None else surrogate_bank()
        self._models = {m.name: m for m in models}

    def _model(self, deck: Deck) -> SurrogateModel:
        name = deck.dut.metadata.get(SURROGATE_KEY)
        if not name:
            raise ConfigError(
                f"netlist {deck.dut.name} declares no '{SURROGATE_KEY}' metadata; "
                "the surrogate backend needs one"
            )
        if name not in self._models:
            raise ConfigError(f"unknown surrogate model {name!r}")
        return self._models[name]

    def space(self, deck: Deck) -> dict[str, tuple[float, float]]:
        out = dict(deck.space)
        out.update(self._model(deck).box)
        return dict(sorted(out.items()))

    def run(self, deck: Deck, params: Mapping[str, float]) -> Evaluation:
        model = self._model(deck)
        if model.circuit_class != deck.circuit_class:
            metrics = {m.name: _failing_value(m) for m in deck.spec_table.metrics}
        else:
            metrics = model.metrics(deck, params)
        return Evaluation(_freeze(params), _freeze(metrics), EvalStatus.OK, 0.0)
