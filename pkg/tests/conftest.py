import random
from importlib import resources
from pathlib import Path

import pytest

from amslab.annotate import enumerate_polarities, heuristic_annotate
from amslab.netlist import (
    Device,
    DeviceKind,
    Fixed,
    Netlist,
    Port,
    PortType,
    Tunable,
    parse_netlist,
)
from amslab.specs import CircuitClass
from amslab.testbench import instantiate, load_template_library, select_templates
from amslab.topomod import apply_cmfb, apply_ldo_sever

DATA_DIR = Path(__file__).parent / "data"


def corpus_text(name: str) -> str:
    return resources.files("amslab").joinpath(f"data/corpus/{name}.sp").read_text()


def corpus_netlist(name: str) -> Netlist:
    return parse_netlist(corpus_text(name), name=name)


def annotated_fixture(name: str) -> Netlist:
    return heuristic_annotate(corpus_netlist(name))


@pytest.fixture(scope="session")
def template_library():
    return load_template_library()


def build_deck(name: str, circuit_class: CircuitClass, permutation: int = 0,
               library=None):
    """Annotate -> polarity -> class-specific modification -> deck, the same
    chain the pipeline runs."""
    library = library or load_template_library()
    ann = annotated_fixture(name)
    pa = enumerate_polarities(ann)[permutation]
    polarized = pa.apply(ann)
    if circuit_class == CircuitClass.FULLY_DIFF_OPAMP:
        polarized, _ = apply_cmfb(polarized)
    elif circuit_class == CircuitClass.LDO:
        polarized, _ = apply_ldo_sever(polarized)
    template = next(
        t for t in select_templates(polarized, library) if t.circuit_class == circuit_class
    )
    return instantiate(polarized, template, pa)


# ---------------------------------------------------------------------------
# random netlist generation for round-trip and fuzz properties

_KINDS = list(DeviceKind)
_PTYPES = [t for t in PortType]


def make_random_netlist(rng: random.Random) -> Netlist:
    net_pool = [f"n{i}" for i in range(rng.randint(2, 12))]
    devices = []
    for i in range(rng.randint(0, 14)):
        kind = rng.choice(_KINDS)
        arity = 4 if kind in (DeviceKind.NMOS, DeviceKind.PMOS) else 2
        prefix = "M" if kind in (DeviceKind.NMOS, DeviceKind.PMOS) else kind.value
        terminals = tuple(rng.choice(net_pool) for _ in range(arity))
        params = {}
        for pname in rng.sample(["W", "L", "R", "C", "V", "I", "AC"], rng.randint(0, 3)):
            if rng.random() < 0.3:
                lo = 10 ** rng.uniform(-9, 0)
                params[pname] = Tunable(lo, lo * rng.uniform(1.5, 1e4))
            else:
                params[pname] = Fixed(rng.uniform(-5, 5) if pname in ("V", "AC") else 10 ** rng.uniform(-12, 6))
        devices.append(Device(f"{prefix}{i}", kind, terminals, params))
    ports = []
    port_nets = rng.sample(net_pool, min(len(net_pool), rng.randint(0, 4)))
    for i, net in enumerate(port_nets):
        ports.append(Port(f"P{i}", net, rng.choice(_PTYPES)))
    return Netlist(f"rand_{rng.randint(0, 10**9)}", tuple(devices), tuple(ports),
                   {"source": f"gen{rng.randint(0, 999)}"})
