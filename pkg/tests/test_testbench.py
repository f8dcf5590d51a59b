import random

import pytest

from amslab.annotate import PolarityAssignment, enumerate_polarities
from amslab.errors import MissingHarness, TemplateError, UnboundPort
from amslab.netlist import Port, PortType, parse_netlist
from amslab.specs import CircuitClass, Direction, default_spec_table, load_spec_tables
from amslab.testbench import (
    instantiate,
    load_template_library,
    parse_template,
    select_templates,
)
from conftest import annotated_fixture, build_deck

IDENTITY = PolarityAssignment({}, 0)


# --------------------------------------------------------------------------
# selection

def test_single_ended_port_set_matches_opamp_and_comparator(template_library):
    ann = annotated_fixture("ota5t_a")
    polarized = enumerate_polarities(ann)[1].apply(ann)
    got = {t.circuit_class for t in select_templates(polarized, template_library)}
    assert got == {CircuitClass.SINGLE_ENDED_OPAMP, CircuitClass.COMPARATOR}


def test_no_vdd_port_matches_nothing(template_library):
    n = parse_netlist("R1 a b 1k\n.port P1 a output\n.port P2 b vss")
    assert select_templates(n, template_library) == []


def test_fully_diff_fixture_matches_only_fd_template(template_library):
    ann = annotated_fixture("fd_ota")
    polarized = enumerate_polarities(ann)[0].apply(ann)
    got = [t.template_id for t in select_templates(polarized, template_library)]
    assert got == ["fully_diff_opamp"]


def test_ldo_fixture_matches_only_ldo_template(template_library):
    got = [t.template_id for t in select_templates(annotated_fixture("ldo"), template_library)]
    assert got == ["ldo"]


def test_selection_is_monotone_in_ports(template_library):
    rng = random.Random(11)
    base = annotated_fixture("ota5t_a")
    polarized = enumerate_polarities(base)[1].apply(base)
    before = {t.template_id for t in select_templates(polarized, template_library)}
    extra_types = [PortType.ENABLE, PortType.FEEDBACK, PortType.BIAS, PortType.OUTPUT]
    for trial in range(20):
        ports = list(polarized.ports)
        for i, ptype in enumerate(rng.sample(extra_types, rng.randint(1, len(extra_types)))):
            ports.append(Port(f"EXTRA{i}", f"xnet{i}", ptype))
        grown = polarized.with_ports(ports)
        after = {t.template_id for t in select_templates(grown, template_library)}
        assert before <= after


# --------------------------------------------------------------------------
# instantiation

def test_opamp_deck_contents():
    deck = build_deck("ota5t_a", CircuitClass.SINGLE_ENDED_OPAMP, permutation=1)
    ac_sources = [c for c in deck.stim_cards if "AC=" in c]
    caps = [c for c in deck.stim_cards if c.startswith("C")]
    supplies = [c for c in deck.stim_cards if c.startswith("V") and "{" not in c and "AC=" not in c]
    tunable_bias = [c for c in deck.stim_cards if "{bias." in c]
    assert len(ac_sources) == 1
    assert len(caps) == 1
    assert len(supplies) >= 2          # vdd and vss rails
    assert len(tunable_bias) == 1
    assert len(deck.directives) == 8   # one per OpAmp metric
    assert len(deck.bias_slots) == 1


def test_deck_render_is_deterministic_and_reparses():
    deck_a = build_deck("ota5t_a", CircuitClass.SINGLE_ENDED_OPAMP, permutation=1)
    deck_b = build_deck("ota5t_a", CircuitClass.SINGLE_ENDED_OPAMP, permutation=1)
    params = {"bias.VB": 0.8}
    assert deck_a.render(params) == deck_b.render(params)
    assert deck_a.fingerprint() == deck_b.fingerprint()
    # the netlist section parses; directives sit after .end and are ignored
    reparsed = parse_netlist(deck_a.render(params))
    assert any(d.name == "VSUP" for d in reparsed.devices)


def test_ldo_template_requires_probe_harness(template_library):
    ann = annotated_fixture("ldo")
    template = next(t for t in template_library if t.circuit_class == CircuitClass.LDO)
    with pytest.raises(MissingHarness):
        instantiate(ann, template, IDENTITY)


def test_ldo_deck_has_probe_measurements():
    deck = build_deck("ldo", CircuitClass.LDO)
    assert len(deck.directives) == 14
    assert any("VIPROBE" in d for d in deck.directives)
    assert ("VFB", "open") in deck.bindings


def test_unbound_port_rejected(template_library):
    ann = annotated_fixture("ota5t_a")
    polarized = enumerate_polarities(ann)[1].apply(ann)
    with_enable = polarized.with_ports(tuple(polarized.ports) + (Port("EN", "en_net", PortType.ENABLE),))
    template = next(t for t in template_library if t.circuit_class == CircuitClass.SINGLE_ENDED_OPAMP)
    with pytest.raises(UnboundPort):
        instantiate(with_enable, template, IDENTITY)


def test_missing_required_port_is_a_template_error(template_library):
    ann = annotated_fixture("ldo")
    template = next(t for t in template_library if t.circuit_class == CircuitClass.SINGLE_ENDED_OPAMP)
    with pytest.raises(TemplateError):
        instantiate(ann, template, IDENTITY)


def test_cmfb_ref_slot_added_when_injected():
    deck = build_deck("fd_ota", CircuitClass.FULLY_DIFF_OPAMP, permutation=0)
    slots = dict((name, (lo, hi)) for name, lo, hi in deck.bias_slots)
    assert "bias.CMFBREF" in slots
    assert "bias.VB" in slots and "bias.VBT" in slots
    assert any("VCMREF" in c for c in deck.stim_cards)


def test_template_must_cover_every_metric():
    text = (
        "template t\nclass SingleEndedOpAmp\n"
        "require input_plus input_minus output vdd vss\n"
        "stim VSUP {PORT:vdd} 0 V=1.8\n"
        "meas Gain .meas ac Gain\n"
    )
    t = parse_template(text)
    import pathlib
    import tempfile

    with tempfile.TemporaryDirectory() as d:
        (pathlib.Path(d) / "t.tpl").write_text(text)
        with pytest.raises(TemplateError):
            load_template_library(pathlib.Path(d))
    assert t.metric_names == ("Gain",)


def test_template_requires_single_vdd_vss():
    with pytest.raises(TemplateError):
        parse_template("template t\nclass LDO\nrequire output vdd\n")


# --------------------------------------------------------------------------
# the shipped metric tables (golden values)

def test_default_opamp_table_golden():
    table = default_spec_table(CircuitClass.SINGLE_ENDED_OPAMP)
    rows = {m.name: m for m in table.metrics}
    assert len(table.metrics) == 8
    assert rows["Gain"].threshold == 40 and rows["Gain"].target == 80 and rows["Gain"].gating
    assert rows["GBW"].threshold == 100 and rows["GBW"].target == 10000 and rows["GBW"].gating
    assert rows["PhaseMargin"].threshold == 30 and rows["PhaseMargin"].target == 45 and rows["PhaseMargin"].gating
    assert rows["Power"].threshold == 4.5 and rows["Power"].target == 0.5
    assert rows["Power"].direction == Direction.LOWER_BETTER and not rows["Power"].gating
    assert rows["SlewRate"].threshold == 0.1 and rows["SlewRate"].target == 8000
    assert rows["CMRR"].threshold == 40 and rows["CMRR"].target == 90
    assert rows["PSRR"].threshold == -40 and rows["PSRR"].target == -60
    assert rows["PSRR"].direction == Direction.LOWER_BETTER
    assert rows["Area"].threshold == 8 and rows["Area"].target == 1
    assert [m.name for m in table.gating] == ["Gain", "GBW", "PhaseMargin"]


def test_default_comparator_table_golden():
    table = default_spec_table(CircuitClass.COMPARATOR)
    rows = {m.name: m for m in table.metrics}
    assert len(table.metrics) == 6
    # swing gate is supply-relative: VDD/2 and 2*VDD/3 at the 1.8 V supply
    assert rows["OutputSwing"].threshold == pytest.approx(0.9)
    assert rows["OutputSwing"].target == pytest.approx(1.2)
    assert rows["OutputSwing"].gating
    assert rows["PropagationDelay"].threshold == 0.8
    assert rows["PropagationDelay"].target == 0.2
    assert rows["PropagationDelay"].direction == Direction.LOWER_BETTER
    assert rows["Power"].threshold == 100 and rows["Power"].target == 20
    assert rows["SlewRate"].threshold == 100 and rows["SlewRate"].target == 2000
    assert rows["InputOffset"].threshold == 10 and rows["InputOffset"].target == 1
    assert rows["Area"].threshold == 4 and rows["Area"].target == 1
    assert [m.name for m in table.gating] == ["OutputSwing"]


def test_default_ldo_table_golden():
    table = default_spec_table(CircuitClass.LDO)
    rows = {m.name: m for m in table.metrics}
    assert len(table.metrics) == 14
    assert rows["VO"].direction == Direction.RANGE_TARGET
    assert rows["VO"].threshold == (1.5975, 1.6025)
    assert rows["VO"].target == (1.5985, 1.6015)
    assert rows["Power"].threshold == 14.4 and rows["Power"].target == 10.8
    assert rows["Power"].condition == "98C"
    assert rows["CurrentCapability_1mA"].threshold == 0.9 and rows["CurrentCapability_1mA"].target == 1
    assert rows["CurrentCapability_4mA"].threshold == 3.6 and rows["CurrentCapability_4mA"].target == 4
    assert rows["LoadRegulation_1uA"].threshold == 0.9 and rows["LoadRegulation_1uA"].target == 1
    assert rows["LoadRegulation_4mA"].threshold == 27 and rows["LoadRegulation_4mA"].target == 30
    assert rows["Gain"].threshold == 40 and rows["Gain"].target == 45
    assert rows["GBW"].threshold == 90 and rows["GBW"].target == 180
    assert rows["PhaseMargin"].threshold == 30 and rows["PhaseMargin"].target == 45
    assert rows["CMRR"].threshold == 55 and rows["CMRR"].target == 60
    assert rows["PSRR"].threshold == -36 and rows["PSRR"].target == -40
    assert rows["StartupTime"].threshold == 30 and rows["StartupTime"].target == 20
    assert rows["RecoveryTime"].threshold == 2000 and rows["RecoveryTime"].target == 800
    assert rows["Area"].threshold == 60 and rows["Area"].target == 20
    assert {m.name for m in table.gating} == {
        "VO", "CurrentCapability_1mA", "CurrentCapability_4mA",
        "LoadRegulation_1uA", "LoadRegulation_4mA",
    }


def test_fd_opamp_table_mirrors_opamp():
    se = default_spec_table(CircuitClass.SINGLE_ENDED_OPAMP)
    fd = default_spec_table(CircuitClass.FULLY_DIFF_OPAMP)
    assert [(m.name, m.threshold, m.target, m.gating) for m in se.metrics] == \
        [(m.name, m.threshold, m.target, m.gating) for m in fd.metrics]


def test_spec_tables_loadable_from_file(tmp_path):
    from importlib import resources

    raw = resources.files("amslab").joinpath("data/specs.json").read_text()
    p = tmp_path / "specs.json"
    p.write_text(raw)
    tables = load_spec_tables(p)
    assert set(tables) == set(CircuitClass)
