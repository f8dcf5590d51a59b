import json
from importlib import resources
from pathlib import Path

import pytest

from amslab.cli import main
from amslab.config import PipelineConfig, load_config
from amslab.database import Store
from amslab.errors import ConfigError
from amslab.pipeline import derive_seed, run_pipeline


def stage_corpus(root: Path, names=None) -> Path:
    corpus = root / "corpus"
    corpus.mkdir(parents=True, exist_ok=True)
    for f in resources.files("amslab").joinpath("data/corpus").iterdir():
        if f.name.endswith(".sp") and (names is None or f.name in names):
            (corpus / f.name).write_text(f.read_text())
    return corpus


def small_config(root: Path, **kw) -> PipelineConfig:
    defaults = dict(
        input_dir=stage_corpus(root),
        db_dir=root / "db",
        runs_dir=root / "runs",
        budget_identify=200,
        budget_optimize=300,
        clusters=5,
        seeds=[0],
    )
    defaults.update(kw)
    return PipelineConfig(**defaults)


@pytest.fixture(scope="module")
def pipeline_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipe")
    config = small_config(root)
    report = run_pipeline(config)
    return root, config, report


def test_corpus_populates_expected_classes(pipeline_run):
    root, config, report = pipeline_run
    assert not report.failures
    store = Store(config.db_dir)
    assert set(store.classes()) == {
        "SingleEndedOpAmp", "FullyDiffOpAmp", "Comparator", "LDO",
    }
    summary = store.summarize()
    assert summary["SingleEndedOpAmp"]["topologies"] == 2      # ota5t_a + ota5t_b
    topologies = {e.topology for e in store.query()}
    assert "ota_bad" not in topologies                          # infeasible absent


def test_accepted_class_has_feasible_records(pipeline_run):
    _, config, report = pipeline_run
    store = Store(config.db_dir)
    for outcome in report.outcomes:
        in_db = [e for e in store.query() if e.topology == outcome.netlist
                 and e.circuit_class == outcome.circuit_class]
        if outcome.accepted:
            assert len(in_db) >= 1
        else:
            assert in_db == []


def test_entries_carry_reconstructible_netlists(pipeline_run):
    _, config, _ = pipeline_run
    from amslab.netlist import parse_netlist

    store = Store(config.db_dir)
    e = store.query()[0]
    assert parse_netlist(e.netlist_original).devices
    modified = parse_netlist(e.netlist_modified)
    assert modified.devices
    assert e.tag and e.cluster >= 1


def test_winning_polarity_is_recorded(pipeline_run):
    _, config, report = pipeline_run
    se = next(o for o in report.outcomes
              if o.netlist == "ota5t_a" and o.circuit_class == "SingleEndedOpAmp")
    assert se.accepted
    assert se.permutation_index == 1
    assert se.polarity["VINP"] == "input_plus"


def test_manifests_written_per_run(pipeline_run):
    root, config, _ = pipeline_run
    manifests = list((config.runs_dir / "manifests").glob("*.jsonl"))
    identify = [m for m in manifests if m.name.endswith("__identify.jsonl")]
    optimize = [m for m in manifests if m.name.endswith("__optimize.jsonl")]
    assert identify and optimize
    header = json.loads(identify[0].read_text().splitlines()[0])
    assert {"seed", "budget", "config_hash", "netlist", "class"} <= set(header)
    # single-ended fixtures enumerate 2 permutations, fully-diff 4
    se = [m for m in identify if m.name.startswith("ota5t_a__SingleEndedOpAmp")]
    fd = [m for m in identify if m.name.startswith("fd_ota__FullyDiffOpAmp")]
    assert len(se) == 2
    assert len(fd) == 4


def test_rerun_reuses_cache_and_rebuilds_identical_db(pipeline_run):
    root, config, _ = pipeline_run
    db_bytes = {p.name: p.read_bytes() for p in config.db_dir.glob("*.jsonl")}
    cache_mtimes = {p.name: p.stat().st_mtime_ns
                    for p in (config.runs_dir / "cache").glob("*.json")}
    report = run_pipeline(config)
    assert not report.failures
    assert {p.name: p.read_bytes() for p in config.db_dir.glob("*.jsonl")} == db_bytes
    after = {p.name: p.stat().st_mtime_ns for p in (config.runs_dir / "cache").glob("*.json")}
    assert after == cache_mtimes            # completed pairs were skipped


def test_empty_input_dir_gives_empty_db(tmp_path):
    (tmp_path / "corpus").mkdir()
    config = PipelineConfig(input_dir=tmp_path / "corpus", db_dir=tmp_path / "db",
                            runs_dir=tmp_path / "runs", budget_identify=10,
                            budget_optimize=20, clusters=2, seeds=[0])
    report = run_pipeline(config)
    assert report.processed == []
    assert Store(tmp_path / "db").summarize() == {}


def test_bad_netlist_is_isolated(tmp_path):
    corpus = stage_corpus(tmp_path, names={"ota5t_a.sp"})
    (corpus / "broken.sp").write_text("M1 d g s NMOS\n")
    config = small_config(tmp_path)
    report = run_pipeline(config)
    assert any(scope == "broken" for scope, _ in report.failures)
    assert "ota5t_a" in report.processed


def test_derive_seed_stable():
    assert derive_seed(0, "a", "b") == derive_seed(0, "a", "b")
    assert derive_seed(0, "a", "b") != derive_seed(1, "a", "b")
    assert derive_seed(0, "a", "b") != derive_seed(0, "a", "c")


# --------------------------------------------------------------------------
# config

def test_config_validation():
    with pytest.raises(ConfigError):
        PipelineConfig(budget_identify=200, budget_optimize=100).validate()
    with pytest.raises(ConfigError):
        PipelineConfig(clusters=0).validate()
    with pytest.raises(ConfigError):
        PipelineConfig(rating_fraction=0.7).validate()
    with pytest.raises(ConfigError):
        PipelineConfig(backend="quantum").validate()


def test_config_file_and_env_override(tmp_path, monkeypatch):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"budget_identify": 50, "budget_optimize": 99, "seeds": [3, 4]}))
    cfg = load_config(path)
    assert cfg.budget_identify == 50 and cfg.seeds == [3, 4]
    monkeypatch.setenv("AMSLAB_WORKERS", "7")
    monkeypatch.setenv("AMSLAB_SEEDS", "8,9")
    cfg = load_config(path)
    assert cfg.workers == 7
    assert cfg.seeds == [8, 9]
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"no_such_field": 1}))
    with pytest.raises(ConfigError):
        load_config(bad)


# --------------------------------------------------------------------------
# CLI surface

def test_cli_annotate_prints_typed_netlist(tmp_path, capsys):
    corpus = stage_corpus(tmp_path, names={"ota5t_a.sp"})
    rc = main(["annotate", "--netlist", str(corpus / "ota5t_a.sp")])
    assert rc == 0
    out = capsys.readouterr().out
    assert ".port VINP inp input_single" in out


def test_cli_identify_reports_winner(tmp_path, capsys):
    corpus = stage_corpus(tmp_path, names={"ota5t_a.sp"})
    rc = main(["identify", "--netlist", str(corpus / "ota5t_a.sp"),
               "--circuit-class", "SingleEndedOpAmp", "--budget", "60", "--seeds", "0,1"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "winner=p1" in out


def test_cli_optimize_label_db_and_reports(tmp_path, capsys):
    corpus = stage_corpus(tmp_path, names={"ota5t_a.sp"})
    records = tmp_path / "records.jsonl"
    rc = main(["optimize", "--netlist", str(corpus / "ota5t_a.sp"),
               "--circuit-class", "SingleEndedOpAmp", "--budget", "80",
               "--permutation", "1", "-o", str(records)])
    assert rc == 0
    assert records.exists() and records.read_text().strip()

    labels = tmp_path / "labels.jsonl"
    summary = tmp_path / "summary.json"
    rc = main(["label", "--scores", str(records), "--circuit-class", "SingleEndedOpAmp",
               "--clusters", "3", "-o", str(labels), "--summary", str(summary)])
    assert rc == 0
    first = json.loads(labels.read_text().splitlines()[0])
    assert {"topology", "trial", "cluster", "tag"} <= set(first)

    # full pipeline through the CLI, then query/summarize/export
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "input_dir": str(corpus), "db_dir": str(tmp_path / "db"),
        "runs_dir": str(tmp_path / "runs"), "budget_identify": 60,
        "budget_optimize": 150, "clusters": 3, "seeds": [0],
    }))
    assert main(["run", "--config", str(cfg)]) == 0
    capsys.readouterr()
    assert main(["db", "summarize", "--db", str(tmp_path / "db")]) == 0
    assert json.loads(capsys.readouterr().out)["SingleEndedOpAmp"]["topologies"] == 1
    assert main(["db", "query", "--db", str(tmp_path / "db"),
                 "--circuit-class", "SingleEndedOpAmp", "--score-min", "Gain=0"]) == 0
    assert capsys.readouterr().out.strip()
    radar = tmp_path / "radar.json"
    assert main(["export", "radar", "--db", str(tmp_path / "db"),
                 "--circuit-class", "SingleEndedOpAmp", "-o", str(radar)]) == 0
    assert json.loads(radar.read_text())["target_ring"] == 100.0


def test_cli_report_confusion(tmp_path, capsys):
    pred = tmp_path / "pred.json"
    truth = tmp_path / "truth.json"
    pred.write_text(json.dumps({"t1": ["OpAmp"], "t2": ["OpAmp"]}))
    truth.write_text(json.dumps({"t1": ["OpAmp"], "t2": []}))
    rc = main(["report", "confusion", "--pred", str(pred), "--truth", str(truth)])
    assert rc == 0
    assert "F1=" in capsys.readouterr().out


def test_cli_fatal_config_error_exit_code(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"budget_identify": 100, "budget_optimize": 50}))
    assert main(["run", "--config", str(cfg)]) == 2
