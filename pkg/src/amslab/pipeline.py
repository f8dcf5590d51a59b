"""End-to-end orchestration.

Per netlist: annotate ports, enumerate polarity permutations, propose
candidate classes by template matching, modify topology as the class
requires, identify by sizing feasibility under budget B, pick the winning
polarity, and run extended optimization under budget B*. Per class: stack
the feasible score vectors, run unsupervised labeling, and ingest into the
database. A failure anywhere isolates to the offending netlist/class pair
and is recorded in the report.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .annotate import (
    AnnotatorClient,
    HeuristicAnnotator,
    HttpAnnotatorClient,
    PolarityAssignment,
    annotate_ports,
    enumerate_polarities,
)
from .config import PipelineConfig
from .database import DatabaseEntry, Store
from .errors import AmslabError, NoFeasiblePolarity
from .labeling import ScoreMatrix, label_scores
from .netlist import Netlist, emit_netlist, parse_netlist
from .nsga2 import GAConfig
from .sim import AdapterConfig, EvaluationCache, SpiceAdapter
from .sizing import IdentificationResult, SizingProblem, choose_polarity, identify, optimize
from .specs import CircuitClass, load_spec_tables
from .surrogates import SurrogateBackend
from .testbench import Deck, TestbenchTemplate, instantiate, load_template_library, select_templates
from .topomod import apply_cmfb, apply_ldo_sever


def derive_seed(master: int, *parts: str) -> int:
    """Stable per-task seed: replayable from the config seed list alone."""
    text = f"{master}:" + ":".join(parts)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:4], "big")


@dataclass
class ClassOutcome:
    netlist: str
    circuit_class: str
    accepted: bool
    permutation_index: Optional[int] = None
    polarity: dict = field(default_factory=dict)
    first_feasible_trial: Optional[int] = None
    identify_trials: int = 0
    feasible_records: int = 0
    reason: str = ""


@dataclass
class PipelineReport:
    processed: list[str] = field(default_factory=list)
    outcomes: list[ClassOutcome] = field(default_factory=list)
    failures: list[tuple[str, str]] = field(default_factory=list)   # (scope, reason)
    summary: dict = field(default_factory=dict)

    @property
    def had_failures(self) -> bool:
        return bool(self.failures)

    def to_json_dict(self) -> dict:
        return {
            "processed": self.processed,
            "outcomes": [vars(o) for o in self.outcomes],
            "failures": list(self.failures),
            "summary": self.summary,
        }


def _make_backend(config: PipelineConfig):
    if config.backend == "surrogate":
        return SurrogateBackend()
    return SpiceAdapter(AdapterConfig(
        command=config.simulator_command,
        output_glob=config.simulator_output_glob,
        parser_profile=config.parser_profile,
        timeout_s=config.simulator_timeout,
        workdir=Path(config.runs_dir) / "simwork",
    ))


def _make_annotator(config: PipelineConfig) -> AnnotatorClient:
    if config.annotator_url:
        return HttpAnnotatorClient(
            config.annotator_url,
            timeout=config.annotator_timeout,
            retries=config.annotator_retries,
        )
    return HeuristicAnnotator()


def modify_for_class(polarized: Netlist, circuit_class: CircuitClass) -> Netlist:
    if circuit_class == CircuitClass.FULLY_DIFF_OPAMP:
        modified, _ = apply_cmfb(polarized)
        return modified
    if circuit_class == CircuitClass.LDO:
        modified, _ = apply_ldo_sever(polarized)
        return modified
    return polarized


def _write_manifest(path: Path, header: dict, records) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for r in records:
            fh.write(json.dumps(r.to_json_dict(), sort_keys=True) + "\n")


@dataclass
class _ClassResult:
    outcome: ClassOutcome
    deck: Optional[Deck] = None
    records: list = field(default_factory=list)
    original_text: str = ""
    modified_text: str = ""
    template_id: str = ""
    source: dict = field(default_factory=dict)
    manifest: str = ""


def _cache_path(config: PipelineConfig, netlist: str, circuit_class: str) -> Path:
    return Path(config.runs_dir) / "cache" / f"{netlist}__{circuit_class}.json"


def _config_hash(config: PipelineConfig) -> str:
    payload = {k: str(v) for k, v in vars(config).items()}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def _run_class_candidate(
    netlist_name: str,
    original_text: str,
    annotated: Netlist,
    circuit_class: CircuitClass,
    candidates: list[tuple[PolarityAssignment, TestbenchTemplate]],
    config: PipelineConfig,
    backend,
    cache: EvaluationCache,
    tables,
    ga: GAConfig,
) -> _ClassResult:
    """Identification across every polarity permutation, then extended
    optimization on the winner."""
    master = config.seeds[0]
    cfg_hash = _config_hash(config)
    results: list[IdentificationResult] = []
    decks: dict[int, Deck] = {}
    modified_texts: dict[int, str] = {}
    table = tables[circuit_class]

    for pa, template in candidates:
        polarized = pa.apply(annotated)
        modified = modify_for_class(polarized, circuit_class)
        deck = instantiate(modified, template, pa, spec_table=table)
        seed = derive_seed(master, netlist_name, circuit_class.value, f"p{pa.permutation_index}")
        problem = SizingProblem(deck, table, config.budget_identify, seed)
        result = identify(problem, backend, cache, ga, workers=config.workers,
                          permutation_index=pa.permutation_index)
        _write_manifest(
            Path(config.runs_dir) / "manifests"
            / f"{netlist_name}__{circuit_class.value}__p{pa.permutation_index}__identify.jsonl",
            {"netlist": netlist_name, "class": circuit_class.value, "seed": seed,
             "budget": config.budget_identify, "config_hash": cfg_hash,
             "permutation": pa.permutation_index},
            result.records,
        )
        results.append(result)
        decks[pa.permutation_index] = deck
        modified_texts[pa.permutation_index] = emit_netlist(modified)

    try:
        winner = choose_polarity(results)
    except NoFeasiblePolarity as e:
        outcome = ClassOutcome(
            netlist=netlist_name, circuit_class=circuit_class.value, accepted=False,
            identify_trials=sum(r.trials_used for r in results), reason=str(e),
        )
        return _ClassResult(outcome=outcome, original_text=original_text)

    deck = decks[winner.permutation_index]
    opt_seed = derive_seed(master, netlist_name, circuit_class.value, "optimize")
    problem = SizingProblem(deck, table, config.budget_optimize, opt_seed)
    feasible = optimize(problem, backend, cache, ga, workers=config.workers)
    if not feasible:
        # feasibility was proven during identification; keep that witness
        feasible = [r for r in winner.records if r.feasible][:1]
    manifest_rel = (
        f"manifests/{netlist_name}__{circuit_class.value}"
        f"__p{winner.permutation_index}__optimize.jsonl"
    )
    _write_manifest(
        Path(config.runs_dir) / manifest_rel,
        {"netlist": netlist_name, "class": circuit_class.value, "seed": opt_seed,
         "budget": config.budget_optimize, "config_hash": cfg_hash,
         "permutation": winner.permutation_index},
        feasible,
    )
    outcome = ClassOutcome(
        netlist=netlist_name,
        circuit_class=circuit_class.value,
        accepted=True,
        permutation_index=winner.permutation_index,
        polarity=dict(deck.polarity),
        first_feasible_trial=winner.first_feasible_trial,
        identify_trials=sum(r.trials_used for r in results),
        feasible_records=len(feasible),
    )
    return _ClassResult(
        outcome=outcome,
        deck=deck,
        records=feasible,
        original_text=original_text,
        modified_text=modified_texts[winner.permutation_index],
        template_id=deck.template_id,
        source=dict(annotated.metadata),
        manifest=manifest_rel,
    )


def _result_to_cache(res: _ClassResult) -> dict:
    return {
        "outcome": vars(res.outcome),
        "records": [r.to_json_dict() for r in res.records],
        "original_text": res.original_text,
        "modified_text": res.modified_text,
        "template_id": res.template_id,
        "source": res.source,
        "manifest": res.manifest,
        "polarity": dict(res.outcome.polarity),
    }


def _result_from_cache(data: dict) -> _ClassResult:
    outcome = ClassOutcome(**data["outcome"])
    res = _ClassResult(
        outcome=outcome,
        original_text=data["original_text"],
        modified_text=data["modified_text"],
        template_id=data["template_id"],
        source=data["source"],
        manifest=data["manifest"],
    )
    res.records = data["records"]   # list of dicts; all the db needs
    return res


def _record_fields(record) -> dict:
    if isinstance(record, dict):
        return record
    return record.to_json_dict()


def run_pipeline(config: PipelineConfig) -> PipelineReport:
    config.validate()
    input_dir = Path(config.input_dir)
    if not input_dir.is_dir():
        raise AmslabError(f"input directory {input_dir} does not exist")

    tables = load_spec_tables(config.spec_table)
    library = load_template_library(config.template_dir, tables)
    backend = _make_backend(config)
    annotator = _make_annotator(config)
    cache = EvaluationCache()
    ga = GAConfig(population=config.population)
    report = PipelineReport()

    class_results: dict[str, list[_ClassResult]] = {}

    for path in sorted(input_dir.glob("*.sp")):
        name = path.stem
        try:
            text = path.read_text()
            parsed = parse_netlist(text, name=name)
            annotated = annotate_ports(parsed, annotator)
            assignments = enumerate_polarities(annotated)
        except AmslabError as e:
            report.failures.append((name, f"{type(e).__name__}: {e}"))
            continue
        report.processed.append(name)

        candidates: dict[CircuitClass, list[tuple[PolarityAssignment, TestbenchTemplate]]] = {}
        for pa in assignments:
            polarized = pa.apply(annotated)
            for template in select_templates(polarized, library):
                candidates.setdefault(template.circuit_class, []).append((pa, template))

        for circuit_class in sorted(candidates, key=lambda c: c.value):
            cache_file = _cache_path(config, name, circuit_class.value)
            try:
                if cache_file.exists():
                    res = _result_from_cache(json.loads(cache_file.read_text()))
                else:
                    res = _run_class_candidate(
                        name, text, annotated, circuit_class, candidates[circuit_class],
                        config, backend, cache, tables, ga,
                    )
                    cache_file.parent.mkdir(parents=True, exist_ok=True)
                    cache_file.write_text(json.dumps(_result_to_cache(res), sort_keys=True))
            except AmslabError as e:
                report.failures.append((f"{name}:{circuit_class.value}", f"{type(e).__name__}: {e}"))
                continue
            report.outcomes.append(res.outcome)
            if res.outcome.accepted:
                class_results.setdefault(circuit_class.value, []).append(res)

    store = Store(Path(config.db_dir))
    for old in list(Path(config.db_dir).glob("*.jsonl")) + list(Path(config.db_dir).glob("*.idx")):
        old.unlink()

    for class_name in sorted(class_results):
        results = class_results[class_name]
        table = tables[CircuitClass(class_name)]
        rows = []
        provenance = []
        for res in results:
            for rec in res.records:
                d = _record_fields(rec)
                rows.append([d["scores"][m] for m in table.names])
                provenance.append((res.outcome.netlist, int(d["trial"])))
        matrix = ScoreMatrix(np.array(rows), table.names, tuple(provenance))
        labeling = label_scores(
            matrix,
            k=min(config.clusters, len(rows)),
            seed=derive_seed(config.seeds[0], class_name, "label"),
            fraction=config.rating_fraction,
        )

        entries = []
        row = 0
        for res in results:
            for rec in res.records:
                d = _record_fields(rec)
                entries.append(DatabaseEntry(
                    circuit_class=class_name,
                    topology=res.outcome.netlist,
                    trial=int(d["trial"]),
                    source=res.source,
                    netlist_original=res.original_text,
                    netlist_modified=res.modified_text,
                    polarity=dict(res.outcome.polarity),
                    template=res.template_id,
                    params=d["params"],
                    metrics=d["metrics"],
                    scores=tuple(d["scores"][m] for m in table.names),
                    cluster=labeling.row_labels[row],
                    tag=labeling.row_tags[row],
                    manifest=res.manifest,
                ))
                row += 1
        store.ingest(class_name, table.names, entries)

    report.summary = store.summarize()
    return report
