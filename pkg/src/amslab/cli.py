"""Command-line interface.

Each pipeline stage is independently invocable for debugging; `run` chains
them all. Exit codes: 0 success, 1 partial failures, 2 fatal config error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .annotate import HeuristicAnnotator, HttpAnnotatorClient, Strategy, annotate_ports, enumerate_polarities
from .config import load_config
from .database import QueryFilter, Store
from .errors import AmslabError, ConfigError
from .labeling import ScoreMatrix, label_scores
from .netlist import emit_netlist, parse_netlist
from .nsga2 import GAConfig
from .pipeline import derive_seed, modify_for_class, run_pipeline
from .reports import export_radar, score_confusion
from .sim import EvaluationCache
from .sizing import SizingProblem, identify, optimize
from .specs import CircuitClass, load_spec_tables
from .surrogates import SurrogateBackend
from .testbench import instantiate, load_template_library, select_templates


def _load_annotated(path: Path, url: str | None, timeout: float, retries: int, strategy: str):
    n = parse_netlist(Path(path).read_text(), name=Path(path).stem)
    client = HttpAnnotatorClient(url, timeout=timeout, retries=retries) if url else HeuristicAnnotator()
    return annotate_ports(n, client, Strategy(strategy))


def _decks_for_class(netlist_path: Path, circuit_class: CircuitClass, args):
    annotated = _load_annotated(netlist_path, args.annotator_url, args.timeout, args.retries,
                                args.strategy)
    tables = load_spec_tables(args.spec_table)
    library = load_template_library(args.template_dir, tables)
    decks = []
    for pa in enumerate_polarities(annotated):
        polarized = pa.apply(annotated)
        for template in select_templates(polarized, library):
            if template.circuit_class != circuit_class:
                continue
            modified = modify_for_class(polarized, circuit_class)
            decks.append(instantiate(modified, template, pa, spec_table=tables[circuit_class]))
    return decks, tables[circuit_class]


def cmd_run(args) -> int:
    config = load_config(args.config)
    report = run_pipeline(config)
    print(json.dumps(report.to_json_dict(), indent=2, sort_keys=True))
    return 1 if report.had_failures else 0


def cmd_annotate(args) -> int:
    annotated = _load_annotated(args.netlist, args.annotator_url, args.timeout, args.retries,
                                args.strategy)
    text = emit_netlist(annotated)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_identify(args) -> int:
    circuit_class = CircuitClass(args.circuit_class)
    decks, table = _decks_for_class(Path(args.netlist), circuit_class, args)
    if not decks:
        print(f"no {circuit_class.value} template matches {args.netlist}")
        return 1
    backend = SurrogateBackend()
    cache = EvaluationCache()
    seeds = [int(s) for s in args.seeds.split(",")]
    any_accept = False
    for seed in seeds:
        results = []
        for deck in decks:
            problem = SizingProblem(deck, table, args.budget, derive_seed(seed, f"p{deck.permutation_index}"))
            results.append(identify(problem, backend, cache, GAConfig(),
                                    permutation_index=deck.permutation_index))
        accepted = [r for r in results if r.accepted]
        best = min(accepted, key=lambda r: (r.first_feasible_trial, r.permutation_index)) if accepted else None
        line = f"seed={seed} permutations={len(results)} accepted={bool(accepted)}"
        if best:
            line += f" winner=p{best.permutation_index} first_feasible_trial={best.first_feasible_trial}"
            any_accept = True
        print(line)
    return 0 if any_accept else 1


def cmd_optimize(args) -> int:
    circuit_class = CircuitClass(args.circuit_class)
    decks, table = _decks_for_class(Path(args.netlist), circuit_class, args)
    if not decks:
        print(f"no {circuit_class.value} template matches {args.netlist}")
        return 1
    deck = next((d for d in decks if d.permutation_index == args.permutation), decks[0])
    backend = SurrogateBackend()
    records = optimize(SizingProblem(deck, table, args.budget, args.seed), backend, EvaluationCache())
    out = Path(args.output)
    with open(out, "w", encoding="utf-8") as fh:
        for r in records:
            d = r.to_json_dict()
            d["topology"] = Path(args.netlist).stem
            fh.write(json.dumps(d, sort_keys=True) + "\n")
    print(f"{len(records)} feasible records -> {out}")
    return 0


def cmd_label(args) -> int:
    table = load_spec_tables(args.spec_table)[CircuitClass(args.circuit_class)]
    rows, provenance = [], []
    with open(args.scores, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            scores = d["scores"]
            rows.append([scores[m] for m in table.names] if isinstance(scores, dict) else scores)
            provenance.append((d.get("topology", "?"), int(d.get("trial", len(provenance)))))
    if not rows:
        print("no score rows to label")
        return 1
    matrix = ScoreMatrix(np.array(rows, dtype=float), table.names, tuple(provenance))
    result = label_scores(matrix, k=min(args.clusters, len(rows)), seed=args.seed, fraction=args.fraction)
    labels_path = Path(args.output)
    with open(labels_path, "w", encoding="utf-8") as fh:
        for (topo, trial), label, tag in zip(provenance, result.row_labels, result.row_tags):
            fh.write(json.dumps({"topology": topo, "trial": trial, "cluster": label, "tag": tag},
                                sort_keys=True) + "\n")
    summary = {
        "k": result.model.k,
        "inertia": result.model.inertia,
        "tags": {t.cluster: t.text for t in result.tags},
        "centers_score": [list(map(float, row)) for row in result.model.centers_score],
    }
    Path(args.summary).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"labeled {len(rows)} rows into {result.model.k} clusters -> {labels_path}")
    return 0


def cmd_db_query(args) -> int:
    store = Store(Path(args.db))
    bounds = {}
    for spec in args.score_min or []:
        metric, _, value = spec.partition("=")
        bounds[metric] = (float(value), None)
    for spec in args.score_max or []:
        metric, _, value = spec.partition("=")
        lo = bounds.get(metric, (None, None))[0]
        bounds[metric] = (lo, float(value))
    flt = QueryFilter(circuit_class=args.circuit_class,
                      tag_contains=tuple(args.tag or ()),
                      score_bounds=bounds)
    for e in store.query(flt):
        print(json.dumps(e.to_json_dict(), sort_keys=True))
    return 0


def cmd_db_summarize(args) -> int:
    store = Store(Path(args.db))
    print(json.dumps(store.summarize(), indent=2, sort_keys=True))
    return 0


def cmd_report_confusion(args) -> int:
    predictions = json.loads(Path(args.pred).read_text())
    truth = json.loads(Path(args.truth).read_text())
    reports = score_confusion(predictions, truth, args.classes)
    payload = {cls: r.to_json_dict() for cls, r in reports.items()}
    if args.output:
        Path(args.output).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    for cls in sorted(reports):
        print(reports[cls].text())
    return 0


def cmd_export_radar(args) -> int:
    store = Store(Path(args.db))
    count = export_radar(store, args.circuit_class, Path(args.output))
    print(f"exported {count} entries -> {args.output}")
    return 0


def cmd_serve_annotator(args) -> int:
    import uvicorn

    from .annotator_service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="warning")
    return 0


def _add_annotator_args(p):
    p.add_argument("--annotator-url", default=None, help="external annotator; default: built-in heuristic")
    p.add_argument("--timeout", type=float, default=10.0)
    p.add_argument("--retries", type=int, default=2)
    p.add_argument("--strategy", default="sequential_port_wise",
                   choices=["sequential_port_wise", "global_single_pass"])


def _add_library_args(p):
    p.add_argument("--template-dir", type=Path, default=None)
    p.add_argument("--spec-table", type=Path, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="amslab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the full pipeline from a config file")
    p.add_argument("--config", type=Path, required=True)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("annotate", help="resolve unknown port types")
    p.add_argument("--netlist", type=Path, required=True)
    p.add_argument("-o", "--output", type=Path, default=None)
    _add_annotator_args(p)
    p.set_defaults(fn=cmd_annotate)

    p = sub.add_parser("identify", help="feasibility-based identification on the surrogate backend")
    p.add_argument("--netlist", type=Path, required=True)
    p.add_argument("--circuit-class", required=True, choices=[c.value for c in CircuitClass])
    p.add_argument("--budget", type=int, default=200)
    p.add_argument("--seeds", default="0")
    _add_annotator_args(p)
    _add_library_args(p)
    p.set_defaults(fn=cmd_identify)

    p = sub.add_parser("optimize", help="extended sizing; writes feasible trial records")
    p.add_argument("--netlist", type=Path, required=True)
    p.add_argument("--circuit-class", required=True, choices=[c.value for c in CircuitClass])
    p.add_argument("--budget", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--permutation", type=int, default=0)
    p.add_argument("-o", "--output", type=Path, required=True)
    _add_annotator_args(p)
    _add_library_args(p)
    p.set_defaults(fn=cmd_optimize)

    p = sub.add_parser("label", help="cluster score vectors into trade-off tags")
    p.add_argument("--scores", type=Path, required=True, help="JSON lines with topology/trial/scores")
    p.add_argument("--circuit-class", required=True, choices=[c.value for c in CircuitClass])
    p.add_argument("--clusters", type=int, default=30)
    p.add_argument("--fraction", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--summary", type=Path, required=True)
    p.add_argument("--spec-table", type=Path, default=None)
    p.set_defaults(fn=cmd_label)

    p = sub.add_parser("db", help="query or summarize the database")
    dbsub = p.add_subparsers(dest="db_command", required=True)
    q = dbsub.add_parser("query")
    q.add_argument("--db", type=Path, required=True)
    q.add_argument("--circuit-class", default=None)
    q.add_argument("--tag", action="append", help="tag substring, repeatable (conjunctive)")
    q.add_argument("--score-min", action="append", help="Metric=value lower bound")
    q.add_argument("--score-max", action="append", help="Metric=value upper bound")
    q.set_defaults(fn=cmd_db_query)
    s = dbsub.add_parser("summarize")
    s.add_argument("--db", type=Path, required=True)
    s.set_defaults(fn=cmd_db_summarize)

    p = sub.add_parser("report", help="evaluation reports")
    repsub = p.add_subparsers(dest="report_command", required=True)
    c = repsub.add_parser("confusion")
    c.add_argument("--pred", type=Path, required=True)
    c.add_argument("--truth", type=Path, required=True)
    c.add_argument("--classes", nargs="*", default=None)
    c.add_argument("-o", "--output", type=Path, default=None)
    c.set_defaults(fn=cmd_report_confusion)

    p = sub.add_parser("export", help="data exports")
    expsub = p.add_subparsers(dest="export_command", required=True)
    r = expsub.add_parser("radar")
    r.add_argument("--db", type=Path, required=True)
    r.add_argument("--circuit-class", required=True)
    r.add_argument("-o", "--output", type=Path, required=True)
    r.set_defaults(fn=cmd_export_radar)

    p = sub.add_parser("serve-annotator", help="serve the reference annotator over HTTP")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8434)
    p.set_defaults(fn=cmd_serve_annotator)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except AmslabError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
