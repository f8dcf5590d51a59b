"""Evaluation reports: identification confusion matrices and radar-chart
data export."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .database import QueryFilter, Store
from .errors import MisalignedIds
from .scoring import SCORE_AT_TARGET, SCORE_AT_THRESHOLD


@dataclass(frozen=True)
class ConfusionReport:
    circuit_class: str
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if denom else 0.0

    def to_json_dict(self) -> dict:
        return {
            "class": self.circuit_class,
            "tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
        }

    def text(self) -> str:
        return (
            f"{self.circuit_class}: TP={self.tp} FP={self.fp} FN={self.fn} TN={self.tn} "
            f"precision={self.precision:.3f} recall={self.recall:.3f} F1={self.f1:.3f}"
        )


def confusion_from_counts(circuit_class: str, tp: int, fp: int, fn: int, tn: int) -> ConfusionReport:
    return ConfusionReport(circuit_class, tp, fp, fn, tn)


def score_confusion(
    predictions: Mapping[str, Sequence[str]],
    truth: Mapping[str, Sequence[str]],
    classes: Optional[Sequence[str]] = None,
) -> dict[str, ConfusionReport]:
    """Per-class confusion over label files keyed by topology id; each value
    lists the classes assigned to that topology."""
    if set(predictions) != set(truth):
        only_pred = sorted(set(predictions) - set(truth))[:3]
        only_truth = sorted(set(truth) - set(predictions))[:3]
        raise MisalignedIds(f"ids differ; extra predictions {only_pred}, extra truth {only_truth}")
    if classes is None:
        classes = sorted({c for v in truth.values() for c in v} | {c for v in predictions.values() for c in v})
    out = {}
    for cls in classes:
        tp = fp = fn = tn = 0
        for tid in predictions:
            pred = cls in predictions[tid]
            actual = cls in truth[tid]
            if pred and actual:
                tp += 1
            elif pred and not actual:
                fp += 1
            elif not pred and actual:
                fn += 1
            else:
                tn += 1
        out[cls] = ConfusionReport(cls, tp, fp, fn, tn)
    return out


def export_radar(store: Store, circuit_class: str, out_path: Path) -> int:
    """Radar-chart data: per-entry score vectors plus the two reference
    rings (threshold at 60, target at 100)."""
    names = store.metric_names(circuit_class)
    entries = store.query(QueryFilter(circuit_class=circuit_class))
    payload = {
        "class": circuit_class,
        "metrics": list(names),
        "threshold_ring": SCORE_AT_THRESHOLD,
        "target_ring": SCORE_AT_TARGET,
        "entries": [
            {
                "topology": e.topology,
                "trial": e.trial,
                "cluster": e.cluster,
                "tag": e.tag,
                "scores": list(e.scores),
            }
            for e in entries
        ],
    }
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return len(entries)
