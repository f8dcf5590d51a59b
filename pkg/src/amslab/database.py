"""Labeled repository: classes -> topologies -> sizing instances.

Storage is one append-only JSON-lines file per circuit class plus a sidecar
index. The index is replaced atomically (temp file + rename) after each
ingest and records the committed byte length, so a crash mid-append leaves
the previous state readable; readers never look past the committed length.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional

from .errors import DuplicateKey, NetlistError, SchemaMismatch
from .netlist import parse_netlist

SCHEMA_NAME = "amslab-db"
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class DatabaseEntry:
    circuit_class: str
    topology: str
    trial: int
    source: Mapping[str, str]
    netlist_original: str
    netlist_modified: str
    polarity: Mapping[str, str]
    template: str
    params: Mapping[str, float]
    metrics: Mapping[str, float]
    scores: tuple[float, ...]           # aligned with the class metric names
    cluster: int
    tag: str
    manifest: str = ""

    @property
    def key(self) -> tuple[str, int]:
        return (self.topology, self.trial)

    def to_json_dict(self) -> dict:
        return {
            "class": self.circuit_class,
            "topology": self.topology,
            "trial": self.trial,
            "source": dict(self.source),
            "netlist_original": self.netlist_original,
            "netlist_modified": self.netlist_modified,
            "polarity": dict(self.polarity),
            "template": self.template,
            "params": dict(self.params),
            "metrics": dict(self.metrics),
            "scores": list(self.scores),
            "cluster": self.cluster,
            "tag": self.tag,
            "manifest": self.manifest,
        }

    @staticmethod
    def from_json_dict(d: dict) -> "DatabaseEntry":
        return DatabaseEntry(
            circuit_class=d["class"],
            topology=d["topology"],
            trial=int(d["trial"]),
            source=d.get("source", {}),
            netlist_original=d["netlist_original"],
            netlist_modified=d["netlist_modified"],
            polarity=d.get("polarity", {}),
            template=d["template"],
            params=d["params"],
            metrics=d["metrics"],
            scores=tuple(d["scores"]),
            cluster=int(d["cluster"]),
            tag=d["tag"],
            manifest=d.get("manifest", ""),
        )


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass
class QueryFilter:
    circuit_class: Optional[str] = None
    tag_contains: tuple[str, ...] = ()
    score_bounds: Mapping[str, tuple[Optional[float], Optional[float]]] = field(default_factory=dict)

    def matches(self, entry: DatabaseEntry, metric_names: tuple[str, ...]) -> bool:
        if self.circuit_class and entry.circuit_class != self.circuit_class:
            return False
        tag = entry.tag.lower()
        if any(sub.lower() not in tag for sub in self.tag_contains):
            return False
        for metric, (lo, hi) in self.score_bounds.items():
            try:
                value = entry.scores[metric_names.index(metric)]
            except ValueError:
                return False
            if lo is not None and value < lo:
                return False
            if hi is not None and value > hi:
                return False
        return True


class Store:
    """Single-writer, multi-reader store rooted at a directory."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    # paths -----------------------------------------------------------------
    def _data_path(self, circuit_class: str) -> Path:
        return self.root / f"{circuit_class}.jsonl"

    def _idx_path(self, circuit_class: str) -> Path:
        return self.root / f"{circuit_class}.idx"

    def classes(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.jsonl"))

    # read ------------------------------------------------------------------
    def _read_index(self, circuit_class: str) -> Optional[dict]:
        path = self._idx_path(circuit_class)
        if not path.exists():
            return None
        idx = json.loads(path.read_text())
        if idx.get("schema") != SCHEMA_NAME or idx.get("version") != SCHEMA_VERSION:
            raise SchemaMismatch(f"index {path} has unknown schema")
        return idx

    def _read_lines(self, circuit_class: str) -> list[str]:
        data = self._data_path(circuit_class)
        if not data.exists():
            return []
        idx = self._read_index(circuit_class)
        raw = data.read_bytes()
        if idx is not None:
            raw = raw[: idx["valid_bytes"]]
        text = raw.decode("utf-8", errors="strict")
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if idx is None and lines and not text.endswith("\n"):
            lines.pop()  # uncommitted partial tail without an index
        return lines

    def metric_names(self, circuit_class: str) -> tuple[str, ...]:
        lines = self._read_lines(circuit_class)
        if not lines:
            return ()
        header = json.loads(lines[0])
        return tuple(header.get("metrics", ()))

    def entries(self, circuit_class: str) -> list[DatabaseEntry]:
        lines = self._read_lines(circuit_class)
        if not lines:
            return []
        header = json.loads(lines[0])
        if header.get("schema") != SCHEMA_NAME:
            raise SchemaMismatch(f"{circuit_class}.jsonl lacks the schema header")
        if header.get("version") != SCHEMA_VERSION:
            raise SchemaMismatch(f"unsupported schema version {header.get('version')}")
        return [DatabaseEntry.from_json_dict(json.loads(ln)) for ln in lines[1:]]

    # write -----------------------------------------------------------------
    def ingest(self, circuit_class: str, metric_names: Iterable[str],
               entries: Iterable[DatabaseEntry]) -> int:
        """Append entries atomically; duplicate (topology, trial) keys are
        rejected before anything is written."""
        entries = list(entries)
        metric_names = tuple(metric_names)
        with self._lock:
            existing = {e.key for e in self.entries(circuit_class)}
            batch_keys = set()
            parsed_texts: set[str] = set()
            for e in entries:
                if e.key in existing or e.key in batch_keys:
                    raise DuplicateKey(e.key)
                if len(e.scores) != len(metric_names):
                    raise SchemaMismatch(
                        f"entry {e.key}: {len(e.scores)} scores for {len(metric_names)} metrics"
                    )
                if not e.tag:
                    raise SchemaMismatch(f"entry {e.key}: labeled entries need a tag")
                for text in (e.netlist_original, e.netlist_modified):
                    if text not in parsed_texts:
                        try:
                            parse_netlist(text)
                        except NetlistError as err:
                            raise SchemaMismatch(f"entry {e.key}: netlist does not reparse: {err}")
                        parsed_texts.add(text)
                batch_keys.add(e.key)

            data_path = self._data_path(circuit_class)
            is_new = not data_path.exists()
            stored = self.metric_names(circuit_class)
            if not is_new and stored != metric_names:
                raise SchemaMismatch(f"metric names differ from stored header {stored}")

            with open(data_path, "a", encoding="utf-8") as fh:
                if is_new:
                    fh.write(_dump({
                        "schema": SCHEMA_NAME,
                        "version": SCHEMA_VERSION,
                        "class": circuit_class,
                        "metrics": list(metric_names),
                    }) + "\n")
                for e in entries:
                    fh.write(_dump(e.to_json_dict()) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            valid = data_path.stat().st_size

            idx = {
                "schema": SCHEMA_NAME,
                "version": SCHEMA_VERSION,
                "class": circuit_class,
                "valid_bytes": valid,
                "count": len(existing) + len(entries),
            }
            tmp = self._idx_path(circuit_class).with_suffix(".idx.tmp")
            tmp.write_text(_dump(idx) + "\n")
            os.replace(tmp, self._idx_path(circuit_class))
        return len(entries)

    # queries ---------------------------------------------------------------
    def query(self, flt: Optional[QueryFilter] = None) -> list[DatabaseEntry]:
        """Conjunctive filtering in deterministic (class, topology, trial)
        order; the empty filter returns everything."""
        flt = flt or QueryFilter()
        classes = [flt.circuit_class] if flt.circuit_class else self.classes()
        out: list[DatabaseEntry] = []
        for cls in classes:
            names = self.metric_names(cls)
            for e in self.entries(cls):
                if flt.matches(e, names):
                    out.append(e)
        out.sort(key=lambda e: (e.circuit_class, e.topology, e.trial))
        return out

    def summarize(self) -> dict[str, dict]:
        """Per-class topology/instance counts and the cluster histogram."""
        summary = {}
        for cls in self.classes():
            entries = self.entries(cls)
            hist: dict[int, int] = {}
            topologies = set()
            for e in entries:
                topologies.add(e.topology)
                hist[e.cluster] = hist.get(e.cluster, 0) + 1
            summary[cls] = {
                "topologies": len(topologies),
                "instances": len(entries),
                "clusters": {str(k): hist[k] for k in sorted(hist)},
            }
        return summary
