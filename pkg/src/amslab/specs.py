"""Per-class metric specifications: thresholds (feasibility gates) and
targets (the score-100 level).

The packaged defaults live in data/specs.json; an alternative table can be
loaded from any file with the same schema. The comparator output-swing row
is supply-relative and is materialized against the shipped 1.8 V supply.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Optional, Union

from .errors import ConfigError


class CircuitClass(Enum):
    SINGLE_ENDED_OPAMP = "SingleEndedOpAmp"
    FULLY_DIFF_OPAMP = "FullyDiffOpAmp"
    COMPARATOR = "Comparator"
    LDO = "LDO"


class Direction(Enum):
    HIGHER_BETTER = "higher_better"
    LOWER_BETTER = "lower_better"
    RANGE_TARGET = "range_target"


Bound = Union[float, tuple[float, float]]


@dataclass(frozen=True)
class MetricSpec:
    name: str
    unit: str
    direction: Direction
    threshold: Bound
    target: Bound
    gating: bool = False
    condition: Optional[str] = None

    def __post_init__(self):
        if self.direction == Direction.HIGHER_BETTER:
            if not self.target > self.threshold:
                raise ConfigError(f"{self.name}: higher_better needs target > threshold")
        elif self.direction == Direction.LOWER_BETTER:
            if not self.target < self.threshold:
                raise ConfigError(f"{self.name}: lower_better needs target < threshold")
        else:
            t, r = self.target, self.threshold
            if not (isinstance(t, tuple) and isinstance(r, tuple)):
                raise ConfigError(f"{self.name}: range_target needs interval bounds")
            if not (r[0] <= t[0] <= t[1] <= r[1]):
                raise ConfigError(f"{self.name}: target interval must nest inside threshold")


@dataclass(frozen=True)
class SpecTable:
    circuit_class: CircuitClass
    metrics: tuple[MetricSpec, ...]

    def metric(self, name: str) -> MetricSpec:
        for m in self.metrics:
            if m.name == name:
                return m
        raise KeyError(name)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(m.name for m in self.metrics)

    @property
    def gating(self) -> tuple[MetricSpec, ...]:
        return tuple(m for m in self.metrics if m.gating)


def _bound(v) -> Bound:
    if isinstance(v, list):
        return (float(v[0]), float(v[1]))
    return float(v)


def load_spec_tables(path: Optional[Path] = None) -> dict[CircuitClass, SpecTable]:
    if path is None:
        raw = json.loads(resources.files("amslab").joinpath("data/specs.json").read_text())
    else:
        raw = json.loads(Path(path).read_text())
    if raw.get("version") != 1:
        raise ConfigError(f"unsupported spec table version: {raw.get('version')}")
    tables = {}
    for cls_name, body in raw["classes"].items():
        cls = CircuitClass(cls_name)
        metrics = tuple(
            MetricSpec(
                name=m["name"],
                unit=m["unit"],
                direction=Direction(m["direction"]),
                threshold=_bound(m["threshold"]),
                target=_bound(m["target"]),
                gating=bool(m.get("gating", False)),
                condition=m.get("condition"),
            )
            for m in body["metrics"]
        )
        tables[cls] = SpecTable(cls, metrics)
    return tables


def default_spec_table(circuit_class: CircuitClass) -> SpecTable:
    return load_spec_tables()[circuit_class]


SUPPLY_VOLTAGE = 1.8
