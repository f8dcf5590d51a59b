"""Pipeline configuration: a single JSON file plus environment overrides.

Environment variables named AMSLAB_<FIELD> (upper-case field name) override
the file, e.g. AMSLAB_WORKERS=8 or AMSLAB_BACKEND=spice.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .errors import ConfigError

_ENV_PREFIX = "AMSLAB_"


@dataclass
class PipelineConfig:
    input_dir: Path = Path("corpus")
    db_dir: Path = Path("db")
    runs_dir: Path = Path("runs")
    template_dir: Optional[Path] = None        # None -> packaged templates
    spec_table: Optional[Path] = None           # None -> packaged Table values
    backend: str = "surrogate"                  # surrogate | spice
    annotator_url: Optional[str] = None         # None -> built-in heuristic
    annotator_timeout: float = 10.0
    annotator_retries: int = 2
    simulator_command: str = "ngspice -b {deck}"
    simulator_output_glob: str = ""
    parser_profile: str = "standard"
    simulator_timeout: float = 60.0
    budget_identify: int = 200                  # trial budget for feasibility
    budget_optimize: int = 2000                 # extended sizing budget
    clusters: int = 30
    rating_fraction: float = 0.25
    seeds: list[int] = field(default_factory=lambda: [0])
    workers: int = 1
    population: int = 20

    def validate(self) -> "PipelineConfig":
        if self.budget_optimize <= self.budget_identify:
            raise ConfigError("budget_optimize must exceed budget_identify")
        if self.clusters < 1:
            raise ConfigError("clusters must be >= 1")
        if not 0.0 < self.rating_fraction <= 0.5:
            raise ConfigError("rating_fraction must be in (0, 0.5]")
        if self.backend not in ("surrogate", "spice"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self


_PATH_FIELDS = {"input_dir", "db_dir", "runs_dir", "template_dir", "spec_table"}
_INT_FIELDS = {"budget_identify", "budget_optimize", "clusters", "workers",
               "annotator_retries", "population"}
_FLOAT_FIELDS = {"rating_fraction", "annotator_timeout", "simulator_timeout"}


def _coerce(name: str, value):
    if value is None:
        return None
    if name in _PATH_FIELDS:
        return Path(value)
    if name in _INT_FIELDS:
        return int(value)
    if name in _FLOAT_FIELDS:
        return float(value)
    if name == "seeds":
        if isinstance(value, str):
            return [int(s) for s in value.split(",") if s.strip()]
        return [int(s) for s in value]
    return value


def load_config(path: Optional[Path] = None, overrides: Optional[dict] = None) -> PipelineConfig:
    cfg = PipelineConfig()
    known = {f.name for f in fields(PipelineConfig)}
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
    for src in (data, overrides or {}):
        for key, value in src.items():
            if key not in known:
                raise ConfigError(f"unknown config field {key!r}")
            setattr(cfg, key, _coerce(key, value))
    for f in fields(PipelineConfig):
        env = os.environ.get(_ENV_PREFIX + f.name.upper())
        if env is not None:
            setattr(cfg, f.name, _coerce(f.name, env))
    return cfg.validate()
