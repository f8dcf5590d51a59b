"""Uniform simulator abstraction.

A backend evaluates a deck at a concrete parameter point and returns raw
metric values. Two implementations ship: an external-process adapter that
runs a real simulator and parses its measurement output, and the built-in
analytical surrogates (surrogates module). Per-trial failures are reported
through Evaluation.status, never as exceptions, so they can count against
the trial budget.
"""

from __future__ import annotations

import glob
import hashlib
import math
import re
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Optional, Protocol

from .errors import MeasurementParseError, ParamOutOfBounds
from .testbench import Deck


class EvalStatus(Enum):
    OK = "ok"
    SIM_FAILED = "sim_failed"
    NON_CONVERGENT = "non_convergent"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class Evaluation:
    params: tuple[tuple[str, float], ...]
    metrics: tuple[tuple[str, float], ...]
    status: EvalStatus
    wall_time: float = 0.0
    detail: str = ""

    @property
    def metric_map(self) -> dict[str, float]:
        return dict(self.metrics)

    @property
    def param_map(self) -> dict[str, float]:
        return dict(self.params)


def _freeze(d: Mapping[str, float]) -> tuple[tuple[str, float], ...]:
    return tuple(sorted((k, float(v)) for k, v in d.items()))


def params_key(params: Mapping[str, float]) -> str:
    text = ",".join(f"{k}={float(v)!r}" for k, v in sorted(params.items()))
    return hashlib.sha256(text.encode()).hexdigest()


class Backend(Protocol):
    def space(self, deck: Deck) -> dict[str, tuple[float, float]]:
        """Full parameter space for this deck (tunables, bias slots, and any
        backend-declared model parameters)."""
        ...

    def run(self, deck: Deck, params: Mapping[str, float]) -> Evaluation:
        ...


class EvaluationCache:
    """Content-addressed cache keyed by deck fingerprint + parameter hash."""

    def __init__(self):
        self._data: dict[tuple[str, str], Evaluation] = {}
        self._lock = threading.Lock()
        self.hits = 0

    def get(self, deck: Deck, params: Mapping[str, float]) -> Optional[Evaluation]:
        with self._lock:
            hit = self._data.get((deck.fingerprint(), params_key(params)))
            if hit is not None:
                self.hits += 1
            return hit

    def put(self, deck: Deck, params: Mapping[str, float], ev: Evaluation):
        with self._lock:
            self._data[(deck.fingerprint(), params_key(params))] = ev


def evaluate(
    deck: Deck,
    params: Mapping[str, float],
    backend: Backend,
    cache: Optional[EvaluationCache] = None,
) -> Evaluation:
    """Bounds-checked, optionally cached, backend-dispatched evaluation.

    Out-of-bounds or missing parameters raise ParamOutOfBounds; they are
    never clamped silently.
    """
    space = backend.space(deck)
    for name, (lo, hi) in space.items():
        if name not in params:
            raise ParamOutOfBounds(f"parameter {name!r} missing from assignment")
        v = params[name]
        if not (lo <= v <= hi):
            raise ParamOutOfBounds(f"{name}={v} outside [{lo}, {hi}]")
    for name in params:
        if name not in space:
            raise ParamOutOfBounds(f"parameter {name!r} not in the deck space")
    if cache is not None:
        hit = cache.get(deck, params)
        if hit is not None:
            return hit
    ev = backend.run(deck, params)
    if ev.status == EvalStatus.OK:
        missing = [m for m in deck.spec_table.names if m not in ev.metric_map]
        bad = [k for k, v in ev.metrics if not math.isfinite(v)]
        if missing or bad:
            ev = Evaluation(ev.params, ev.metrics, EvalStatus.SIM_FAILED, ev.wall_time,
                            f"missing={missing} nonfinite={bad}")
    if cache is not None:
        cache.put(deck, params, ev)
    return ev


# --------------------------------------------------------------------------
# external simulator adapter

# Measurement output parsing is profile-driven so ngspice-class tools work
# out of the box; each profile extracts `name = value` pairs.
_PROFILES: dict[str, re.Pattern] = {
    "standard": re.compile(
        r"^\s*(\w+)\s*=\s*([+-]?\d+\.?\d*(?:[eE][+-]?\d+)?)(?:\s+\S*)?\s*$", re.MULTILINE
    ),
    "ngspice": re.compile(
        r"^\s*(\w+)\s*=\s*([+-]?\d+\.?\d*(?:[eE][+-]?\d+)?)", re.MULTILINE
    ),
}

_NONCONVERGENCE_MARKERS = ("no convergence", "non-convergence", "gmin stepping failed",
                           "singular matrix", "timestep too small")


def parse_measurements(text: str, expected: tuple[str, ...], profile: str = "standard") -> dict[str, float]:
    """Parse `name = value` measurement lines; raises MeasurementParseError
    naming the first expected metric that is absent."""
    pattern = _PROFILES[profile]
    found: dict[str, float] = {}
    for m in pattern.finditer(text):
        found[m.group(1)] = float(m.group(2))
    for name in expected:
        if name not in found:
            raise MeasurementParseError(name)
    return {name: found[name] for name in expected}


@dataclass
class AdapterConfig:
    command: str                      # e.g. "ngspice -b {deck}"
    output_glob: str = ""             # extra files to scan besides stdout
    parser_profile: str = "standard"
    timeout_s: float = 60.0
    workdir: Path = field(default_factory=lambda: Path("simwork"))


class SpiceAdapter:
    """Writes the rendered deck into a content-addressed working directory,
    spawns the configured simulator command, and parses its measurements."""

    def __init__(self, config: AdapterConfig):
        self.config = config
        if config.parser_profile not in _PROFILES:
            raise MeasurementParseError(f"unknown parser profile {config.parser_profile!r}")

    def space(self, deck: Deck) -> dict[str, tuple[float, float]]:
        return deck.space

    def run(self, deck: Deck, params: Mapping[str, float]) -> Evaluation:
        start = time.monotonic()
        frozen = _freeze(params)
        wd = Path(self.config.workdir) / f"{deck.fingerprint()[:16]}_{params_key(params)[:16]}"
        wd.mkdir(parents=True, exist_ok=True)
        deck_path = wd / "deck.sp"
        deck_path.write_text(deck.render(params))
        cmd = shlex.split(self.config.command.format(deck=str(deck_path)))
        try:
            proc = subprocess.run(
                cmd, capture_output=True, text=True,
                timeout=self.config.timeout_s, cwd=wd,
            )
        except subprocess.TimeoutExpired:
            return Evaluation(frozen, (), EvalStatus.TIMEOUT, time.monotonic() - start,
                              f"timeout after {self.config.timeout_s}s")
        except (FileNotFoundError, PermissionError, OSError) as e:
            return Evaluation(frozen, (), EvalStatus.SIM_FAILED, time.monotonic() - start, str(e))

        text = proc.stdout + "\n" + proc.stderr
        lowered = text.lower()
        if any(marker in lowered for marker in _NONCONVERGENCE_MARKERS):
            return Evaluation(frozen, (), EvalStatus.NON_CONVERGENT, time.monotonic() - start,
                              "simulator reported non-convergence")
        if proc.returncode != 0:
            return Evaluation(frozen, (), EvalStatus.SIM_FAILED, time.monotonic() - start,
                              f"exit code {proc.returncode}")
        if self.config.output_glob:
            for path in sorted(glob.glob(str(wd / self.config.output_glob))):
                text += "\n" + Path(path).read_text()
        try:
            metrics = parse_measurements(text, deck.spec_table.names, self.config.parser_profile)
        except MeasurementParseError as e:
            return Evaluation(frozen, (), EvalStatus.SIM_FAILED, time.monotonic() - start, str(e))
        return Evaluation(frozen, _freeze(metrics), EvalStatus.OK, time.monotonic() - start)
