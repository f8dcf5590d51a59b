"""Black-box sizing on top of the simulator abstraction.

Identification treats circuit classification as a pure feasibility search:
a deck is accepted for its class iff some parameter vector meets every
gating threshold within the trial budget, with early stop on the first
feasible trial. Accepted topologies then undergo extended multi-objective
optimization over the full normalized score vector with a larger budget.
Both phases are bit-deterministic per seed on the surrogate backend.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import BackendDown, NoFeasiblePolarity, ParamOutOfBounds
from .nsga2 import GAConfig, nsga2_step, select_survivors
from .scoring import score, violation
from .sim import Backend, EvalStatus, Evaluation, EvaluationCache, evaluate
from .specs import SpecTable
from .testbench import Deck

# Substitute violation for trials whose simulation failed; keeps the
# constraint-domination ordering total.
FAILED_TRIAL_VIOLATION = 1e9


@dataclass(frozen=True)
class ParamSpace:
    """Sorted, optionally log-warped parameter box."""

    names: tuple[str, ...]
    lo: np.ndarray            # encoded coordinates
    hi: np.ndarray
    log_mask: np.ndarray

    @staticmethod
    def from_bounds(bounds: Mapping[str, tuple[float, float]], log_decades: float = 2.0) -> "ParamSpace":
        names = tuple(sorted(bounds))
        lo, hi, mask = [], [], []
        for name in names:
            a, b = bounds[name]
            use_log = a > 0 and b / a >= 10.0 ** log_decades
            mask.append(use_log)
            lo.append(np.log10(a) if use_log else a)
            hi.append(np.log10(b) if use_log else b)
        return ParamSpace(names, np.array(lo), np.array(hi), np.array(mask, dtype=bool))

    @property
    def dim(self) -> int:
        return len(self.names)

    def decode(self, x: np.ndarray) -> dict[str, float]:
        vals = x.astype(float).copy()
        vals[self.log_mask] = 10.0 ** vals[self.log_mask]
        return {name: float(v) for name, v in zip(self.names, vals)}

    def encode(self, params: Mapping[str, float]) -> np.ndarray:
        missing = [name for name in self.names if name not in params]
        if missing:
            raise ParamOutOfBounds(f"point does not cover parameters {missing}")
        x = np.array([float(params[name]) for name in self.names])
        x[self.log_mask] = np.log10(x[self.log_mask])
        return x

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(count, self.dim))


@dataclass(frozen=True)
class TrialRecord:
    trial_index: int                       # 1-based
    params: tuple[tuple[str, float], ...]
    metrics: tuple[tuple[str, float], ...]
    violations: tuple[tuple[str, float], ...]   # gating metrics only
    scores: tuple[tuple[str, float], ...]       # every table metric
    total_violation: float
    feasible: bool
    status: str

    @property
    def score_vector(self) -> tuple[float, ...]:
        return tuple(v for _, v in self.scores)

    def to_json_dict(self) -> dict:
        return {
            "trial": self.trial_index,
            "params": dict(self.params),
            "metrics": dict(self.metrics),
            "violations": dict(self.violations),
            "scores": dict(self.scores),
            "total_violation": self.total_violation,
            "feasible": self.feasible,
            "status": self.status,
        }


@dataclass(frozen=True)
class SizingProblem:
    deck: Deck
    specs: SpecTable
    budget: int
    seed: int
    initial_point: Optional[Mapping[str, float]] = None

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")


@dataclass
class IdentificationResult:
    circuit_class: str
    permutation_index: int
    accepted: bool
    first_feasible_trial: Optional[int]
    trials_used: int
    records: list[TrialRecord] = field(default_factory=list)


def make_record(index: int, ev: Evaluation, table: SpecTable) -> TrialRecord:
    if ev.status == EvalStatus.OK:
        metric_map = ev.metric_map
        viols = tuple((m.name, violation(metric_map[m.name], m)) for m in table.gating)
        scores = tuple((m.name, score(metric_map[m.name], m)) for m in table.metrics)
        total = float(sum(v for _, v in viols))
    else:
        viols = tuple((m.name, FAILED_TRIAL_VIOLATION) for m in table.gating)
        scores = tuple((m.name, 0.0) for m in table.metrics)
        total = FAILED_TRIAL_VIOLATION * max(1, len(viols))
    return TrialRecord(
        trial_index=index,
        params=ev.params,
        metrics=ev.metrics,
        violations=viols,
        scores=scores,
        total_violation=total,
        feasible=total == 0.0,
        status=ev.status.value,
    )


def _evaluate_generation(
    deck: Deck,
    points: Sequence[dict[str, float]],
    backend: Backend,
    cache: Optional[EvaluationCache],
    workers: int,
) -> list[Evaluation]:
    if workers > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda p: evaluate(deck, p, backend, cache), points))
    return [evaluate(deck, p, backend, cache) for p in points]


def _objectives(records: Sequence[TrialRecord], feasibility_only: bool) -> np.ndarray:
    if feasibility_only:
        # identification has no objective beyond feasibility
        return np.zeros((len(records), 1))
    return np.array([[100.0 - v for v in r.score_vector] for r in records])


def _run_engine(
    problem: SizingProblem,
    backend: Backend,
    cache: Optional[EvaluationCache],
    ga: GAConfig,
    early_stop: bool,
    workers: int = 1,
) -> tuple[list[TrialRecord], Optional[int]]:
    """Generational loop under a strict evaluation budget. Returns all trial
    records plus the index of the first feasible trial, if any."""
    space = ParamSpace.from_bounds(backend.space(problem.deck), ga.log_decades)
    rng = np.random.default_rng(problem.seed)
    records: list[TrialRecord] = []
    first_feasible: Optional[int] = None

    pop_size = max(2, min(ga.population, problem.budget))
    pop = space.sample(pop_size, rng)
    if problem.initial_point is not None:
        pop[0] = space.encode(problem.initial_point)

    parents_x: Optional[np.ndarray] = None
    parents_records: list[TrialRecord] = []
    pending = pop

    while len(records) < problem.budget:
        remaining = problem.budget - len(records)
        batch = pending[:remaining]
        points = [space.decode(x) for x in batch]
        evals = _evaluate_generation(problem.deck, points, backend, cache, workers)
        batch_records = []
        for ev in evals:
            rec = make_record(len(records) + 1, ev, problem.specs)
            records.append(rec)
            batch_records.append(rec)
            if rec.feasible and first_feasible is None:
                first_feasible = rec.trial_index
        if all(r.status != EvalStatus.OK.value for r in batch_records):
            raise BackendDown(
                f"all {len(batch_records)} trials in a generation failed on deck "
                f"{problem.deck.template_id}"
            )
        if early_stop and first_feasible is not None:
            break
        if len(records) >= problem.budget:
            break

        # environmental selection over parents + fresh batch
        pool_x = batch if parents_x is None else np.vstack([parents_x, batch])
        pool_records = parents_records + batch_records
        objs = _objectives(pool_records, feasibility_only=early_stop)
        viols = np.array([r.total_violation for r in pool_records])
        keep = select_survivors(objs, viols, min(pop_size, len(pool_records)))
        parents_x = pool_x[keep]
        parents_records = [pool_records[i] for i in keep]

        objs_k = _objectives(parents_records, feasibility_only=early_stop)
        viols_k = np.array([r.total_violation for r in parents_records])
        pending = nsga2_step(parents_x, objs_k, viols_k, space.lo, space.hi, ga, rng)

    return records, first_feasible


def identify(
    problem: SizingProblem,
    backend: Backend,
    cache: Optional[EvaluationCache] = None,
    ga: GAConfig = GAConfig(),
    workers: int = 1,
    permutation_index: int = 0,
) -> IdentificationResult:
    """Feasibility search with early stop: accepted iff some trial within the
    budget meets every gating threshold."""
    records, first = _run_engine(problem, backend, cache, ga, early_stop=True, workers=workers)
    return IdentificationResult(
        circuit_class=problem.specs.circuit_class.value,
        permutation_index=permutation_index,
        accepted=first is not None,
        first_feasible_trial=first,
        trials_used=len(records),
        records=records,
    )


def optimize(
    problem: SizingProblem,
    backend: Backend,
    cache: Optional[EvaluationCache] = None,
    ga: GAConfig = GAConfig(),
    workers: int = 1,
) -> list[TrialRecord]:
    """Extended multi-objective sizing: runs the full budget (no early stop)
    and returns the feasible trials with their normalized score vectors."""
    records, _ = _run_engine(problem, backend, cache, ga, early_stop=False, workers=workers)
    return [r for r in records if r.feasible]


def choose_polarity(results: Sequence[IdentificationResult]) -> IdentificationResult:
    """The permutation reaching feasibility in the fewest trials wins; ties
    break toward the lowest permutation index."""
    if not results:
        raise NoFeasiblePolarity("no identification results")
    accepted = [r for r in results if r.accepted]
    if not accepted:
        raise NoFeasiblePolarity(
            f"no feasible polarity out of {len(results)} for class {results[0].circuit_class}"
        )
    return min(accepted, key=lambda r: (r.first_feasible_trial, r.permutation_index))
