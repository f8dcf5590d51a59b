"""NSGA-II machinery with constraint domination.

All objectives are minimized. Feasibility outranks objective values: any
feasible point dominates any infeasible one, infeasible points compare by
total violation, feasible points by Pareto dominance. Everything is
deterministic given the generator passed in.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class GAConfig:
    population: int = 20
    sbx_eta: float = 15.0
    sbx_prob: float = 0.9
    mutation_eta: float = 20.0
    mutation_prob: Optional[float] = None   # default 1/dim
    log_decades: float = 2.0                # params spanning >= this many decades sample in log space


def pareto_dominates(a: np.ndarray, b: np.ndarray) -> bool:
    return bool(np.all(a <= b) and np.any(a < b))


def constrained_dominates(obj_a, viol_a: float, obj_b, viol_b: float) -> bool:
    if viol_a == 0.0 and viol_b > 0.0:
        return True
    if viol_a > 0.0 and viol_b > 0.0:
        return viol_a < viol_b
    if viol_a > 0.0 and viol_b == 0.0:
        return False
    return pareto_dominates(np.asarray(obj_a), np.asarray(obj_b))


def fast_nondominated_sort(objectives: np.ndarray, violations: np.ndarray) -> list[list[int]]:
    """Fronts of indices, best first (Deb's bookkeeping, constraint-dominated)."""
    n = len(objectives)
    dominated_by: list[list[int]] = [[] for _ in range(n)]
    domination_count = np.zeros(n, dtype=int)
    fronts: list[list[int]] = [[]]
    for p in range(n):
        for q in range(n):
            if p == q:
                continue
            if constrained_dominates(objectives[p], violations[p], objectives[q], violations[q]):
                dominated_by[p].append(q)
            elif constrained_dominates(objectives[q], violations[q], objectives[p], violations[p]):
                domination_count[p] += 1
        if domination_count[p] == 0:
            fronts[0].append(p)
    i = 0
    while fronts[i]:
        nxt = []
        for p in fronts[i]:
            for q in dominated_by[p]:
                domination_count[q] -= 1
                if domination_count[q] == 0:
                    nxt.append(q)
        i += 1
        fronts.append(sorted(nxt))
    fronts.pop()
    return [sorted(f) for f in fronts]


def crowding_distance(objectives: np.ndarray) -> np.ndarray:
    """Per-point crowding distance within one front; boundary points get inf."""
    n, m = objectives.shape
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    for j in range(m):
        order = np.argsort(objectives[:, j], kind="stable")
        lo, hi = objectives[order[0], j], objectives[order[-1], j]
        dist[order[0]] = np.inf
        dist[order[-1]] = np.inf
        span = hi - lo
        if span == 0:
            continue
        for k in range(1, n - 1):
            if np.isinf(dist[order[k]]):
                continue
            dist[order[k]] += (objectives[order[k + 1], j] - objectives[order[k - 1], j]) / span
    return dist


def rank_and_crowd(objectives: np.ndarray, violations: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = len(objectives)
    rank = np.zeros(n, dtype=int)
    crowd = np.zeros(n)
    for r, front in enumerate(fast_nondominated_sort(objectives, violations)):
        rank[list(front)] = r
        crowd[list(front)] = crowding_distance(objectives[list(front)])
    return rank, crowd


def _tournament(rank: np.ndarray, crowd: np.ndarray, rng: np.random.Generator) -> int:
    i, j = rng.integers(0, len(rank), size=2)
    if rank[i] != rank[j]:
        return int(i if rank[i] < rank[j] else j)
    if crowd[i] != crowd[j]:
        return int(i if crowd[i] > crowd[j] else j)
    return int(min(i, j))


def sbx_pair(p1: np.ndarray, p2: np.ndarray, lo: np.ndarray, hi: np.ndarray,
             eta: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    c1, c2 = p1.copy(), p2.copy()
    for k in range(len(p1)):
        if rng.random() > 0.5:
            continue
        u = rng.random()
        if u <= 0.5:
            beta = (2.0 * u) ** (1.0 / (eta + 1.0))
        else:
            beta = (1.0 / (2.0 * (1.0 - u))) ** (1.0 / (eta + 1.0))
        c1[k] = 0.5 * ((1.0 + beta) * p1[k] + (1.0 - beta) * p2[k])
        c2[k] = 0.5 * ((1.0 - beta) * p1[k] + (1.0 + beta) * p2[k])
    return np.clip(c1, lo, hi), np.clip(c2, lo, hi)


def polynomial_mutation(x: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                        eta: float, prob: float, rng: np.random.Generator) -> np.ndarray:
    y = x.copy()
    for k in range(len(x)):
        if rng.random() > prob:
            continue
        span = hi[k] - lo[k]
        if span <= 0:
            continue
        u = rng.random()
        d1 = (y[k] - lo[k]) / span
        d2 = (hi[k] - y[k]) / span
        if u < 0.5:
            dq = (2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1) ** (eta + 1.0)) ** (1.0 / (eta + 1.0)) - 1.0
        else:
            dq = 1.0 - (2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2) ** (eta + 1.0)) ** (1.0 / (eta + 1.0))
        y[k] += dq * span
    return np.clip(y, lo, hi)


def nsga2_step(
    population: np.ndarray,
    objectives: np.ndarray,
    violations: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    config: GAConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """One generation of variation: tournament selection on the evaluated
    population, SBX crossover, polynomial mutation. Returns len(population)
    offspring vectors inside [lo, hi]."""
    n, dim = population.shape
    rank, crowd = rank_and_crowd(objectives, violations)
    pm = config.mutation_prob if config.mutation_prob is not None else 1.0 / max(1, dim)
    children = []
    while len(children) < n:
        a = population[_tournament(rank, crowd, rng)]
        b = population[_tournament(rank, crowd, rng)]
        if rng.random() <= config.sbx_prob:
            c1, c2 = sbx_pair(a, b, lo, hi, config.sbx_eta, rng)
        else:
            c1, c2 = a.copy(), b.copy()
        children.append(polynomial_mutation(c1, lo, hi, config.mutation_eta, pm, rng))
        if len(children) < n:
            children.append(polynomial_mutation(c2, lo, hi, config.mutation_eta, pm, rng))
    return np.array(children)


def select_survivors(objectives: np.ndarray, violations: np.ndarray, count: int) -> list[int]:
    """Environmental selection: fill by front, break the last front by
    descending crowding distance (stable on index for determinism)."""
    chosen: list[int] = []
    for front in fast_nondominated_sort(objectives, violations):
        if len(chosen) + len(front) <= count:
            chosen.extend(front)
            if len(chosen) == count:
                break
        else:
            crowd = crowding_distance(objectives[list(front)])
            order = sorted(range(len(front)), key=lambda i: (-crowd[i], front[i]))
            chosen.extend(front[i] for i in order[: count - len(chosen)])
            break
    return chosen
