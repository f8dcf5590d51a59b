"""Independent brute-force oracles used by the test suite only.

These deliberately avoid the library code paths they check.
"""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def partition_table(m: int, k: int) -> np.ndarray:
    """Every partition of m items into at most k unlabeled groups, encoded
    as restricted-growth strings, shape (P, m)."""
    rows = np.zeros((1, 1), dtype=np.int8)   # first item always in group 0
    maxused = np.zeros(1, dtype=np.int8)
    for _ in range(1, m):
        blocks = []
        blocks_max = []
        for s in range(k):
            allowed = maxused >= s - 1 if s > 0 else np.ones(len(rows), dtype=bool)
            allowed = maxused + 1 >= s
            take = rows[allowed]
            if not len(take):
                continue
            col = np.full((len(take), 1), s, dtype=np.int8)
            blocks.append(np.hstack([take, col]))
            blocks_max.append(np.maximum(maxused[allowed], s))
        rows = np.vstack(blocks)
        maxused = np.concatenate(blocks_max)
    return rows


def optimal_inertia(x: np.ndarray, k: int) -> float:
    """Minimum k-means inertia over every partition into <= k groups."""
    x = np.asarray(x, dtype=float)
    m = len(x)
    parts = partition_table(m, k)
    total_sq = float((x ** 2).sum())
    term = np.zeros(len(parts))
    for j in range(k):
        mask = (parts == j)
        counts = mask.sum(axis=1)
        sums = mask.astype(float) @ x
        with np.errstate(divide="ignore", invalid="ignore"):
            contrib = (sums ** 2).sum(axis=1) / counts
        term += np.where(counts > 0, contrib, 0.0)
    return float(total_sq - term.max())


def domination_matrix(objectives: np.ndarray, violations: np.ndarray) -> np.ndarray:
    """D[i, j] true iff i constraint-dominates j, fully vectorized."""
    objs = np.asarray(objectives, dtype=float)
    viol = np.asarray(violations, dtype=float)
    le = np.all(objs[:, None, :] <= objs[None, :, :], axis=2)
    lt = np.any(objs[:, None, :] < objs[None, :, :], axis=2)
    feas = viol == 0.0
    fi = feas[:, None]
    fj = feas[None, :]
    pareto = le & lt
    by_violation = viol[:, None] < viol[None, :]
    d = (fi & ~fj) | (~fi & ~fj & by_violation) | (fi & fj & pareto)
    np.fill_diagonal(d, False)
    return d


def peel_fronts(objectives: np.ndarray, violations: np.ndarray) -> list[list[int]]:
    """Front extraction by repeatedly removing the currently undominated set."""
    d = domination_matrix(objectives, violations)
    alive = np.ones(len(objectives), dtype=bool)
    fronts = []
    while alive.any():
        idx = np.where(alive)[0]
        dominated = d[np.ix_(idx, idx)].any(axis=0)
        front = idx[~dominated]
        fronts.append(sorted(int(i) for i in front))
        alive[front] = False
    return fronts
