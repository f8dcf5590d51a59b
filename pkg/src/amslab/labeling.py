"""Unsupervised performance labeling.

Scores from all topologies of one circuit class are stacked into a global
matrix, standardized, truncated at zero (clustering should group strengths,
not deficits), and clustered with K-means. Each cluster is rated per metric
against the other clusters and summarized as a short trade-off tag such as
"good Gain; bad Area"; every trial inherits its cluster's label and tag.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

RATING_GOOD = "good"
RATING_MODERATE = "moderate"
RATING_BAD = "bad"


@dataclass(frozen=True)
class ScoreMatrix:
    values: np.ndarray                       # (M trials, D metrics), in [0, 100]
    metric_names: tuple[str, ...]
    provenance: tuple[tuple[str, int], ...]  # (topology id, trial id) per row

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ValueError("score matrix must be 2-D")
        if self.values.shape[1] != len(self.metric_names):
            raise ValueError("metric name count must match columns")
        if self.values.shape[0] != len(self.provenance):
            raise ValueError("provenance must cover every row")


def standardize(s: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Column z-scores with population standard deviation. Constant columns
    map to all-zero columns (sigma reported as 0)."""
    s = np.asarray(s, dtype=float)
    mu = s.mean(axis=0)
    sigma = s.std(axis=0)  # population (ddof=0), pinned for reproducibility
    z = np.zeros_like(s)
    nonzero = sigma > 0
    z[:, nonzero] = (s[:, nonzero] - mu[nonzero]) / sigma[nonzero]
    return z, mu, sigma


def truncate_nonneg(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy k-means++: every new center is drawn from several candidates
    sampled proportional to squared distance, keeping the one that lowers
    the total potential the most."""
    n = len(x)
    trials = 2 + int(math.log(k))
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total == 0:
            centers[i] = x[rng.integers(n)]
            continue
        candidates = rng.choice(n, size=trials, p=d2 / total)
        best_idx, best_d2 = None, None
        for c in candidates:
            cand_d2 = np.minimum(d2, np.sum((x - x[c]) ** 2, axis=1))
            if best_d2 is None or cand_d2.sum() < best_d2.sum():
                best_idx, best_d2 = c, cand_d2
        centers[i] = x[best_idx]
        d2 = best_d2
    return centers


def _lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int, tol: float):
    k = len(centers)
    labels = np.zeros(len(x), dtype=int)
    for _ in range(max_iter):
        dists = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = dists.argmin(axis=1)
        new_centers = centers.copy()
        for j in range(k):
            members = x[labels == j]
            if len(members):
                new_centers[j] = members.mean(axis=0)
            else:
                # re-seed an empty cluster to the worst-fit point
                per_point = dists[np.arange(len(x)), labels]
                new_centers[j] = x[per_point.argmax()]
        shift = float(np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max())
        centers = new_centers
        if shift < tol:
            break
    dists = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = dists.argmin(axis=1)
    inertia = float(dists[np.arange(len(x)), labels].sum())
    return labels, centers, inertia


def _hartigan_refine(x: np.ndarray, labels: np.ndarray, k: int,
                     max_sweeps: int = 50) -> tuple[np.ndarray, np.ndarray, float]:
    """Single-point reassignment until no move lowers inertia. Batch Lloyd
    fixed points are not always one-move optimal; this polish is strictly
    inertia-decreasing, so it terminates and never worsens a restart."""
    n = len(x)
    counts = np.bincount(labels, minlength=k).astype(float)
    sums = np.zeros((k, x.shape[1]))
    for j in range(k):
        if counts[j]:
            sums[j] = x[labels == j].sum(axis=0)
    for _ in range(max_sweeps):
        moved = False
        for i in range(n):
            a = labels[i]
            if counts[a] <= 1:
                continue  # moving a singleton can never lower inertia
            ca = sums[a] / counts[a]
            gain = counts[a] / (counts[a] - 1.0) * float(((x[i] - ca) ** 2).sum())
            with np.errstate(divide="ignore", invalid="ignore"):
                centers = sums / counts[:, None]
            cost = counts / (counts + 1.0) * ((x[i] - centers) ** 2).sum(axis=1)
            cost[counts == 0] = 0.0
            cost[a] = np.inf
            b = int(cost.argmin())
            if cost[b] < gain - 1e-12:
                sums[a] -= x[i]
                counts[a] -= 1
                sums[b] += x[i]
                counts[b] += 1
                labels[i] = b
                moved = True
        if not moved:
            break
    centers = np.where(counts[:, None] > 0, sums / np.maximum(counts, 1.0)[:, None], 0.0)
    dists = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    inertia = float(dists[np.arange(n), labels].sum())
    return labels, centers, inertia


def kmeans(
    x: np.ndarray,
    k: int,
    seed: int,
    n_init: int = 10,
    max_iter: int = 300,
    tol: float = 1e-6,
) -> tuple[np.ndarray, np.ndarray, float]:
    """K-means with k-means++ starts: Lloyd to convergence per restart, a
    Hartigan single-point polish on each, lowest inertia kept. Returns
    (labels, centers, inertia); labels are 0-based here."""
    x = np.asarray(x, dtype=float)
    if not 1 <= k <= len(x):
        raise ValueError(f"need 1 <= k <= {len(x)}, got {k}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        centers0 = _kmeans_pp_init(x, k, rng)
        labels, centers, inertia = _lloyd(x, centers0, max_iter, tol)
        labels, centers, inertia = _hartigan_refine(x, labels, k)
        if best is None or inertia < best[2]:
            best = (labels, centers, inertia)
    return best


@dataclass(frozen=True)
class ClusterModel:
    k: int
    labels: tuple[int, ...]            # 1-based cluster per trial row
    centers_score: np.ndarray          # (K, D) means of raw scores per cluster
    centers_std: np.ndarray            # (K, D) standardized centers
    mu: np.ndarray
    sigma: np.ndarray
    inertia: float


def build_cluster_model(s: np.ndarray, labels0: np.ndarray, mu: np.ndarray,
                        sigma: np.ndarray, inertia: float, k: int | None = None) -> ClusterModel:
    k = int(labels0.max()) + 1 if k is None else k
    centers_score = np.vstack([
        s[labels0 == j].mean(axis=0) if np.any(labels0 == j) else mu.copy()
        for j in range(k)
    ])
    centers_std = np.zeros_like(centers_score)
    nonzero = sigma > 0
    centers_std[:, nonzero] = (centers_score[:, nonzero] - mu[nonzero]) / sigma[nonzero]
    return ClusterModel(
        k=k,
        labels=tuple(int(l) + 1 for l in labels0),
        centers_score=centers_score,
        centers_std=centers_std,
        mu=mu,
        sigma=sigma,
        inertia=inertia,
    )


def rate_metrics(model: ClusterModel, fraction: float = 0.25) -> list[list[str]]:
    """ratings[cluster][metric] in {good, moderate, bad}: top ceil(q*K)
    clusters per metric are good, bottom ceil(q*K) bad, ties share the
    better rating."""
    if not 0.0 < fraction <= 0.5:
        raise ValueError("fraction must be in (0, 0.5]")
    k, d = model.centers_score.shape
    take = math.ceil(fraction * k)
    ratings = [[RATING_MODERATE] * d for _ in range(k)]
    for j in range(d):
        vals = model.centers_score[:, j]
        desc = np.sort(vals)[::-1]
        good_cut = desc[take - 1]
        bad_cut = np.sort(vals)[take - 1]
        for c in range(k):
            if vals[c] >= good_cut:
                ratings[c][j] = RATING_GOOD
            elif vals[c] <= bad_cut:
                ratings[c][j] = RATING_BAD
    return ratings


@dataclass(frozen=True)
class Tag:
    cluster: int                               # 1-based
    parts: tuple[tuple[str, str], ...]         # (rating, metric name)

    @property
    def text(self) -> str:
        return "; ".join(f"{rating} {metric}" for rating, metric in self.parts)


SALIENT_FOURTH_THRESHOLD = 0.5


def make_tags(model: ClusterModel, ratings: Sequence[Sequence[str]],
              metric_names: Sequence[str]) -> list[Tag]:
    """Per cluster: metrics ranked by |standardized center| (ties by metric
    index), top three kept plus a fourth when it is still salient."""
    tags = []
    d = len(metric_names)
    for c in range(model.k):
        mags = np.abs(model.centers_std[c])
        order = sorted(range(d), key=lambda j: (-mags[j], j))
        keep = order[: min(3, d)]
        if d >= 4 and mags[order[3]] >= SALIENT_FOURTH_THRESHOLD:
            keep = order[:4]
        parts = tuple((ratings[c][j], metric_names[j]) for j in keep)
        tags.append(Tag(cluster=c + 1, parts=parts))
    return tags


@dataclass(frozen=True)
class LabelingResult:
    model: ClusterModel
    ratings: tuple[tuple[str, ...], ...]
    tags: tuple[Tag, ...]
    row_labels: tuple[int, ...]            # cluster per row, 1-based
    row_tags: tuple[str, ...]              # rendered tag per row


def label_scores(matrix: ScoreMatrix, k: int, seed: int, fraction: float = 0.25) -> LabelingResult:
    """The full labeling pass over one circuit class."""
    s = matrix.values
    if len(s) < k:
        warnings.warn(f"only {len(s)} trials for k={k}; reducing k to {len(s)}")
        k = len(s)
    z, mu, sigma = standardize(s)
    zp = truncate_nonneg(z)
    labels0, _, inertia = kmeans(zp, k, seed)
    model = build_cluster_model(s, labels0, mu, sigma, inertia, k=k)
    ratings = rate_metrics(model, fraction)
    tags = make_tags(model, ratings, matrix.metric_names)
    by_cluster = {t.cluster: t.text for t in tags}
    return LabelingResult(
        model=model,
        ratings=tuple(tuple(r) for r in ratings),
        tags=tuple(tags),
        row_labels=model.labels,
        row_tags=tuple(by_cluster[l] for l in model.labels),
    )
