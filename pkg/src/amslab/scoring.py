"""Normalized metric scoring.

Meeting a metric's threshold maps to a score of 60 and meeting its target
to 100, linearly in between. Below the threshold the score falls linearly
to 0 at the same normalized distance scale (score = 60 * (1 - exceedance)),
so the curve is continuous and monotone in the favorable direction.
Everything is clamped to [0, 100].
"""

from __future__ import annotations

from .errors import DegenerateSpec
from .specs import Direction, MetricSpec

SCORE_AT_THRESHOLD = 60.0
SCORE_AT_TARGET = 100.0


def _clamp(v: float) -> float:
    return 0.0 if v < 0.0 else 100.0 if v > 100.0 else v


def score(value: float, spec: MetricSpec) -> float:
    """Score one raw metric value against its threshold/target pair."""
    if spec.direction == Direction.HIGHER_BETTER:
        r, t = float(spec.threshold), float(spec.target)
        if t == r:
            raise DegenerateSpec(spec.name)
        x = (value - r) / (t - r)
    elif spec.direction == Direction.LOWER_BETTER:
        r, t = float(spec.threshold), float(spec.target)
        if t == r:
            raise DegenerateSpec(spec.name)
        x = (r - value) / (r - t)
    else:
        rl, rh = spec.threshold
        tl, th = spec.target
        if tl == rl or th == rh:
            raise DegenerateSpec(spec.name)
        if tl <= value <= th:
            x = 1.0
        elif value < tl:
            x = (value - rl) / (tl - rl)
        else:
            x = (rh - value) / (rh - th)
    if x >= 0.0:
        return _clamp(SCORE_AT_THRESHOLD + (SCORE_AT_TARGET - SCORE_AT_THRESHOLD) * x)
    return _clamp(SCORE_AT_THRESHOLD * (1.0 + x))


def violation(value: float, spec: MetricSpec) -> float:
    """Direction-adjusted constraint violation; 0 iff the threshold is met."""
    if spec.direction == Direction.HIGHER_BETTER:
        return max(0.0, float(spec.threshold) - value)
    if spec.direction == Direction.LOWER_BETTER:
        return max(0.0, value - float(spec.threshold))
    rl, rh = spec.threshold
    return max(0.0, rl - value, value - rh)
