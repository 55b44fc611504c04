"""Expectation-based Poisson scan over circular space-time regions.

Counts are aggregated per (location, foreground topic, day); baselines are
trailing moving averages of those counts. The scan maximizes the
log-likelihood ratio C*log(C/B) + B - C over every combination of circular
region (a center plus its n nearest neighbors), trailing day window, and
foreground topic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .assign import AssignedDocument


@dataclass(frozen=True)
class CountCube:
    """Observed counts per (location, foreground topic, day)."""

    counts: np.ndarray  # (locations, topics, days) int64
    start_day: int

    @property
    def n_locations(self) -> int:
        return self.counts.shape[0]

    @property
    def n_topics(self) -> int:
        return self.counts.shape[1]

    @property
    def n_days(self) -> int:
        return self.counts.shape[2]

    @property
    def end_day(self) -> int:
        return self.start_day + self.n_days - 1


@dataclass(frozen=True)
class BaselineCube:
    """Expected counts; NaN on days without a full trailing history."""

    baselines: np.ndarray  # (locations, topics, days) float64
    start_day: int
    baseline_days: int

    @property
    def valid_from(self) -> int:
        return self.start_day + self.baseline_days

    @property
    def end_day(self) -> int:
        return self.start_day + self.baselines.shape[2] - 1


@dataclass(frozen=True)
class SpaceTimeRegion:
    """A circular location set crossed with the most recent ``duration`` days."""

    center: int
    n_neighbors: int
    duration: int
    locations: tuple[int, ...]  # center first, then neighbors by distance
    start_day: int
    end_day: int


@dataclass(frozen=True)
class DetectionResult:
    region: SpaceTimeRegion
    topic: int  # foreground topic index (0-based within the foreground block)
    count: float
    baseline: float  # floored aggregate actually used for scoring
    score: float
    relative_risk: float
    p_value: float | None = None


def build_count_cube(
    assigned_documents: Sequence[AssignedDocument],
    k_prime: int,
    day_span: tuple[int, int],
    n_locations: int,
) -> CountCube:
    """Count foreground-assigned documents per cell; background assignments are excluded."""
    start, end = day_span
    if end < start:
        raise ValueError("empty day span")
    counts = np.zeros((n_locations, k_prime, end - start + 1), dtype=np.int64)
    for a in assigned_documents:
        if not a.is_foreground:
            continue
        day = a.document.day_index
        if day < start or day > end:
            continue
        if a.foreground_index is None or a.foreground_index >= k_prime:
            raise ValueError("assigned document has no valid foreground topic index")
        counts[a.document.location_index, a.foreground_index, day - start] += 1
    return CountCube(counts, start)


def build_baseline_cube(count_cube: CountCube, baseline_days: int = 30) -> BaselineCube:
    """Trailing ``baseline_days``-day moving average of the counts.

    Day t's baseline is the mean of counts over [t - baseline_days, t - 1];
    days without full history are NaN.
    """
    if baseline_days < 1:
        raise ValueError("baseline_days must be >= 1")
    n_days = count_cube.n_days
    if n_days <= baseline_days:
        earliest = count_cube.start_day + baseline_days
        raise ValueError(
            f"insufficient count history: earliest valid detection day is {earliest}, "
            f"but the cube ends at {count_cube.end_day}"
        )
    cs = np.cumsum(count_cube.counts, axis=2, dtype=np.float64)
    b = np.full(count_cube.counts.shape, np.nan)
    upper = cs[:, :, baseline_days - 1 : n_days - 1]
    lower = np.zeros_like(upper)
    lower[:, :, 1:] = cs[:, :, : n_days - baseline_days - 1]
    b[:, :, baseline_days:] = (upper - lower) / baseline_days
    return BaselineCube(b, count_cube.start_day, baseline_days)


def ebp_score(count: float, baseline: float) -> float:
    """Expectation-based Poisson log-likelihood ratio for aggregates (C, B).

    Zero whenever C <= B. Callers must floor B away from zero before
    scoring; B = 0 with C > 0 is rejected.
    """
    if not (math.isfinite(count) and math.isfinite(baseline)):
        raise ValueError("count and baseline must be finite")
    if count < 0 or baseline < 0:
        raise ValueError("count and baseline must be non-negative")
    if count <= baseline:
        return 0.0
    if baseline == 0.0:
        raise ValueError("baseline is zero with a positive count; floor baselines first")
    return count * math.log(count / baseline) + baseline - count


def _validate_scan_inputs(count_cube, baseline_cube, neighbor_order, n_max, w_max, detection_day):
    if count_cube.counts.shape != baseline_cube.baselines.shape:
        raise ValueError("count and baseline cubes have different shapes")
    if count_cube.start_day != baseline_cube.start_day:
        raise ValueError("count and baseline cubes are not aligned")
    if detection_day != count_cube.end_day:
        raise ValueError(f"detection day {detection_day} must be the cube's last day {count_cube.end_day}")
    n = count_cube.n_locations
    if neighbor_order.shape != (n, n):
        raise ValueError("neighbor order must be a full (N, N) matrix")
    if not 1 <= n_max < n:
        raise ValueError("n_max must satisfy 1 <= n_max < N")
    if not 1 <= w_max <= count_cube.n_days:
        raise ValueError("w_max out of range")
    if detection_day - w_max + 1 < baseline_cube.valid_from:
        raise ValueError(
            f"baselines are only valid from day {baseline_cube.valid_from}; "
            f"a {w_max}-day window ending at {detection_day} reaches before that"
        )


def _score_grid(count_cube, baseline_cube, neighbor_order, n_max, w_max, b_min):
    """Aggregate and score every region; arrays indexed [center, n-1, topic, W-1]."""
    n_days = count_cube.n_days
    tail_c = count_cube.counts[:, :, n_days - w_max :][:, :, ::-1]
    tail_b = baseline_cube.baselines[:, :, n_days - w_max :][:, :, ::-1]
    sum_c = np.cumsum(tail_c, axis=2)  # [..., W-1] = most recent W days
    sum_b = np.cumsum(tail_b, axis=2)
    picked = neighbor_order[:, : n_max + 1].astype(np.intp)
    pref_c = np.cumsum(sum_c[picked], axis=1)  # (N, n_max + 1, topics, w_max)
    pref_b = np.cumsum(sum_b[picked], axis=1)
    counts = pref_c[:, 1:]
    baselines = np.maximum(pref_b[:, 1:], b_min)
    scores = np.zeros_like(baselines)
    mask = counts > baselines
    c = counts[mask].astype(np.float64)
    b = baselines[mask]
    scores[mask] = c * np.log(c / b) + b - c
    return counts, baselines, scores


def scan_all(
    count_cube: CountCube,
    baseline_cube: BaselineCube,
    neighbor_order: np.ndarray,
    n_max: int,
    w_max: int,
    detection_day: int,
    *,
    b_min: float = 0.5,
    limit: int | None = None,
) -> list[DetectionResult]:
    """Score every (center, n, W, topic) combination, ranked by descending score.

    Aggregate baselines are floored at ``b_min`` before scoring so that
    brand-new topics with near-zero history cannot produce unbounded
    scores. Equal scores rank by lower W, then lower n, lower center index,
    lower topic index.
    """
    _validate_scan_inputs(count_cube, baseline_cube, neighbor_order, n_max, w_max, detection_day)
    counts, baselines, scores = _score_grid(
        count_cube, baseline_cube, neighbor_order, n_max, w_max, b_min
    )
    centers, ns, topics, ws = np.indices(scores.shape)
    flat_order = np.lexsort(
        (topics.ravel(), centers.ravel(), ns.ravel(), ws.ravel(), -scores.ravel())
    )
    if limit is not None:
        flat_order = flat_order[:limit]
    c_flat = counts.ravel()
    b_flat = baselines.ravel()
    s_flat = scores.ravel()
    centers = centers.ravel()
    ns = ns.ravel()
    topics = topics.ravel()
    ws = ws.ravel()
    results: list[DetectionResult] = []
    for idx in flat_order:
        center = int(centers[idx])
        n = int(ns[idx]) + 1
        w = int(ws[idx]) + 1
        region = SpaceTimeRegion(
            center=center,
            n_neighbors=n,
            duration=w,
            locations=tuple(int(v) for v in neighbor_order[center, : n + 1]),
            start_day=detection_day - w + 1,
            end_day=detection_day,
        )
        c = float(c_flat[idx])
        b = float(b_flat[idx])
        if b > 0:
            risk = c / b
        else:  # reachable only with b_min = 0
            risk = math.inf if c > 0 else 0.0
        results.append(
            DetectionResult(
                region=region,
                topic=int(topics[idx]),
                count=c,
                baseline=b,
                score=float(s_flat[idx]),
                relative_risk=risk,
            )
        )
    return results


def top_score(
    count_cube: CountCube,
    baseline_cube: BaselineCube,
    neighbor_order: np.ndarray,
    n_max: int,
    w_max: int,
    detection_day: int,
    *,
    b_min: float = 0.5,
) -> float:
    """Maximum score over all regions, without materializing the ranked list."""
    _validate_scan_inputs(count_cube, baseline_cube, neighbor_order, n_max, w_max, detection_day)
    _, _, scores = _score_grid(count_cube, baseline_cube, neighbor_order, n_max, w_max, b_min)
    return float(scores.max())


def randomization_test(
    observed_top_score: float,
    baseline_cube: BaselineCube,
    neighbor_order: np.ndarray,
    n_max: int,
    w_max: int,
    num_replicas: int,
    seed=0,
    *,
    b_min: float = 0.5,
) -> float:
    """Monte Carlo p-value for the observed top score under the null.

    Each replica redraws the scanned days' counts as Poisson(baseline) and
    is scanned with the same geometry; the p-value is
    (1 + #{replica top >= observed}) / (1 + num_replicas).
    """
    if num_replicas < 1:
        raise ValueError("num_replicas must be >= 1")
    rng = np.random.default_rng(seed)
    shape = baseline_cube.baselines.shape
    n_days = shape[2]
    detection_day = baseline_cube.end_day
    tail_b = baseline_cube.baselines[:, :, n_days - w_max :]
    if np.isnan(tail_b).any():
        raise ValueError("baselines are not valid over the scanned window")
    exceed = 0
    for _ in range(num_replicas):
        counts = np.zeros(shape, dtype=np.int64)
        counts[:, :, n_days - w_max :] = rng.poisson(tail_b)
        replica = CountCube(counts, baseline_cube.start_day)
        top = top_score(
            replica, baseline_cube, neighbor_order, n_max, w_max, detection_day, b_min=b_min
        )
        if top >= observed_top_score:
            exceed += 1
    return (1 + exceed) / (1 + num_replicas)
