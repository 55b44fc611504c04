"""Event characterization metrics and detection-performance curves."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np


def hellinger(p, q) -> float:
    """Hellinger distance between two distributions over the same support.

    Both inputs must be non-negative and sum to 1 within 1e-6.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("distributions must share a support")
    for name, v in (("p", p), ("q", q)):
        if np.any(v < 0):
            raise ValueError(f"{name} has negative entries")
        if abs(float(v.sum()) - 1.0) > 1e-6:
            raise ValueError(f"{name} does not sum to 1")
    d = float(np.sqrt(0.5 * np.sum((np.sqrt(p) - np.sqrt(q)) ** 2)))
    return min(d, 1.0)


def jaccard_overlap(a: Iterable, b: Iterable) -> float:
    """|A intersect B| / |A union B|; two empty sets overlap perfectly."""
    sa, sb = set(a), set(b)
    union = sa | sb
    if not union:
        return 1.0
    return len(sa & sb) / len(union)


def calibrate_threshold(
    null_day_scores: Sequence[float],
    target_fp_per_year: float,
    *,
    days_per_year: float = 365.25,
    min_days: int = 60,
) -> float:
    """Alarm threshold whose expected daily alarm rate matches the FP target.

    Takes the empirical quantile of daily null top-scores at level
    1 - target / days_per_year with higher interpolation, so the realized
    false positive rate does not exceed the target. Alarms fire on scores
    strictly above the threshold.
    """
    scores = np.asarray(null_day_scores, dtype=np.float64)
    if scores.size < min_days:
        raise ValueError(f"need at least {min_days} null detection days, got {scores.size}")
    if target_fp_per_year <= 0:
        raise ValueError("target_fp_per_year must be positive")
    level = max(0.0, min(1.0, 1.0 - target_fp_per_year / days_per_year))
    return float(np.quantile(scores, level, method="higher"))


@dataclass(frozen=True)
class DaySummary:
    """Per-detection-day evaluation inputs distilled from a trial."""

    day: int
    event_day: int | None  # 1-based day within the event window, None outside it
    score: float
    hellinger_distance: float | None
    spatial_overlap: float | None
    document_overlap: float | None


@dataclass(frozen=True)
class TrialSummary:
    event_start: int | None
    event_end: int | None
    days: tuple[DaySummary, ...]

    @property
    def is_null(self) -> bool:
        return self.event_start is None


def summarize_trial(trial) -> TrialSummary:
    """Reduce a simulation TrialRecord to the per-day metric inputs.

    Hellinger compares the detected topic's word distribution to the
    injected documents' empirical distribution; the overlaps are Jaccard
    similarities of location sets and of detection-window document sets.
    Metrics are None outside the event window.
    """
    if isinstance(trial, TrialSummary):
        return trial
    days = []
    dist = trial.injected_distribution
    for rec in trial.days:
        hd = so = do = None
        if rec.event_active:
            if dist is not None:
                hd = hellinger(rec.detected_phi, dist)
            so = jaccard_overlap(rec.detected_locations, rec.true_locations)
            do = jaccard_overlap(rec.detected_topic_window_ids, rec.injected_window_ids)
        days.append(
            DaySummary(
                day=rec.day,
                event_day=rec.event_day,
                score=rec.result.score,
                hellinger_distance=hd,
                spatial_overlap=so,
                document_overlap=do,
            )
        )
    return TrialSummary(trial.event_start, trial.event_end, tuple(days))


def null_day_scores(trials: Iterable) -> list[float]:
    """Daily top-scores pooled from the null trials."""
    scores = []
    for trial in trials:
        summary = summarize_trial(trial)
        if summary.is_null:
            scores.extend(d.score for d in summary.days)
    return scores


@dataclass(frozen=True)
class ThresholdMetrics:
    fp_per_year: float
    threshold: float
    n_trials: int
    n_detected: int
    fraction_detected: float
    mean_days_to_detect: float | None
    mean_alarm_hellinger: float | None
    mean_alarm_spatial_overlap: float | None
    mean_alarm_document_overlap: float | None


@dataclass(frozen=True)
class EventDayMetrics:
    event_day: int
    n_trials: int
    mean_hellinger_distance: float | None
    mean_spatial_overlap: float | None
    mean_document_overlap: float | None


@dataclass(frozen=True)
class MetricReport:
    by_threshold: tuple[ThresholdMetrics, ...]
    by_event_day: tuple[EventDayMetrics, ...]


def _mean(values: list[float]) -> float | None:
    return sum(values) / len(values) if values else None


def detection_metrics(trials: Sequence, thresholds: Mapping[float, float]) -> MetricReport:
    """Detection and characterization tables over the injected trials.

    A trial counts as detected at a threshold when some detection day
    inside its event window scores strictly above the threshold;
    days-to-detect is the first such day relative to event start (day 1
    boundary inclusive). Trials without an alarm are excluded from the
    days-to-detect mean. The per-event-day table averages each day's
    metrics over all injected trials regardless of alarms.
    """
    summaries = [summarize_trial(t) for t in trials]
    injected = [s for s in summaries if not s.is_null]
    if not injected:
        raise ValueError("no injected trials to evaluate")

    rows = []
    for fp, thr in thresholds.items():
        detected = 0
        dtd: list[float] = []
        alarm_hd: list[float] = []
        alarm_so: list[float] = []
        alarm_do: list[float] = []
        for s in injected:
            alarm = next(
                (
                    d
                    for d in s.days
                    if d.event_day is not None and d.score > thr
                ),
                None,
            )
            if alarm is None:
                continue
            detected += 1
            dtd.append(alarm.day - s.event_start + 1)
            if alarm.hellinger_distance is not None:
                alarm_hd.append(alarm.hellinger_distance)
            if alarm.spatial_overlap is not None:
                alarm_so.append(alarm.spatial_overlap)
            if alarm.document_overlap is not None:
                alarm_do.append(alarm.document_overlap)
        rows.append(
            ThresholdMetrics(
                fp_per_year=fp,
                threshold=thr,
                n_trials=len(injected),
                n_detected=detected,
                fraction_detected=detected / len(injected),
                mean_days_to_detect=_mean(dtd),
                mean_alarm_hellinger=_mean(alarm_hd),
                mean_alarm_spatial_overlap=_mean(alarm_so),
                mean_alarm_document_overlap=_mean(alarm_do),
            )
        )

    by_day: dict[int, tuple[list[float], list[float], list[float], int]] = {}
    for s in injected:
        for d in s.days:
            if d.event_day is None:
                continue
            hd, so, do, n = by_day.setdefault(d.event_day, ([], [], [], 0))
            if d.hellinger_distance is not None:
                hd.append(d.hellinger_distance)
            if d.spatial_overlap is not None:
                so.append(d.spatial_overlap)
            if d.document_overlap is not None:
                do.append(d.document_overlap)
            by_day[d.event_day] = (hd, so, do, n + 1)
    day_rows = [
        EventDayMetrics(
            event_day=day,
            n_trials=n,
            mean_hellinger_distance=_mean(hd),
            mean_spatial_overlap=_mean(so),
            mean_document_overlap=_mean(do),
        )
        for day, (hd, so, do, n) in sorted(by_day.items())
    ]
    return MetricReport(tuple(rows), tuple(day_rows))


def write_threshold_csv(report: MetricReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fp_per_year", "fraction_detected", "mean_days_to_detect"])
        for row in report.by_threshold:
            mdd = "" if row.mean_days_to_detect is None else repr(row.mean_days_to_detect)
            writer.writerow([repr(float(row.fp_per_year)), repr(row.fraction_detected), mdd])


def write_event_day_csv(report: MetricReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["event_day", "mean_hd", "mean_so", "mean_do"])
        for row in report.by_event_day:
            writer.writerow(
                [
                    row.event_day,
                    "" if row.mean_hellinger_distance is None else repr(row.mean_hellinger_distance),
                    "" if row.mean_spatial_overlap is None else repr(row.mean_spatial_overlap),
                    "" if row.mean_document_overlap is None else repr(row.mean_document_overlap),
                ]
            )
