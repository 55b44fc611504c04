"""Semi-synthetic detection trials: hold out a category, inject it as a
spatially localized ramping event, and run the detection pipeline day by day."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import date as Date, timedelta
from typing import Sequence

import numpy as np

from .assign import assign_corpus_window
from .contrastive import combine_topics, refit_foreground
from .corpus import Document, LocationTable, RawRecord, Vocabulary, build_vocabulary, encode_records, tokenize
from .lda import TopicSet, fit_lda
from .scan import DetectionResult, build_baseline_cube, build_count_cube, scan_all

logger = logging.getLogger(__name__)

# Seed-stream tags so that the background fit, each day's window fit, and the
# injection draw from unrelated deterministic streams.
_BACKGROUND_STAGE = 0
_WINDOW_STAGE = 1


@dataclass(frozen=True)
class InjectionSpec:
    """A linearly ramping event: expected slope*d injections on event day d."""

    start_day: int
    center_location: int
    duration_days: int = 30
    region_size: int = 30  # number of affected locations, center included
    daily_rate_slope: float = 20.0
    seed: int = 0
    category_label: str | None = None

    def __post_init__(self):
        if self.duration_days < 1:
            raise ValueError("duration_days must be >= 1")
        if self.daily_rate_slope <= 0:
            raise ValueError("daily_rate_slope must be positive")
        if self.region_size < 1:
            raise ValueError("region_size must be >= 1")

    @property
    def end_day(self) -> int:
        return self.start_day + self.duration_days - 1


@dataclass(frozen=True)
class EventGroundTruth:
    affected_locations: tuple[int, ...]
    start_day: int
    end_day: int
    injected_ids_by_day: dict[int, tuple[str, ...]]
    injected_records: tuple[RawRecord, ...]

    @property
    def all_injected_ids(self) -> frozenset[str]:
        return frozenset(r.id for r in self.injected_records)


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs of the day-by-day detection pipeline; defaults follow the standard setup."""

    k: int = 25
    k_prime: int = 25
    alpha: float | None = None  # None -> 1 / (k + k_prime)
    beta: float | None = None  # None -> 1 / |V|
    window_days: int = 3  # X, topic-fitting window
    w_max: int = 3  # largest scanned temporal window
    baseline_days: int = 30
    n_max: int = 30
    b_min: float = 0.5
    min_count: int = 1
    background_sweeps: int = 500
    window_sweeps: int = 500
    refit_sweeps: int = 500
    assign_max_iters: int = 100
    assign_tol: float = 1e-6
    contrastive: bool = True  # False: plain-LDA ablation, skip the refit
    n_jobs: int = 1
    seed: int = 0


@dataclass(frozen=True)
class DayRecord:
    """One detection day: the top-ranked result plus ground truth for scoring."""

    day: int
    event_day: int | None
    result: DetectionResult
    event_active: bool
    true_locations: tuple[int, ...]
    detected_locations: tuple[int, ...]
    injected_window_ids: frozenset[str]
    detected_topic_window_ids: frozenset[str]
    detected_phi: np.ndarray


@dataclass(frozen=True)
class TrialRecord:
    days: tuple[DayRecord, ...]
    event_start: int | None
    event_end: int | None
    true_locations: tuple[int, ...]
    injected_doc_ids: frozenset[str]
    injected_distribution: np.ndarray | None  # empirical over the vocabulary
    vocabulary: Vocabulary


def hold_out_category(
    records: Sequence[RawRecord],
    label: str,
    background_end: Date,
) -> tuple[list[RawRecord], list[RawRecord], list[RawRecord]]:
    """Split out every record carrying ``label`` and partition the rest by date.

    Returns (background, foreground, heldout); background records predate
    ``background_end``. The three partitions are disjoint and jointly
    exhaustive.
    """
    heldout = [r for r in records if r.label == label]
    if not heldout:
        raise ValueError(f"unknown label {label!r}: no records carry it")
    rest = [r for r in records if r.label != label]
    background = [r for r in rest if r.date < background_end]
    foreground = [r for r in rest if r.date >= background_end]
    return background, foreground, heldout


def inject_event(
    foreground_records: Sequence[RawRecord],
    heldout_records: Sequence[RawRecord],
    spec: InjectionSpec,
    locations: LocationTable,
    *,
    epoch: Date,
    id_prefix: str = "inj",
) -> tuple[list[RawRecord], EventGroundTruth]:
    """Append event documents to the foreground stream.

    On event day d (1-based), Poisson(slope * d) documents are sampled
    uniformly with replacement from the held-out pool; each gets a fresh
    unique id and a location drawn uniformly from the affected circular
    region.
    """
    if not heldout_records:
        raise ValueError("held-out pool is empty")
    if spec.region_size > len(locations):
        raise ValueError("region_size exceeds the number of locations")
    if not 0 <= spec.center_location < len(locations):
        raise ValueError("center_location out of range")
    region = tuple(
        int(v) for v in locations.neighbor_order()[spec.center_location, : spec.region_size]
    )
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    injected: list[RawRecord] = []
    ids_by_day: dict[int, tuple[str, ...]] = {}
    for d in range(1, spec.duration_days + 1):
        day = spec.start_day + d - 1
        n = int(rng.poisson(spec.daily_rate_slope * d))
        picks = rng.integers(0, len(heldout_records), size=n)
        locs = rng.integers(0, spec.region_size, size=n)
        day_ids = []
        for j in range(n):
            src = heldout_records[picks[j]]
            rec = RawRecord(
                id=f"{id_prefix}-{day}-{j}",
                date=epoch + timedelta(days=day),
                location_id=locations.ids[region[locs[j]]],
                text=src.text,
                label=src.label,
            )
            injected.append(rec)
            day_ids.append(rec.id)
        ids_by_day[day] = tuple(day_ids)
    truth = EventGroundTruth(
        affected_locations=region,
        start_day=spec.start_day,
        end_day=spec.end_day,
        injected_ids_by_day=ids_by_day,
        injected_records=tuple(injected),
    )
    return list(foreground_records) + injected, truth


@dataclass(frozen=True)
class BackgroundModel:
    """Vocabulary plus frozen topics learned once from the background partition."""

    vocabulary: Vocabulary
    topics: TopicSet
    epoch: Date


def _partition(records, background_end: Date, label: str | None):
    if label is not None:
        return hold_out_category(records, label, background_end)
    background = [r for r in records if r.date < background_end]
    foreground = [r for r in records if r.date >= background_end]
    return background, foreground, []


def prepare_background(
    records: Sequence[RawRecord],
    locations: LocationTable,
    config: PipelineConfig,
    *,
    background_end: Date,
    holdout_label: str | None = None,
) -> BackgroundModel:
    """Build the vocabulary from the background partition and fit the frozen topics."""
    if not records:
        raise ValueError("no records")
    epoch = min(r.date for r in records)
    background, _, _ = _partition(records, background_end, holdout_label)
    if not background:
        raise ValueError("background partition is empty")
    vocabulary = build_vocabulary((tokenize(r.text) for r in background), config.min_count)
    docs, _, _ = encode_records(background, vocabulary, locations, epoch)
    topics, _ = fit_lda(
        docs,
        config.k,
        len(vocabulary),
        beta=config.beta,
        sweeps=config.background_sweeps,
        seed=np.random.SeedSequence([config.seed, _BACKGROUND_STAGE]),
    )
    return BackgroundModel(vocabulary, topics, epoch)


def fit_day_topics(window_docs, background: BackgroundModel, config: PipelineConfig, day: int) -> TopicSet:
    """Window LDA plus (unless ablated) the contrastive refit, seeded per day."""
    ss = np.random.SeedSequence([config.seed, _WINDOW_STAGE, day])
    lda_seed, refit_seed = ss.spawn(2)
    fg_init, _ = fit_lda(
        window_docs,
        config.k_prime,
        len(background.vocabulary),
        beta=config.beta,
        sweeps=config.window_sweeps,
        seed=lda_seed,
    )
    if not config.contrastive:
        return combine_topics(background.topics, fg_init)
    return refit_foreground(
        window_docs,
        background.topics,
        fg_init,
        sweeps=config.refit_sweeps,
        seed=refit_seed,
        alpha=config.alpha,
        beta=config.beta,
    )


def _empirical_distribution(documents: Sequence[Document], vocab_size: int) -> np.ndarray | None:
    counts = np.zeros(vocab_size, dtype=np.float64)
    for doc in documents:
        for t in doc.tokens:
            counts[t] += 1
    total = counts.sum()
    if total == 0:
        return None
    return counts / total


def run_trial(
    records: Sequence[RawRecord],
    locations: LocationTable,
    config: PipelineConfig,
    *,
    background_end: Date,
    injection: InjectionSpec | None = None,
    heldout_records: Sequence[RawRecord] | None = None,
    holdout_label: str | None = None,
    detect_days: Sequence[int] | None = None,
    background: BackgroundModel | None = None,
    trial_id: str = "trial",
) -> TrialRecord:
    """Run the full pipeline across a trial's detection days.

    Null trials pass ``injection=None`` and explicit ``detect_days``; they
    share every pipeline seed with the corresponding injected trial, so the
    two runs differ only in the injected documents.
    """
    if not records:
        raise ValueError("no records")
    label = holdout_label if holdout_label is not None else (
        injection.category_label if injection is not None else None
    )
    epoch = min(r.date for r in records)
    bg_records, stream_records, heldout_from_label = _partition(records, background_end, label)
    pool = list(heldout_records) if heldout_records is not None else heldout_from_label

    if background is None:
        background = prepare_background(
            records, locations, config, background_end=background_end, holdout_label=label
        )
    vocabulary = background.vocabulary

    truth: EventGroundTruth | None = None
    if injection is not None:
        if not pool:
            raise ValueError("injection requested but the held-out pool is empty")
        stream_records, truth = inject_event(
            stream_records, pool, injection, locations, epoch=epoch, id_prefix=f"{trial_id}-inj"
        )

    if detect_days is None:
        if injection is None:
            raise ValueError("null trials must specify detect_days")
        detect_days = range(injection.start_day, injection.end_day + 1)

    # Assignment reaches back through the baseline span, so the assignment
    # pool includes the background-period documents as well.
    pool_docs, _, _ = encode_records(list(bg_records) + list(stream_records), vocabulary, locations, epoch)
    by_day: dict[int, list[Document]] = {}
    for doc in pool_docs:
        by_day.setdefault(doc.day_index, []).append(doc)

    injected_ids_by_day = truth.injected_ids_by_day if truth is not None else {}
    k = config.k
    day_records: list[DayRecord] = []
    for day in detect_days:
        window_docs = [
            doc
            for d in range(day - config.window_days + 1, day + 1)
            for doc in by_day.get(d, [])
        ]
        topics = fit_day_topics(window_docs, background, config, day)
        span_start = day - (config.baseline_days + config.w_max - 1)
        if span_start < 0:
            raise ValueError(f"detection day {day} lacks {config.baseline_days}-day history")
        assigned = assign_corpus_window(
            pool_docs,
            topics,
            day,
            baseline_days=config.baseline_days,
            window_days=config.w_max,
            alpha=config.alpha,
            max_iters=config.assign_max_iters,
            tol=config.assign_tol,
            n_jobs=config.n_jobs,
        )
        cube = build_count_cube(assigned, config.k_prime, (span_start, day), len(locations))
        baselines = build_baseline_cube(cube, config.baseline_days)
        results = scan_all(
            cube,
            baselines,
            locations.neighbor_order(),
            config.n_max,
            config.w_max,
            day,
            b_min=config.b_min,
            limit=1,
        )
        top = results[0]

        scan_window = range(day - config.w_max + 1, day + 1)
        injected_window = frozenset(
            rid for d in scan_window for rid in injected_ids_by_day.get(d, ())
        )
        detected_topic = k + top.topic
        detected_window_ids = frozenset(
            a.document.id
            for a in assigned
            if a.topic_index == detected_topic and a.document.day_index in scan_window
        )
        active = truth is not None and truth.start_day <= day <= truth.end_day
        day_records.append(
            DayRecord(
                day=day,
                event_day=day - truth.start_day + 1 if active else None,
                result=top,
                event_active=active,
                true_locations=truth.affected_locations if active else (),
                detected_locations=top.region.locations,
                injected_window_ids=injected_window,
                detected_topic_window_ids=detected_window_ids,
                detected_phi=topics.phi[detected_topic].copy(),
            )
        )

    injected_distribution = None
    injected_ids: frozenset[str] = frozenset()
    if truth is not None:
        injected_docs = [d for d in pool_docs if d.id in truth.all_injected_ids]
        injected_distribution = _empirical_distribution(injected_docs, len(vocabulary))
        if injected_distribution is None:
            logger.warning("all injected tokens fell outside the vocabulary")
        injected_ids = truth.all_injected_ids

    return TrialRecord(
        days=tuple(day_records),
        event_start=truth.start_day if truth is not None else None,
        event_end=truth.end_day if truth is not None else None,
        true_locations=truth.affected_locations if truth is not None else (),
        injected_doc_ids=injected_ids,
        injected_distribution=injected_distribution,
        vocabulary=vocabulary,
    )
