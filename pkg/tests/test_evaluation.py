import math

import numpy as np
import pytest

from semscan.evaluation import (
    DaySummary,
    TrialSummary,
    calibrate_threshold,
    detection_metrics,
    hellinger,
    jaccard_overlap,
    null_day_scores,
    write_event_day_csv,
    write_threshold_csv,
)


class TestHellinger:
    def test_identical_distributions(self):
        p = np.array([0.2, 0.3, 0.5])
        assert hellinger(p, p) == 0.0

    def test_disjoint_supports(self):
        assert hellinger([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0, abs=1e-12)

    def test_hand_value(self):
        # (1/sqrt 2) * sqrt((1 - sqrt .5)^2 + (0 - sqrt .5)^2) = sqrt(1 - sqrt .5)
        got = hellinger([1.0, 0.0], [0.5, 0.5])
        assert got == pytest.approx(math.sqrt(1 - math.sqrt(0.5)), abs=1e-12)
        assert got == pytest.approx(0.5411961001461971, abs=1e-9)

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError, match="sum"):
            hellinger([0.5, 0.4], [0.5, 0.5])

    def test_rejects_negative(self):
        with pytest.raises(ValueError, match="negative"):
            hellinger([1.2, -0.2], [0.5, 0.5])

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            hellinger([1.0], [0.5, 0.5])

    def test_symmetry_bounds_triangle(self, rng):
        for _ in range(50):
            p, q, r = rng.dirichlet(np.ones(6), size=3)
            assert hellinger(p, q) == pytest.approx(hellinger(q, p), abs=1e-12)
            assert 0.0 <= hellinger(p, q) <= 1.0
            assert hellinger(p, r) <= hellinger(p, q) + hellinger(q, r) + 1e-12


class TestJaccard:
    def test_equal_nonempty(self):
        assert jaccard_overlap({1, 2}, {1, 2}) == 1.0

    def test_disjoint(self):
        assert jaccard_overlap({1}, {2}) == 0.0

    def test_partial(self):
        assert jaccard_overlap({"a", "b"}, {"b", "c"}) == pytest.approx(1 / 3)

    def test_both_empty(self):
        assert jaccard_overlap(set(), set()) == 1.0

    def test_symmetric_bounded(self, rng):
        for _ in range(30):
            a = set(rng.integers(0, 12, size=6).tolist())
            b = set(rng.integers(0, 12, size=6).tolist())
            assert jaccard_overlap(a, b) == jaccard_overlap(b, a)
            assert 0.0 <= jaccard_overlap(a, b) <= 1.0


class TestCalibrateThreshold:
    def test_all_zero_scores(self):
        assert calibrate_threshold([0.0] * 100, 12.0) == 0.0

    def test_higher_interpolation_hand_case(self):
        scores = list(range(1, 101))
        # target chosen so the level is exactly the 95th percentile
        target = 0.05 * 365.25
        assert calibrate_threshold(scores, target) == 96.0

    def test_requires_enough_days(self):
        with pytest.raises(ValueError, match="60"):
            calibrate_threshold([0.0] * 59, 12.0)

    def test_realized_fp_rate_at_most_target(self, rng):
        scores = rng.gamma(2.0, 1.5, size=4000)
        fit, holdout = scores[:2000], scores[2000:]
        for target in (52.0, 12.0, 6.0):
            thr = calibrate_threshold(fit, target)
            realized = float((holdout > thr).mean()) * 365.25
            # binomial noise: 3 sigma on 2000 held-out days
            sigma = 365.25 * math.sqrt(target / 365.25 / 2000)
            assert realized <= target + 3 * sigma

    def test_threshold_monotone_in_target(self, rng):
        scores = rng.gamma(2.0, 1.5, size=500)
        targets = [52.0, 26.0, 12.0, 6.0, 2.0, 1.0]
        thresholds = [calibrate_threshold(scores, t) for t in targets]
        assert all(a <= b for a, b in zip(thresholds, thresholds[1:]))


def _trial(event_start, event_end, day_scores, hd=0.3, so=0.6, do=0.5):
    days = []
    for day, score in day_scores:
        active = event_start is not None and event_start <= day <= event_end
        days.append(
            DaySummary(
                day=day,
                event_day=day - event_start + 1 if active else None,
                score=score,
                hellinger_distance=hd if active else None,
                spatial_overlap=so if active else None,
                document_overlap=do if active else None,
            )
        )
    return TrialSummary(event_start, event_end, tuple(days))


class TestDetectionMetrics:
    def test_no_alarm_counts_undetected(self):
        trials = [_trial(10, 12, [(10, 0.0), (11, 0.0), (12, 0.0)])]
        report = detection_metrics(trials, {12.0: 1.0})
        row = report.by_threshold[0]
        assert row.fraction_detected == 0.0
        assert row.mean_days_to_detect is None

    def test_alarm_on_first_event_day(self):
        trials = [_trial(10, 12, [(10, 5.0), (11, 0.0), (12, 0.0)])]
        row = detection_metrics(trials, {12.0: 1.0}).by_threshold[0]
        assert row.fraction_detected == 1.0
        assert row.mean_days_to_detect == 1.0

    def test_perfect_detector_identities(self):
        trials = [_trial(10, 11, [(10, 9.0), (11, 9.0)], hd=0.0, so=1.0, do=1.0)]
        report = detection_metrics(trials, {12.0: 1.0})
        row = report.by_threshold[0]
        assert row.mean_alarm_hellinger == 0.0
        assert row.mean_alarm_spatial_overlap == 1.0
        assert row.mean_alarm_document_overlap == 1.0
        for day_row in report.by_event_day:
            assert day_row.mean_hellinger_distance == 0.0
            assert day_row.mean_spatial_overlap == 1.0
            assert day_row.mean_document_overlap == 1.0

    def test_alarm_strictly_above_threshold(self):
        trials = [_trial(10, 10, [(10, 1.0)])]
        assert detection_metrics(trials, {12.0: 1.0}).by_threshold[0].fraction_detected == 0.0
        assert detection_metrics(trials, {12.0: 0.99}).by_threshold[0].fraction_detected == 1.0

    def test_fraction_monotone_in_threshold(self, rng):
        trials = [
            _trial(10, 19, [(d, float(rng.gamma(2.0, 2.0))) for d in range(10, 20)])
            for _ in range(20)
        ]
        thresholds = {52.0: 1.0, 12.0: 3.0, 1.0: 8.0}
        rows = detection_metrics(trials, thresholds).by_threshold
        fracs = [r.fraction_detected for r in rows]
        assert fracs[0] >= fracs[1] >= fracs[2]

    def test_null_scores_pooled(self):
        nulls = [_trial(None, None, [(d, float(d)) for d in range(5)]) for _ in range(2)]
        injected = [_trial(2, 3, [(2, 4.0), (3, 1.0)])]
        scores = null_day_scores(nulls + injected)
        assert len(scores) == 10

    def test_requires_injected_trials(self):
        with pytest.raises(ValueError, match="no injected"):
            detection_metrics([_trial(None, None, [(0, 0.0)])], {12.0: 1.0})

    def test_event_day_table_counts_trials(self):
        trials = [
            _trial(10, 12, [(10, 1.0), (11, 1.0), (12, 1.0)]),
            _trial(20, 22, [(20, 1.0), (21, 1.0)]),  # day 3 missing for this trial
        ]
        report = detection_metrics(trials, {})
        by_day = {r.event_day: r.n_trials for r in report.by_event_day}
        assert by_day == {1: 2, 2: 2, 3: 1}


class TestMetricCsv:
    def test_written_columns(self, tmp_path):
        trials = [_trial(10, 11, [(10, 5.0), (11, 0.5)])]
        report = detection_metrics(trials, {12.0: 1.0, 1.0: 6.0})
        fp = tmp_path / "fp.csv"
        day = tmp_path / "day.csv"
        write_threshold_csv(report, fp)
        write_event_day_csv(report, day)
        fp_lines = fp.read_text().strip().splitlines()
        day_lines = day.read_text().strip().splitlines()
        assert fp_lines[0] == "fp_per_year,fraction_detected,mean_days_to_detect"
        assert day_lines[0] == "event_day,mean_hd,mean_so,mean_do"
        assert len(fp_lines) == 3
        assert len(day_lines) == 3
