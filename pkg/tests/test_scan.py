import math

import numpy as np
import pytest

from semscan.assign import AssignedDocument
from semscan.corpus import Document
from semscan.scan import (
    BaselineCube,
    CountCube,
    build_baseline_cube,
    build_count_cube,
    ebp_score,
    randomization_test,
    scan_all,
    top_score,
)


# --- independent brute-force oracle ------------------------------------------
# Everything below is computed from first principles: its own neighbor sort,
# its own flooring and scoring via math.log, its own tie-break ordering.


def oracle_neighbor_order(coords):
    n = len(coords)
    out = []
    for i in range(n):
        def key(j, i=i):
            dx = coords[j][0] - coords[i][0]
            dy = coords[j][1] - coords[i][1]
            return (j != i, dx * dx + dy * dy, j)

        out.append(sorted(range(n), key=key))
    return out


def oracle_scan(counts, baselines, coords, n_max, w_max, b_min):
    """Quadruple loop over (center, n, W, topic); returns the fully ranked list."""
    n_loc = len(counts)
    n_topic = len(counts[0])
    n_days = len(counts[0][0])
    order = oracle_neighbor_order(coords)
    entries = []
    for center in range(n_loc):
        for n in range(1, n_max + 1):
            locs = order[center][: n + 1]
            for w in range(1, w_max + 1):
                days = range(n_days - w, n_days)
                for k in range(n_topic):
                    c = sum(counts[i][k][t] for i in locs for t in days)
                    b = math.fsum(baselines[i][k][t] for i in locs for t in days)
                    b = max(b, b_min)
                    if c > b:
                        score = c * math.log(c / b) + b - c
                    else:
                        score = 0.0
                    entries.append((score, w, n, center, k, c, b))
    entries.sort(key=lambda e: (-e[0], e[1], e[2], e[3], e[4]))
    return entries


def random_instance(rng):
    """Random small scan instance.

    Baselines are dyadic (multiples of 1/8) so that regional aggregates are
    exact in float64 regardless of summation order; mathematically tied
    regions then tie exactly in both the oracle and the implementation,
    which makes the full rank order, tie-breaks included, well defined.
    """
    n_loc = int(rng.integers(2, 7))
    n_topic = int(rng.integers(1, 4))
    w_max = int(rng.integers(1, 3))
    n_max = int(rng.integers(1, min(4, n_loc)))
    n_days = w_max + int(rng.integers(0, 3))
    coords = rng.integers(0, 4, size=(n_loc, 2)).astype(float)  # integer grid forces ties
    counts = rng.poisson(1.5, size=(n_loc, n_topic, n_days)).astype(np.int64)
    baselines = rng.integers(0, 48, size=(n_loc, n_topic, n_days)).astype(np.float64) / 8.0
    return n_loc, n_topic, n_days, w_max, n_max, coords, counts, baselines


def package_neighbor_order(coords):
    from semscan.corpus import LocationTable

    table = LocationTable([f"l{i}" for i in range(len(coords))], coords)
    return table.neighbor_order()


def as_cubes(counts, baselines, start_day=0):
    count_cube = CountCube(counts, start_day)
    baseline_cube = BaselineCube(baselines, start_day, baseline_days=0)
    return count_cube, baseline_cube


class TestEbpScore:
    def test_equal_is_zero(self):
        assert ebp_score(10, 10) == 0.0

    def test_below_baseline_is_zero(self):
        assert ebp_score(5, 10) == 0.0

    def test_hand_value(self):
        assert ebp_score(20, 10) == pytest.approx(20 * math.log(2) + 10 - 20, abs=1e-12)
        assert ebp_score(20, 10) == pytest.approx(3.8629436111989063, abs=1e-9)

    def test_zero_baseline_with_count_rejected(self):
        with pytest.raises(ValueError, match="floor"):
            ebp_score(1.0, 0.0)

    def test_zero_zero_is_zero(self):
        assert ebp_score(0.0, 0.0) == 0.0

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            ebp_score(-1.0, 2.0)
        with pytest.raises(ValueError):
            ebp_score(1.0, float("nan"))

    def test_random_c_below_b_always_zero(self, rng):
        for _ in range(1000):
            b = float(rng.uniform(0.01, 50))
            c = float(rng.uniform(0, b))
            assert ebp_score(c, b) == 0.0

    def test_monotone_in_count_and_baseline(self):
        assert ebp_score(30, 10) > ebp_score(20, 10)
        assert ebp_score(20, 5) > ebp_score(20, 10)


class TestCountCube:
    def _assigned(self, day, loc, fg_index, doc_id="x"):
        doc = Document(doc_id, day, loc, (0,))
        theta = np.zeros(3)
        if fg_index is None:
            return AssignedDocument(doc, 0, theta, False, None)
        return AssignedDocument(doc, 1 + fg_index, theta, True, fg_index)

    def test_no_foreground_documents(self):
        cube = build_count_cube([self._assigned(0, 0, None)], 2, (0, 3), 4)
        assert cube.counts.sum() == 0
        assert cube.counts.shape == (4, 2, 4)

    def test_two_documents_same_cell(self):
        docs = [self._assigned(2, 1, 0, "a"), self._assigned(2, 1, 0, "b")]
        cube = build_count_cube(docs, 2, (0, 3), 4)
        assert cube.counts[1, 0, 2] == 2
        assert cube.counts.sum() == 2

    def test_background_assignments_excluded(self):
        docs = [self._assigned(1, 0, 0), self._assigned(1, 0, None), self._assigned(2, 3, 1)]
        cube = build_count_cube(docs, 2, (0, 3), 4)
        assert cube.counts.sum() == 2


class TestBaselineCube:
    def test_constant_history(self):
        counts = np.full((1, 1, 31), 2, dtype=np.int64)
        b = build_baseline_cube(CountCube(counts, 0), 30)
        assert b.baselines[0, 0, 30] == pytest.approx(2.0)
        assert np.isnan(b.baselines[0, 0, 29])

    def test_single_spike(self):
        counts = np.zeros((1, 1, 31), dtype=np.int64)
        counts[0, 0, 4] = 3
        b = build_baseline_cube(CountCube(counts, 0), 30)
        assert b.baselines[0, 0, 30] == pytest.approx(0.1)

    def test_all_zero(self):
        counts = np.zeros((2, 2, 33), dtype=np.int64)
        b = build_baseline_cube(CountCube(counts, 0), 30)
        assert np.all(b.baselines[:, :, 30:] == 0.0)

    def test_insufficient_history_names_earliest_day(self):
        counts = np.zeros((1, 1, 30), dtype=np.int64)
        with pytest.raises(ValueError, match="earliest valid detection day is 40"):
            build_baseline_cube(CountCube(counts, 10), 30)

    def test_windows_use_trailing_days_only(self, rng):
        counts = rng.poisson(3, size=(2, 1, 35)).astype(np.int64)
        b = build_baseline_cube(CountCube(counts, 0), 30)
        for t in (30, 32, 34):
            expect = counts[:, :, t - 30 : t].mean(axis=2)
            assert np.allclose(b.baselines[:, :, t], expect)


class TestScanAll:
    def test_all_zero_counts_top_score_zero(self):
        counts = np.zeros((3, 2, 2), dtype=np.int64)
        baselines = np.full((3, 2, 2), 1.0)
        cc, bc = as_cubes(counts, baselines)
        order = package_neighbor_order([(0, 0), (1, 0), (2, 0)])
        results = scan_all(cc, bc, order, 2, 2, 1, b_min=0.5)
        assert results[0].score == 0.0
        assert len(results) == 3 * 2 * 2 * 2

    def test_single_spike_found_with_smallest_region(self):
        # 5 locations in a line, 2 topics, W_max = 2; one hot cell on the last day
        counts = np.zeros((5, 2, 2), dtype=np.int64)
        counts[2, 1, 1] = 10
        baselines = np.full((5, 2, 2), 0.1)
        cc, bc = as_cubes(counts, baselines)
        coords = [(float(i), 0.0) for i in range(5)]
        order = package_neighbor_order(coords)
        results = scan_all(cc, bc, order, 3, 2, 1, b_min=0.5)
        best = results[0]
        assert best.region.center == 2
        assert best.region.n_neighbors == 1
        assert best.region.duration == 1
        assert best.topic == 1
        assert best.count == 10
        assert best.baseline == 0.5  # floored from 0.2
        assert best.score == pytest.approx(10 * math.log(10 / 0.5) + 0.5 - 10)

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(99)
        for trial in range(100):
            n_loc, n_topic, n_days, w_max, n_max, coords, counts, baselines = random_instance(rng)
            cc, bc = as_cubes(counts, baselines)
            order = package_neighbor_order(coords)
            got = scan_all(cc, bc, order, n_max, w_max, n_days - 1, b_min=0.5)
            want = oracle_scan(counts.tolist(), baselines.tolist(), coords.tolist(), n_max, w_max, 0.5)
            assert len(got) == len(want)
            for g, w in zip(got, want):
                score, W, n, center, topic, c, b = w
                assert (g.region.duration, g.region.n_neighbors, g.region.center, g.topic) == (
                    W,
                    n,
                    center,
                    topic,
                ), f"trial {trial} rank order diverged"
                assert g.score == pytest.approx(score, abs=1e-9)
                assert g.count == pytest.approx(c)
                assert g.baseline == pytest.approx(b, abs=1e-12)

    def test_topic_label_permutation_equivariance(self, rng):
        counts = rng.poisson(2, size=(4, 3, 3)).astype(np.int64)
        baselines = rng.gamma(2.0, 1.0, size=(4, 3, 3))
        coords = rng.normal(size=(4, 2))
        order = package_neighbor_order(coords)
        perm = np.array([2, 0, 1])
        cc1, bc1 = as_cubes(counts, baselines)
        cc2, bc2 = as_cubes(counts[:, perm, :], baselines[:, perm, :])
        r1 = scan_all(cc1, bc1, order, 2, 2, 2)
        r2 = scan_all(cc2, bc2, order, 2, 2, 2)
        key1 = sorted((r.score, r.region.center, r.region.n_neighbors, r.region.duration, int(np.argmax(perm == r.topic))) for r in r1)
        key2 = sorted((r.score, r.region.center, r.region.n_neighbors, r.region.duration, r.topic) for r in r2)
        for a, b in zip(key1, key2):
            assert a[1:] == b[1:]
            assert a[0] == pytest.approx(b[0], abs=1e-12)

    def test_adding_counts_in_top_region_never_lowers_top_score(self, rng):
        counts = rng.poisson(2, size=(5, 2, 3)).astype(np.int64)
        baselines = rng.gamma(1.5, 1.0, size=(5, 2, 3))
        coords = rng.normal(size=(5, 2))
        order = package_neighbor_order(coords)
        cc, bc = as_cubes(counts, baselines)
        best = scan_all(cc, bc, order, 3, 2, 2)[0]
        before = best.score
        bumped = counts.copy()
        bumped[best.region.locations[0], best.topic, -1] += 3
        cc2 = CountCube(bumped, 0)
        after = scan_all(cc2, bc, order, 3, 2, 2)[0].score
        assert after >= before

    def test_detection_day_must_match_cube(self):
        counts = np.zeros((2, 1, 2), dtype=np.int64)
        baselines = np.ones((2, 1, 2))
        cc, bc = as_cubes(counts, baselines)
        order = package_neighbor_order([(0, 0), (1, 0)])
        with pytest.raises(ValueError, match="last day"):
            scan_all(cc, bc, order, 1, 1, 5)

    def test_limit_returns_prefix(self, rng):
        counts = rng.poisson(2, size=(4, 2, 2)).astype(np.int64)
        baselines = rng.gamma(2.0, 1.0, size=(4, 2, 2))
        coords = rng.normal(size=(4, 2))
        order = package_neighbor_order(coords)
        cc, bc = as_cubes(counts, baselines)
        full = scan_all(cc, bc, order, 2, 2, 1)
        head = scan_all(cc, bc, order, 2, 2, 1, limit=5)
        assert [(r.score, r.region.center) for r in head] == [(r.score, r.region.center) for r in full[:5]]

    def test_top_score_agrees_with_ranked_list(self, rng):
        counts = rng.poisson(2, size=(4, 2, 2)).astype(np.int64)
        baselines = rng.gamma(2.0, 1.0, size=(4, 2, 2))
        coords = rng.normal(size=(4, 2))
        order = package_neighbor_order(coords)
        cc, bc = as_cubes(counts, baselines)
        assert top_score(cc, bc, order, 2, 2, 1) == scan_all(cc, bc, order, 2, 2, 1)[0].score


class TestRandomizationTest:
    def _setup(self, rng, n_loc=4, n_topic=2, w_max=2):
        baselines = np.full((n_loc, n_topic, w_max), 3.0)
        coords = rng.normal(size=(n_loc, 2))
        order = package_neighbor_order(coords)
        return BaselineCube(baselines, 0, baseline_days=0), order

    def test_observed_zero_gives_p_one(self, rng):
        bc, order = self._setup(rng)
        p = randomization_test(0.0, bc, order, 2, 2, num_replicas=20, seed=1)
        assert p == 1.0

    def test_huge_observed_gives_lower_bound(self, rng):
        bc, order = self._setup(rng)
        p = randomization_test(1e9, bc, order, 2, 2, num_replicas=19, seed=1)
        assert p == pytest.approx(1 / 20)

    def test_deterministic(self, rng):
        bc, order = self._setup(rng)
        p1 = randomization_test(2.0, bc, order, 2, 2, num_replicas=50, seed=7)
        p2 = randomization_test(2.0, bc, order, 2, 2, num_replicas=50, seed=7)
        assert p1 == p2
