"""Domain-primitive tests with independent oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geld.errors import (
    DegenerateInstanceError,
    ExhaustedError,
    MetricError,
    RegionPreconditionError,
    TourError,
)
from geld.tsp import (
    CONTINUOUS,
    TSPLIB_ROUNDED,
    RegionAssignment,
    Tour,
    TspInstance,
    assign_regions,
    distance_matrix,
    gap,
    k_nearest_available,
    normalize_coords,
    tour_length,
)

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def naive_cycle_length(coords, order):
    total = 0.0
    for i in range(len(order)):
        a = coords[order[i]]
        b = coords[order[(i + 1) % len(order)]]
        total += float(np.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2))
    return total


class TestNormalize:
    def test_unit_square_unchanged(self):
        np.testing.assert_array_equal(normalize_coords(UNIT_SQUARE), UNIT_SQUARE)

    def test_shift_and_scale(self):
        out = normalize_coords(np.array([[2.0, 2.0], [4.0, 2.0]]))
        np.testing.assert_allclose(out, [[0.0, 0.0], [1.0, 0.0]])

    def test_scalar_divisor_preserves_aspect_ratio(self):
        out = normalize_coords(np.array([[0.0, 0.0], [10.0, 2.0]]))
        np.testing.assert_allclose(out, [[0.0, 0.0], [1.0, 0.2]])

    def test_degenerate_raises(self):
        with pytest.raises(DegenerateInstanceError):
            normalize_coords(np.ones((5, 2)))

    @given(st.integers(0, 2**32 - 1), st.integers(2, 40))
    @settings(max_examples=50, deadline=None)
    def test_idempotent_and_extent(self, seed, n):
        rng = np.random.default_rng(seed)
        coords = rng.uniform(-100, 100, size=(n, 2)) * rng.uniform(0.01, 10)
        if np.allclose(coords, coords[0]):
            return
        once = normalize_coords(coords)
        twice = normalize_coords(once)
        np.testing.assert_allclose(once, twice, atol=1e-12)
        assert once.min() >= 0.0 and once.max() <= 1.0
        spans = once.max(axis=0) - once.min(axis=0)
        assert abs(spans.max() - 1.0) < 1e-12
        assert np.any(np.abs(once.min(axis=0)) < 1e-12)


class TestTourLength:
    def test_unit_square_hull_order(self):
        inst = TspInstance(UNIT_SQUARE)
        assert tour_length(inst, Tour.from_order(inst, [0, 1, 2, 3])) == pytest.approx(4.0)

    def test_triangle_any_order(self):
        inst = TspInstance(np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]]))
        for order in ([0, 1, 2], [1, 0, 2], [2, 1, 0]):
            assert tour_length(inst, Tour.from_order(inst, order)) == pytest.approx(12.0)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(11)
        coords = rng.random((8, 2))
        inst = TspInstance(coords)
        order = rng.permutation(8)
        tour = Tour.from_order(inst, order)
        assert tour.length == pytest.approx(naive_cycle_length(coords, order), abs=1e-12)

    def test_invalid_permutation_raises(self):
        inst = TspInstance(UNIT_SQUARE)
        with pytest.raises(TourError):
            Tour.from_order(inst, [0, 1, 2, 2])

    def test_rounded_metric_uses_nearest_integer_edges(self):
        coords = np.array([[0.0, 0.0], [1.4, 0.0], [1.4, 10.6], [0.0, 10.6]])
        inst = TspInstance(coords, metric_mode=TSPLIB_ROUNDED)
        tour = Tour.from_order(inst, [0, 1, 2, 3])
        # edges 1.4, 10.6, 1.4, 10.6 -> 1 + 11 + 1 + 11
        assert tour.length == 24.0

    def test_cached_length_matches_recomputation(self):
        rng = np.random.default_rng(3)
        inst = TspInstance(rng.random((12, 2)))
        tour = Tour.from_order(inst, rng.permutation(12))
        assert abs(tour.length - tour_length(inst, tour)) < 1e-9

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_rotation_and_reversal_invariance(self, seed):
        rng = np.random.default_rng(seed)
        inst = TspInstance(rng.random((9, 2)))
        order = rng.permutation(9)
        base = Tour.from_order(inst, order).length
        shift = int(rng.integers(0, 9))
        rotated = np.roll(order, shift)
        assert Tour.from_order(inst, rotated).length == pytest.approx(base, abs=1e-9)
        assert Tour.from_order(inst, order[::-1]).length == pytest.approx(base, abs=1e-9)


class TestGap:
    def test_identical_lengths(self):
        assert gap(7.8693, 7.8693) == 0.0

    def test_ten_percent(self):
        assert gap(8.65623, 7.8693) == pytest.approx(10.0, abs=1e-9)

    def test_arithmetic_consistency(self):
        expected = (7.9566 - 7.8693) / 7.8693 * 100.0
        assert gap(7.9566, 7.8693) == pytest.approx(expected, abs=1e-12)
        assert gap(7.9566, 7.8693) == pytest.approx(1.11, abs=5e-3)

    def test_non_positive_reference_raises(self):
        with pytest.raises(MetricError):
            gap(1.0, 0.0)
        with pytest.raises(MetricError):
            gap(1.0, -2.0)

    @given(st.floats(0.1, 1e6), st.floats(0.0, 10.0), st.floats(0.01, 10.0))
    @settings(max_examples=50)
    def test_zero_at_equal_and_strictly_increasing(self, opt, bump_a, bump_b):
        assert gap(opt, opt) == 0.0
        lo, hi = sorted((bump_a, bump_a + bump_b))
        if hi > lo:
            assert gap(opt + hi, opt) > gap(opt + lo, opt)


class TestKNearestAvailable:
    def test_clamps_to_available_count(self):
        rng = np.random.default_rng(0)
        inst = TspInstance(rng.random((8, 2)))
        visited = np.zeros(8, dtype=bool)
        visited[[0, 1, 2]] = True
        out = k_nearest_available(inst, 0, visited, k_m=100)
        assert len(out) == 5
        assert set(out.tolist()) == {3, 4, 5, 6, 7}

    def test_ordering_by_distance(self):
        coords = np.array([[0.0, 0.0], [3.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
        inst = TspInstance(coords)
        visited = np.zeros(4, dtype=bool)
        visited[0] = True
        out = k_nearest_available(inst, 0, visited, k_m=2)
        np.testing.assert_array_equal(out, [2, 3])

    def test_tie_breaks_by_lower_index(self):
        coords = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
        inst = TspInstance(coords)
        visited = np.zeros(4, dtype=bool)
        visited[0] = True
        out = k_nearest_available(inst, 0, visited, k_m=3)
        np.testing.assert_array_equal(out, [1, 2, 3])

    def test_exhausted_raises(self):
        inst = TspInstance(UNIT_SQUARE)
        with pytest.raises(ExhaustedError):
            k_nearest_available(inst, 0, np.ones(4, dtype=bool), k_m=3)

    def test_matches_full_sort_oracle(self):
        rng = np.random.default_rng(42)
        inst = TspInstance(rng.random((200, 2)))
        for _ in range(50):
            anchor = int(rng.integers(0, 200))
            visited = rng.random(200) < rng.uniform(0.1, 0.9)
            visited[anchor] = True
            if visited.all():
                visited[(anchor + 1) % 200] = False
            k_m = int(rng.integers(1, 40))
            got = k_nearest_available(inst, anchor, visited, k_m)
            # oracle: full stable sort on (distance, index) pairs
            d = np.hypot(*(inst.coords - inst.coords[anchor]).T)
            pool = sorted((d[i], i) for i in range(200) if not visited[i])
            expect = [i for _, i in pool[: min(k_m, len(pool))]]
            np.testing.assert_array_equal(got, expect)


class TestRegions:
    def test_single_region(self):
        coords = np.random.default_rng(0).random((20, 2))
        regions = assign_regions(coords, 1, 1)
        assert regions.m == 1
        assert np.all(regions.region_of == 0)
        assert regions.counts[0] == 20

    def test_boundary_clamps_into_last_cell(self):
        regions = assign_regions(np.array([[0.99, 0.99], [1.0, 1.0], [0.0, 0.0]]), 3, 3)
        assert regions.region_of[0] == 8
        assert regions.region_of[1] == 8
        assert regions.region_of[2] == 0

    def test_out_of_square_raises(self):
        with pytest.raises(RegionPreconditionError):
            assign_regions(np.array([[0.5, 1.5], [0.0, 0.0]]), 3, 3)

    def test_counts_match_scan_oracle(self):
        rng = np.random.default_rng(123)
        coords = rng.random((1000, 2))
        regions = assign_regions(coords, 3, 3)
        assert regions.counts.sum() == 1000
        scan = np.zeros(9, dtype=int)
        for x, y in coords:
            row = min(int(y * 3), 2)
            col = min(int(x * 3), 2)
            scan[row * 3 + col] += 1
        np.testing.assert_array_equal(regions.counts, scan)
        for i, (x, y) in enumerate(coords):
            row = min(int(y * 3), 2)
            col = min(int(x * 3), 2)
            assert regions.region_of[i] == row * 3 + col

    @given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(1, 5))
    @settings(max_examples=40, deadline=None)
    def test_ids_always_in_range(self, seed, m_r, m_c):
        coords = np.random.default_rng(seed).random((50, 2))
        regions = assign_regions(coords, m_r, m_c)
        assert regions.region_of.max() < m_r * m_c
        assert regions.counts.sum() == 50

    def test_averaging_matrix_rows(self):
        coords = np.array([[0.1, 0.1], [0.2, 0.2], [0.9, 0.9]])
        regions = assign_regions(coords, 2, 2)
        avg = regions.averaging_matrix()
        np.testing.assert_allclose(avg[0], [0.5, 0.5, 0.0])
        np.testing.assert_allclose(avg[3], [0.0, 0.0, 1.0])
        np.testing.assert_allclose(avg[1], 0.0)
        np.testing.assert_allclose(avg[2], 0.0)


class TestDistanceMatrix:
    def test_single_node(self):
        np.testing.assert_array_equal(distance_matrix(np.array([[0.3, 0.4]])), [[0.0]])

    def test_two_nodes(self):
        out = distance_matrix(np.array([[0.0, 0.0], [1.0, 0.0]]))
        np.testing.assert_array_equal(out, [[0.0, 1.0], [1.0, 0.0]])

    def test_subset_matches_pairwise_oracle(self):
        rng = np.random.default_rng(8)
        coords = rng.random((20, 2))
        subset = rng.choice(20, size=6, replace=False)
        out = distance_matrix(coords, subset)
        for i in range(6):
            for j in range(6):
                a, b = coords[subset[i]], coords[subset[j]]
                expect = np.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2)
                assert out[i, j] == pytest.approx(expect, abs=1e-12)
        np.testing.assert_allclose(out, out.T)
        np.testing.assert_array_equal(np.diag(out), np.zeros(6))


class TestInstanceValidation:
    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            TspInstance(np.array([[0.0, 0.0], [np.nan, 1.0], [1.0, 1.0]]))

    def test_rejects_coincident_points(self):
        with pytest.raises(DegenerateInstanceError):
            TspInstance(np.zeros((4, 2)))

    def test_instances_are_immutable(self):
        inst = TspInstance(UNIT_SQUARE.copy())
        with pytest.raises(ValueError):
            inst.coords[0, 0] = 5.0
