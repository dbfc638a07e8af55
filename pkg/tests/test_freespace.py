import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import ndimage

from ogm_freespace.freespace import (
    VehicleCellOccupied, binarize_hysteresis, border_targets, bresenham_first_occupied, disc,
    cast_rays, edge_index_grid, insight_edges, opening, settle_hits,
)
from ogm_freespace.raster import bresenham
from oracles import dense_line_cells, flood_hysteresis, point_segment_distance, winding_number

prob_maps = arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 12)),
                   elements=st.sampled_from([0.1, 0.3, 0.4, 0.45, 0.49, 0.5, 0.6, 0.9]))


def random_free(rng, size=64):
    occ = rng.random((size, size)) < rng.uniform(0.0, 0.03)
    grow = int(rng.integers(0, 3))
    if grow and occ.any():
        occ = ndimage.binary_dilation(occ, iterations=grow)
    return ~occ


class TestHysteresis:
    def test_uniform_free(self):
        assert binarize_hysteresis(np.full((4, 5), 0.2)).all()

    def test_uniform_unknown_is_not_free(self):
        assert not binarize_hysteresis(np.full((4, 5), 0.5)).any()

    def test_weak_without_seed(self):
        prob = np.full((5, 5), 0.45)
        assert not binarize_hysteresis(prob).any()
        prob[0, 0] = 0.1
        assert binarize_hysteresis(prob).all()

    def test_diagonal_link(self):
        prob = np.full((3, 3), 0.9)
        prob[0, 0], prob[1, 1], prob[2, 2] = 0.1, 0.45, 0.45
        assert binarize_hysteresis(prob, connectivity=8)[2, 2]
        assert not binarize_hysteresis(prob, connectivity=4)[1, 1]

    @pytest.mark.parametrize("low,high", [(0.5, 0.4), (-0.1, 0.4), (0.4, 1.1)])
    def test_bad_thresholds(self, low, high):
        with pytest.raises(ValueError):
            binarize_hysteresis(np.zeros((2, 2)), low, high)

    @settings(max_examples=60)
    @given(prob_maps)
    def test_matches_flood_fill(self, prob):
        assert np.array_equal(binarize_hysteresis(prob, 0.40, 0.49), flood_hysteresis(prob, 0.40, 0.49))

    @settings(max_examples=60)
    @given(prob_maps, st.sampled_from([0.3, 0.4]), st.sampled_from([0.45, 0.49, 0.55]))
    def test_monotone_in_thresholds(self, prob, low, high):
        base = binarize_hysteresis(prob, low, high)
        assert np.all(base <= binarize_hysteresis(prob, low, min(high + 0.05, 1.0)))
        assert np.all(base <= binarize_hysteresis(prob, min(low + 0.05, high), high))


class TestOpening:
    def test_disc(self):
        assert disc(0).tolist() == [[True]]
        assert disc(1).sum() == 5
        assert disc(5).sum() == 81

    def test_radius_zero(self):
        free = np.random.default_rng(0).random((10, 10)) < 0.5
        assert np.array_equal(opening(free, 0), free)

    def test_thin_corridor_removed(self):
        free = np.zeros((30, 60), dtype=bool)
        free[5:25, 2:20] = True
        free[5:25, 40:58] = True
        free[15, 20:40] = True
        out = opening(free, 2)
        assert not out[15, 25:35].any()
        assert out[15, 10] and out[15, 50]

    def test_open_area_at_border_survives(self):
        free = np.ones((20, 20), dtype=bool)
        assert opening(free, 5).all()

    @settings(max_examples=40, deadline=None)
    @given(arrays(bool, st.tuples(st.integers(1, 20), st.integers(1, 20))), st.integers(0, 3))
    def test_subset_and_idempotent(self, free, radius):
        once = opening(free, radius)
        assert np.all(once <= free)
        assert np.array_equal(opening(once, radius), once)


class TestFirstOccupied:
    def test_clear_line(self):
        assert bresenham_first_occupied(np.ones((5, 5), bool), (0, 0), (4, 4)) == (4, 4)

    def test_blocked(self):
        free = np.ones((5, 5), bool)
        free[2, 2] = False
        assert bresenham_first_occupied(free, (0, 0), (4, 4)) == (2, 2)

    def test_occupied_start(self):
        free = np.ones((5, 5), bool)
        free[0, 0] = False
        with pytest.raises(VehicleCellOccupied):
            bresenham_first_occupied(free, (0, 0), (4, 4))

    def test_against_dense_sampling(self):
        rng = np.random.default_rng(3)
        checked = 0
        for _ in range(400):
            free = rng.random((24, 24)) > 0.15
            start = tuple(int(v) for v in rng.integers(0, 24, 2))
            end = tuple(int(v) for v in rng.integers(0, 24, 2))
            free[start] = True
            line = [tuple(map(int, p)) for p in bresenham(*start, *end)]
            dense = dense_line_cells(start, end)
            grazing = set(line) ^ set(dense)
            if any(not free[p] for p in grazing):
                continue  # answer depends on the tie rule at corners
            expect = next((p for p in dense if not free[p]), end)
            assert bresenham_first_occupied(free, start, end) == expect
            checked += 1
        assert checked > 200


def one_based(cells):
    return [(int(r) + 1, int(c) + 1) for r, c in cells]


class TestInsightEdges:
    def test_border_keys_cover_perimeter(self):
        cells, keys = border_targets(5, 7)
        assert len(cells) == 2 * 5 + 2 * 7
        assert sorted(set(keys.tolist())) == list(range(1, 2 * 5 + 2 * 7 + 1))

    def test_free_5x5_order(self):
        free = np.ones((5, 5), dtype=bool)
        expected = [(2, 1), (3, 1), (4, 1), (5, 1), (5, 2), (5, 3), (5, 4), (5, 5),
                    (4, 5), (3, 5), (2, 5), (1, 5), (1, 4), (1, 3), (1, 2), (1, 1)]
        assert one_based(insight_edges(free, (2, 2))) == expected

    def test_free_9x9_is_whole_border(self):
        edges = one_based(insight_edges(np.ones((9, 9), bool), (4, 4)))
        left = [(i, 1) for i in range(2, 10)]
        bottom = [(9, j) for j in range(2, 10)]
        right = [(i, 9) for i in range(8, 0, -1)]
        top = [(1, j) for j in range(8, 0, -1)]
        assert edges == left + bottom + right + top

    def test_corner_keeps_later_key(self):
        table = edge_index_grid(np.ones((5, 5), bool), (2, 2))
        assert table[0, 0] == 2 * 5 + 2 * 5  # top row key overwrites left column key 1
        assert table[4, 0] == 5 + 1

    def test_single_occluder(self):
        free = np.ones((21, 21), bool)
        free[10, 14] = False
        edges = [tuple(map(int, e)) for e in insight_edges(free, (10, 10))]
        assert edges.count((10, 14)) == 1
        assert (10, 20) not in edges  # shadowed border cell

    @pytest.mark.parametrize("seed", range(10))
    def test_settle_matches_naive_loop(self, seed):
        rng = np.random.default_rng(100 + seed)
        free = random_free(rng, 48)
        cells = np.argwhere(free)
        vehicle = tuple(int(v) for v in cells[rng.integers(len(cells))])
        targets, _ = border_targets(48, 48)
        hits = cast_rays(free, vehicle, targets)
        expect = []
        for r, c in hits:
            cur = (int(r), int(c))
            while (nxt := bresenham_first_occupied(free, vehicle, cur)) != cur:
                cur = nxt
            expect.append(cur)
        assert settle_hits(free, vehicle, hits).tolist() == [list(e) for e in expect]

    def test_occupied_vehicle(self):
        free = np.ones((5, 5), bool)
        free[2, 2] = False
        with pytest.raises(VehicleCellOccupied):
            insight_edges(free, (2, 2))

    def test_vehicle_off_map(self):
        with pytest.raises(VehicleCellOccupied):
            insight_edges(np.ones((5, 5), bool), (7, 2))

    @pytest.mark.parametrize("seed", range(25))
    def test_random_maps_visible_and_enclosing(self, seed):
        rng = np.random.default_rng(seed)
        free = random_free(rng)
        cells = np.argwhere(free)
        vehicle = tuple(int(v) for v in cells[rng.integers(len(cells))])
        edges = insight_edges(free, vehicle)
        h, w = free.shape
        for r, c in edges:
            on_border = r in (0, h - 1) or c in (0, w - 1)
            assert on_border or not free[r, c]
            path = list(bresenham(*vehicle, int(r), int(c)))[:-1]
            assert all(free[tuple(p)] for p in path)
        poly = [(r + 0.5, c + 0.5) for r, c in edges]
        p = (vehicle[0] + 0.5, vehicle[1] + 0.5)
        on_edge = any(point_segment_distance(p, poly[i], poly[(i + 1) % len(poly)]) < 1e-9
                      for i in range(len(poly)))
        assert on_edge or winding_number(*p, poly) != 0


@settings(max_examples=60, deadline=None)
@given(arrays(bool, st.tuples(st.integers(1, 30), st.integers(1, 30))), st.integers(1, 6))
def test_opening_matches_scipy(free, radius):
    se = disc(radius)
    padded = np.pad(free, radius, constant_values=True)
    eroded = ndimage.binary_erosion(padded, structure=se, border_value=1)
    ref = ndimage.binary_dilation(eroded, structure=se, border_value=0)[radius:-radius, radius:-radius]
    assert np.array_equal(opening(free, radius), ref)
