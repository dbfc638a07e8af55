import math

import numpy as np
import pytest

from ogm_freespace.grid_map import (
    IsmConfig, OccupancyGrid, logodds_update, normalize, rasterize_scan_conventional,
    rasterize_scan_enhanced, read_pgm, scan_polygon, to_pgm_bytes, write_pgm,
)
from ogm_freespace.scan_model import FullScan, Kind, Pose2D, ScanPoint
from oracles import inside_even_odd, point_segment_distance

CFG = IsmConfig()


def fan_scan(n, ranges, start_deg=-72.5, step_deg=0.25, kinds=None):
    az = np.radians(start_deg + (np.arange(n) + 0.5) * step_deg)
    kinds = [Kind.MEASURED] * n if kinds is None else kinds
    ranges = np.broadcast_to(np.asarray(ranges, dtype=float), (n,))
    return FullScan.from_points(0, [ScanPoint(a, r, 0, k) for a, r, k in zip(az, ranges, kinds)])


def random_scan(rng, n, max_r=5.0, aperture=145.0):
    az = np.sort(rng.uniform(-aperture / 2, aperture / 2, n))
    kinds = [Kind.VIRTUAL if rng.random() < 0.2 else Kind.MEASURED for _ in range(n)]
    return FullScan.from_points(0, [
        ScanPoint(math.radians(a), float(rng.uniform(0.2, max_r)), 0, k) for a, k in zip(az, kinds)
    ])


class TestLogOdds:
    def test_unknown_is_noop(self):
        assert logodds_update(0.0, 0.5) == 0.0

    def test_occupied_increment(self):
        assert logodds_update(0.0, 0.65) == pytest.approx(0.6190392084062235, abs=1e-12)

    def test_saturation(self):
        value, steps = 0.0, 0
        while value < 5.0:
            value = logodds_update(value, 0.65)
            steps += 1
        # ceil(5 / 0.6190...) = 9
        assert steps == 9
        assert value == 5.0

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
    def test_contract(self, p):
        with pytest.raises(ValueError):
            logodds_update(0.0, p)

    def test_normalize(self):
        assert normalize(np.array(0.0)) == 0.5
        assert normalize(np.array(5.0)) < 1.0
        for p in (0.4, 0.65, 0.2, 0.9):
            assert normalize(logodds_update(0.0, p)) == pytest.approx(p, abs=1e-12)
        vals = np.linspace(-5, 5, 101)
        assert np.all(np.diff(normalize(vals)) > 0)


def test_ism_config_validation():
    IsmConfig(0.40, 0.5, 0.65)
    for bad in [(0.5, 0.5, 0.65), (0.4, 0.6, 0.65), (0.4, 0.5, 0.5), (0.0, 0.5, 0.6), (0.4, 0.5, 1.0)]:
        with pytest.raises(ValueError):
            IsmConfig(*bad)


class TestScanPolygon:
    def setup_method(self):
        self.grid = OccupancyGrid(64, 64, 0.2)
        self.pose = Pose2D(6.4, 6.4, 0.0)

    def test_three_points(self):
        assert len(scan_polygon(fan_scan(3, 2.0), self.pose, self.grid)) == 4

    def test_empty(self):
        assert len(scan_polygon(FullScan.empty(), self.pose, self.grid)) == 0

    def test_full_resolution_scan(self):
        poly = scan_polygon(fan_scan(580, 4.0), self.pose, self.grid)
        assert len(poly) == 581
        rel = poly[1:] - poly[0]
        # row axis points south, so the mathematical angle is atan2(-drow, dcol)
        ang = np.arctan2(-rel[:, 0], rel[:, 1])
        assert np.all(np.diff(ang) > 0)

    def test_origin_is_sensor(self):
        poly = scan_polygon(fan_scan(3, 2.0), Pose2D(1.0, 2.0, 0.3), self.grid)
        assert np.allclose(poly[0], [64 - 2.0 / 0.2, 1.0 / 0.2])


class TestEnhanced:
    def test_one_update_per_cell(self):
        rng = np.random.default_rng(0)
        grid = OccupancyGrid(64, 64, 0.2)
        for _ in range(30):
            stats = rasterize_scan_enhanced(grid, random_scan(rng, 80), Pose2D(6.4, 6.4, rng.uniform(-3, 3)), CFG)
            assert stats.max_updates_per_cell == 1
            assert stats.conflicts == 0
            assert stats.total_updates == stats.free_cells + stats.occupied_cells

    def test_all_virtual_marks_no_obstacle(self):
        grid = OccupancyGrid(64, 64, 0.2)
        scan = fan_scan(100, 3.0, kinds=[Kind.VIRTUAL] * 100)
        stats = rasterize_scan_enhanced(grid, scan, Pose2D(6.4, 6.4, 0.0), CFG)
        assert stats.occupied_cells == 0
        assert stats.free_cells > 40  # ~ 0.5 * 25deg * (15 cells)^2
        assert np.all(grid.cells <= 0)

    def test_cells_outside_polygon_untouched(self):
        grid = OccupancyGrid(64, 64, 0.2)
        rasterize_scan_enhanced(grid, fan_scan(40, 2.0, start_deg=-5, step_deg=0.25), Pose2D(6.4, 6.4, 0.0), CFG)
        # everything behind the sensor (west of it) stays unknown
        assert np.all(grid.cells[:, :31] == 0)

    def test_sensor_outside_grid(self):
        with pytest.raises(ValueError):
            rasterize_scan_enhanced(OccupancyGrid(10, 10, 0.2), fan_scan(3, 1.0), Pose2D(-1, 1, 0), CFG)

    @pytest.mark.parametrize("seed", range(20))
    def test_free_cells_match_point_in_polygon(self, seed):
        rng = np.random.default_rng(seed)
        grid = OccupancyGrid(64, 64, 0.2)
        scan = random_scan(rng, 50, max_r=8.0)
        pose = Pose2D(rng.uniform(4, 8.8), rng.uniform(4, 8.8), rng.uniform(-math.pi, math.pi))
        poly = scan_polygon(scan, pose, grid)
        stats = rasterize_scan_enhanced(grid, scan, pose, CFG)
        touched = stats.counts > 0
        edges = list(zip(poly, np.roll(poly, -1, axis=0)))
        for r in range(64):
            for c in range(64):
                inside = inside_even_odd(r + 0.5, c + 0.5, poly.tolist())
                if inside:
                    assert touched[r, c]
                elif touched[r, c]:
                    # extra cells only along the traced boundary
                    d = min(point_segment_distance((r + 0.5, c + 0.5), a, b) for a, b in edges)
                    assert d <= 1.5

    def test_shuffled_points_same_grid(self):
        rng = np.random.default_rng(5)
        scan = random_scan(rng, 60)
        pts = scan.points
        rng.shuffle(pts)
        a, b = OccupancyGrid(64, 64, 0.2), OccupancyGrid(64, 64, 0.2)
        rasterize_scan_enhanced(a, scan, Pose2D(6.4, 6.4, 0.1), CFG)
        rasterize_scan_enhanced(b, FullScan.from_points(0, pts), Pose2D(6.4, 6.4, 0.1), CFG)
        assert np.array_equal(a.cells, b.cells)

    def test_whole_cell_translation_invariance(self):
        scan = random_scan(np.random.default_rng(9), 60)
        a, b = OccupancyGrid(64, 64, 0.2), OccupancyGrid(64, 64, 0.2)
        rasterize_scan_enhanced(a, scan, Pose2D(6.13, 6.77, 0.4), CFG)
        rasterize_scan_enhanced(b, scan, Pose2D(6.13 + 7 * 0.2, 6.77 - 3 * 0.2, 0.4), CFG)
        assert np.array_equal(a.cells[0:61, 0:57], b.cells[3:64, 7:64])


class TestConventional:
    def test_single_beam_identical_to_enhanced(self):
        for az, r in [(0.0, 3.0), (0.7, 4.1), (-1.2, 2.3)]:
            scan = FullScan.from_points(0, [ScanPoint(az, r)])
            a, b = OccupancyGrid(64, 64, 0.2), OccupancyGrid(64, 64, 0.2)
            sa = rasterize_scan_enhanced(a, scan, Pose2D(6.3, 6.5, 0.2), CFG)
            sb = rasterize_scan_conventional(b, scan, Pose2D(6.3, 6.5, 0.2), CFG)
            assert np.array_equal(a.cells, b.cells)
            assert np.array_equal(sa.counts, sb.counts)

    def test_dense_near_field_overlap(self):
        grid = OccupancyGrid(64, 64, 0.2)
        scan = fan_scan(580, 3.0)
        conv = rasterize_scan_conventional(grid, scan, Pose2D(6.4, 6.4, 0.0), CFG)
        enh = rasterize_scan_enhanced(OccupancyGrid(64, 64, 0.2), scan, Pose2D(6.4, 6.4, 0.0), CFG)
        assert conv.max_updates_per_cell > 1
        assert conv.total_updates >= enh.total_updates
        # the sensor cell is crossed by every beam
        assert conv.max_updates_per_cell >= 580

    def test_conflicts_on_near_wall(self):
        # wall 1 m ahead: beams at a slant cross cells that neighbouring beams end in
        az = np.radians(-72.5 + (np.arange(580) + 0.5) * 0.25)
        ranges = 1.0 / np.cos(az)
        scan = FullScan.from_points(0, [ScanPoint(a, min(r, 20.0)) for a, r in zip(az, ranges)])
        conv = rasterize_scan_conventional(OccupancyGrid(64, 64, 0.2), scan, Pose2D(6.4, 6.4, 0.0), CFG)
        enh = rasterize_scan_enhanced(OccupancyGrid(64, 64, 0.2), scan, Pose2D(6.4, 6.4, 0.0), CFG)
        assert conv.conflicts > 0
        assert enh.conflicts == 0

    def test_ignores_unreflected_beams(self):
        scan = fan_scan(10, 3.0, kinds=[Kind.VIRTUAL] * 10)
        stats = rasterize_scan_conventional(OccupancyGrid(64, 64, 0.2), scan, Pose2D(6.4, 6.4, 0.0), CFG)
        assert stats.total_updates == 0


class TestPgm:
    def test_values_and_orientation(self, tmp_path):
        grid = OccupancyGrid(4, 5, 0.2)
        grid.cells[0, 0] = 5.0  # north-west corner
        grid.cells[3, 4] = -5.0
        path = tmp_path / "map_1.pgm"
        write_pgm(grid, path)
        data = path.read_bytes()
        assert data.startswith(b"P5\n5 4\n255\n")
        img = read_pgm(path)
        assert img.shape == (4, 5)
        assert img[0, 0] == round(255 * (1 - 1 / (1 + math.exp(5))))
        assert img[3, 4] == round(255 * (1 - 1 / (1 + math.exp(-5))))
        assert img[1, 1] == 128

    def test_header_survives_whitespace_pixels(self, tmp_path):
        grid = OccupancyGrid(2, 2, 0.2)
        grid.cells[:] = -3.1  # maps to a pixel value of 11 (vertical tab)
        write_pgm(grid, tmp_path / "m.pgm")
        assert np.array_equal(read_pgm(tmp_path / "m.pgm"), np.frombuffer(to_pgm_bytes(grid)[-4:], np.uint8).reshape(2, 2))
