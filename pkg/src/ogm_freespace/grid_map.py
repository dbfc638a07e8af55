"""Log-odds occupancy grid and the full-scan / per-beam inverse sensor models.

The local-map metric frame has its origin at the bottom-left map corner
with ``x`` east and ``y`` north. Row 0 of the cell array is the northern
edge, so the array can be written out as an image without flipping.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .raster import bresenham_batch, fill_polygon, in_bounds
from .scan_model import FullScan, Kind, Pose2D


def logit(p: float) -> float:
    return math.log(p / (1.0 - p))


@dataclass(frozen=True)
class IsmConfig:
    p_free: float = 0.40
    p_unknown: float = 0.5
    p_occ: float = 0.65
    max_range: float = 150.0

    def __post_init__(self):
        if not (0.0 < self.p_free < self.p_unknown <= 0.5 <= self.p_unknown < self.p_occ < 1.0):
            raise ValueError(f"need 0 < p_free < p_unknown = 0.5 < p_occ < 1, got {self}")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")

    @property
    def l_free(self) -> float:
        return logit(self.p_free)

    @property
    def l_occ(self) -> float:
        return logit(self.p_occ)


@dataclass
class OccupancyGrid:
    height: int
    width: int
    resolution: float
    clamp_min: float = -5.0
    clamp_max: float = 5.0
    cells: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.height < 1 or self.width < 1 or self.resolution <= 0:
            raise ValueError("grid needs positive size and resolution")
        if not self.clamp_min < 0 < self.clamp_max:
            raise ValueError("clamp bounds must straddle 0")
        if self.cells is None:
            self.cells = np.zeros((self.height, self.width), dtype=np.float64)
        elif self.cells.shape != (self.height, self.width):
            raise ValueError(f"cells shape {self.cells.shape} != {(self.height, self.width)}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    def copy(self) -> "OccupancyGrid":
        return OccupancyGrid(self.height, self.width, self.resolution, self.clamp_min, self.clamp_max,
                             self.cells.copy())

    def to_grid(self, x, y):
        """Continuous ``(row, col)`` of metric local-map coordinates."""
        return self.height - np.asarray(y) / self.resolution, np.asarray(x) / self.resolution

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        r, c = self.to_grid(x, y)
        return int(math.floor(r)), int(math.floor(c))

    def cell_centers(self, cells) -> np.ndarray:
        """Metric ``(x, y)`` centers of ``(row, col)`` cells."""
        cells = np.asarray(cells, dtype=np.float64).reshape(-1, 2)
        x = (cells[:, 1] + 0.5) * self.resolution
        y = (self.height - cells[:, 0] - 0.5) * self.resolution
        return np.stack([x, y], axis=1)

    def contains(self, x: float, y: float) -> bool:
        r, c = self.to_grid(x, y)
        return bool(0 <= r < self.height and 0 <= c < self.width)


@dataclass
class UpdateStats:
    total_updates: int = 0
    max_updates_per_cell: int = 0
    conflicts: int = 0
    free_cells: int = 0
    occupied_cells: int = 0
    counts: np.ndarray | None = field(default=None, repr=False)


def logodds_update(value, p: float, clamp_min: float = -5.0, clamp_max: float = 5.0):
    """Bayes update of a log-odds value (scalar or array) with probability ``p``, clamped."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"probability must lie in (0, 1), got {p}")
    return np.clip(value + logit(p), clamp_min, clamp_max)


def normalize(grid: OccupancyGrid | np.ndarray) -> np.ndarray:
    """Occupancy probability image of a log-odds grid."""
    cells = grid.cells if isinstance(grid, OccupancyGrid) else np.asarray(grid)
    return 1.0 - 1.0 / (1.0 + np.exp(cells))


def _anchor(grid: OccupancyGrid, pose: Pose2D) -> tuple[int, int, float, float]:
    if not grid.contains(pose.x, pose.y):
        raise ValueError(f"sensor pose {pose} lies outside the grid")
    r, c = grid.to_grid(pose.x, pose.y)
    r0, c0 = int(math.floor(r)), int(math.floor(c))
    return r0, c0, float(r) - r0, float(c) - c0


def _endpoints(grid: OccupancyGrid, scan: FullScan, pose: Pose2D, fr: float, fc: float) -> np.ndarray:
    """Beam endpoints relative to the sensor cell, as continuous ``(row, col)``."""
    heading = pose.yaw + scan.azimuth
    dist = scan.range / grid.resolution
    return np.stack([fr - dist * np.sin(heading), fc + dist * np.cos(heading)], axis=1)


def scan_polygon(scan: FullScan, sensor_pose: Pose2D, grid: OccupancyGrid) -> np.ndarray:
    """Sensor origin followed by the scan endpoints in azimuth order, in grid ``(row, col)``."""
    if len(scan) == 0:
        return np.empty((0, 2))
    r0, c0, fr, fc = _anchor(grid, sensor_pose)
    rel = np.vstack([[fr, fc], _endpoints(grid, scan, sensor_pose, fr, fc)])
    return rel + (r0, c0)


def rasterize_scan_enhanced(grid: OccupancyGrid, scan: FullScan, sensor_pose: Pose2D,
                            cfg: IsmConfig = IsmConfig()) -> UpdateStats:
    """Apply one full scan as a single polygon update; every touched cell is updated exactly once.

    Free cells are those whose centers fall inside the scan polygon plus the
    Bresenham traces of its edges. Cells holding a measured endpoint are
    updated as occupied instead. Virtual endpoints never mark obstacles.
    """
    r0, c0, fr, fc = _anchor(grid, sensor_pose)
    if len(scan) == 0:
        return UpdateStats(counts=np.zeros(grid.shape, dtype=np.int32))
    ends = _endpoints(grid, scan, sensor_pose, fr, fc)
    rel = np.vstack([[fr, fc], ends])

    free = fill_polygon(rel, grid.shape, (r0, c0))

    vcells = np.floor(rel).astype(np.int64)
    n = len(vcells)
    # edges origin->p1, p1->p2, ..., p_{n-1}->p_n, and the closing edge traced outward origin->p_n
    starts = np.vstack([vcells[:-1], vcells[:1]])
    stops = np.vstack([vcells[1:], vcells[n - 1:]])
    edge_cells, _ = bresenham_batch(starts[:, 0], starts[:, 1], stops[:, 0], stops[:, 1])
    edge_cells = edge_cells + (r0, c0)
    edge_cells = edge_cells[in_bounds(edge_cells, grid.shape)]
    free[edge_cells[:, 0], edge_cells[:, 1]] = True

    occ = np.zeros(grid.shape, dtype=bool)
    hits = vcells[1:][scan.kind == Kind.MEASURED] + (r0, c0)
    hits = hits[in_bounds(hits, grid.shape)]
    occ[hits[:, 0], hits[:, 1]] = True
    free &= ~occ

    grid.cells[free] = logodds_update(grid.cells[free], cfg.p_free, grid.clamp_min, grid.clamp_max)
    grid.cells[occ] = logodds_update(grid.cells[occ], cfg.p_occ, grid.clamp_min, grid.clamp_max)

    counts = free.astype(np.int32) + occ.astype(np.int32)
    return UpdateStats(
        total_updates=int(counts.sum()),
        max_updates_per_cell=int(counts.max()),
        conflicts=int(np.count_nonzero(free & occ)),
        free_cells=int(free.sum()),
        occupied_cells=int(occ.sum()),
        counts=counts,
    )


def rasterize_scan_conventional(grid: OccupancyGrid, scan: FullScan, sensor_pose: Pose2D,
                                cfg: IsmConfig = IsmConfig()) -> UpdateStats:
    """Per-beam ray casting baseline: each measured beam is an independent Bayes update.

    Cells on the Bresenham ray before the endpoint get ``p_free``, the
    endpoint cell gets ``p_occ``. Beams are applied in azimuth order and a
    cell may be hit by many beams. Unreflected beams are not compensated.
    """
    r0, c0, fr, fc = _anchor(grid, sensor_pose)
    free_count = np.zeros(grid.shape, dtype=np.int32)
    occ_count = np.zeros(grid.shape, dtype=np.int32)
    measured = scan.select(scan.kind == Kind.MEASURED)
    if len(measured):
        ends = np.floor(_endpoints(grid, measured, sensor_pose, fr, fc)).astype(np.int64)
        zeros = np.zeros(len(ends), dtype=np.int64)
        cells, offsets = bresenham_batch(zeros, zeros, ends[:, 0], ends[:, 1])
        cells = cells + (r0, c0)
        inside = in_bounds(cells, grid.shape)
        l_free, l_occ = cfg.l_free, cfg.l_occ
        lo, hi = grid.clamp_min, grid.clamp_max
        values = grid.cells
        for i in range(len(ends)):
            a, b = offsets[i], offsets[i + 1]
            ray, ok = cells[a:b], inside[a:b]
            path = ray[:-1][ok[:-1]]
            rr, cc = path[:, 0], path[:, 1]
            values[rr, cc] = np.clip(values[rr, cc] + l_free, lo, hi)
            free_count[rr, cc] += 1
            if ok[-1]:
                er, ec = ray[-1]
                values[er, ec] = min(max(values[er, ec] + l_occ, lo), hi)
                occ_count[er, ec] += 1
    counts = free_count + occ_count
    return UpdateStats(
        total_updates=int(counts.sum()),
        max_updates_per_cell=int(counts.max()) if counts.size else 0,
        conflicts=int(np.count_nonzero((free_count > 0) & (occ_count > 0))),
        free_cells=int(np.count_nonzero(free_count)),
        occupied_cells=int(np.count_nonzero(occ_count)),
        counts=counts,
    )


def to_pgm_bytes(grid: OccupancyGrid) -> bytes:
    """Binary PGM (P5) of the occupancy probability, 0 = free, 255 = occupied."""
    pixels = np.rint(255.0 * normalize(grid)).astype(np.uint8)
    header = f"P5\n{grid.width} {grid.height}\n255\n".encode("ascii")
    return header + pixels.tobytes()


def write_pgm(grid: OccupancyGrid, path: str | Path) -> None:
    Path(path).write_bytes(to_pgm_bytes(grid))


def read_pgm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    if fields[0] != b"P5":
        raise ValueError("not a binary PGM file")
    width, height = int(fields[1]), int(fields[2])
    pos += 1  # single whitespace byte ends the header
    return np.frombuffer(data[pos:pos + width * height], dtype=np.uint8).reshape(height, width)


def write_mask_pgm(mask: np.ndarray, path: str | Path) -> None:
    """Debug export of a boolean or integer-valued array, scaled to 0..255."""
    arr = np.asarray(mask)
    if arr.dtype == bool:
        pixels = np.where(arr, 255, 0).astype(np.uint8)
    else:
        top = max(int(arr.max()), 1)
        pixels = np.rint(255.0 * arr / top).astype(np.uint8)
    h, w = pixels.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes())
