"""Rolling, non-rotating local map with the vehicle placed on a speed-dependent circle.

The map is only ever translated by whole cells. The remaining sub-cell
part of the motion is absorbed by the vehicle's position inside the map,
and heading changes are absorbed by the vehicle's yaw, so no map cell is
ever interpolated.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .grid_map import OccupancyGrid
from .scan_model import Pose2D

REVERSE_DOT_TOL = 1e-9


def estimate_speed(pose: Pose2D, prev: Pose2D, dt: float) -> float:
    """Signed speed from two consecutive world poses; negative when moving against the previous heading."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    dx, dy = pose.x - prev.x, pose.y - prev.y
    speed = math.hypot(dx, dy) / dt
    along = dx * math.cos(prev.yaw) + dy * math.sin(prev.yaw)
    if along < 0 and abs(along) >= REVERSE_DOT_TOL:
        return -speed
    return speed


class SpeedFilter:
    """FIR low-pass over the last ``n`` raw speeds; ``coefficients[0]`` weights the newest sample."""

    def __init__(self, coefficients: Sequence[float]):
        coeffs = np.asarray(coefficients, dtype=np.float64)
        if coeffs.ndim != 1 or len(coeffs) == 0:
            raise ValueError("need at least one coefficient")
        if not math.isclose(float(coeffs.sum()), 1.0, rel_tol=0.0, abs_tol=1e-9):
            raise ValueError(f"filter coefficients must sum to 1, got {coeffs.sum()!r}")
        self.coefficients = coeffs
        self.history: deque[float] = deque(maxlen=len(coeffs))

    @classmethod
    def moving_average(cls, n: int) -> "SpeedFilter":
        return cls([1.0 / n] * n)

    def __call__(self, speed: float) -> float:
        if not self.history:
            # warm-up: unseen history equals the first observation
            self.history.extend([speed] * len(self.coefficients))
        else:
            self.history.appendleft(speed)
        return float(np.dot(self.coefficients, np.fromiter(self.history, dtype=np.float64)))


def default_radius_max(height: int, width: int, margin: int = 10) -> float:
    side = min(height, width)
    return min(0.35 * side, side / 2.0 - margin - 1)


def circle_radius(speed: float, k_radius: float, radius_max: float) -> float:
    """Position-circle radius in cells."""
    if k_radius < 0:
        raise ValueError("k_radius must be non-negative")
    return min(max(k_radius * abs(speed), 0.0), radius_max)


def circle_pose(speed: float, yaw: float, grid: OccupancyGrid, k_radius: float, radius_max: float) -> Pose2D:
    """Vehicle pose on the position circle, in local-map metres.

    Forward motion puts the vehicle behind the map center so that more of
    the map lies ahead of it; reverse motion does the opposite.
    """
    r = circle_radius(speed, k_radius, radius_max) * grid.resolution
    sign = 1.0 if speed > 0 else (-1.0 if speed < 0 else 0.0)
    cx = grid.width * grid.resolution / 2.0
    cy = grid.height * grid.resolution / 2.0
    return Pose2D(cx - sign * r * math.cos(yaw), cy - sign * r * math.sin(yaw), yaw)


def compute_shift(world: Pose2D, world_prev: Pose2D, local_prev: Pose2D, circle: Pose2D,
                  resolution: float) -> tuple[float, float]:
    """Required map shift ``(x, y)`` in cells (east, north)."""
    sx = (world.x - world_prev.x + local_prev.x - circle.x) / resolution
    sy = (world.y - world_prev.y + local_prev.y - circle.y) / resolution
    return sx, sy


def split_shift(value: float) -> tuple[int, float]:
    """Floor / fractional decomposition; the fraction is always in [0, 1)."""
    whole = math.floor(value)
    frac = value - whole
    if frac >= 1.0:  # rounding of value - floor(value) for tiny negative values
        whole, frac = whole + 1, 0.0
    return int(whole), frac


def shift_map(cells: np.ndarray, drow: int, dcol: int, fill: float = 0.0) -> np.ndarray:
    """Translate ``cells`` so that ``out[r, c] == cells[r - drow, c - dcol]``; vacated cells get ``fill``."""
    h, w = cells.shape
    out = np.full_like(cells, fill)
    if abs(drow) >= h or abs(dcol) >= w:
        return out
    src_r = slice(max(0, -drow), h - max(0, drow))
    dst_r = slice(max(0, drow), h - max(0, -drow))
    src_c = slice(max(0, -dcol), w - max(0, dcol))
    dst_c = slice(max(0, dcol), w - max(0, -dcol))
    out[dst_r, dst_c] = cells[src_r, src_c]
    return out


@dataclass
class PositionCircleState:
    """Sequential alignment state carried from one map update to the next."""

    k_radius: float = 0.4
    radius_max: float | None = None
    margin: int = 10
    speed_filter: SpeedFilter = field(default_factory=lambda: SpeedFilter.moving_average(5))
    world_prev: Pose2D | None = None
    local: Pose2D | None = None
    circle: Pose2D | None = None
    speed: float = 0.0
    radius: float = 0.0
    # global cell index of local (row 0, col 0), relative to the first map
    origin_row: int = 0
    origin_col: int = 0

    def step(self, world: Pose2D, dt: float, grid: OccupancyGrid,
             speed: float | None = None) -> tuple[Pose2D, OccupancyGrid]:
        """Advance one map update; shifts ``grid.cells`` in place and returns the new local pose.

        ``speed`` (signed m/s) replaces the pose-difference estimate when the
        odometry source reports it directly.
        """
        radius_max = self.radius_max
        if radius_max is None:
            radius_max = default_radius_max(grid.height, grid.width, self.margin)
        first = self.world_prev is None
        if first:
            self.world_prev = world
        if speed is not None:
            raw = float(speed)
        else:
            raw = 0.0 if first or dt <= 0 else estimate_speed(world, self.world_prev, dt)
        self.speed = self.speed_filter(raw)
        self.radius = circle_radius(self.speed, self.k_radius, radius_max)
        self.circle = circle_pose(self.speed, world.yaw, grid, self.k_radius, radius_max)
        if first:
            self.local = self.circle

        sx, sy = compute_shift(world, self.world_prev, self.local, self.circle, grid.resolution)
        ix, fx = split_shift(sx)
        iy, fy = split_shift(sy)
        if ix or iy:
            # east motion moves content west (columns decrease); north motion moves it south (rows increase)
            grid.cells = shift_map(grid.cells, iy, -ix)
            self.origin_col += ix
            self.origin_row -= iy
        self.local = Pose2D(self.circle.x + fx * grid.resolution, self.circle.y + fy * grid.resolution, world.yaw)
        self.world_prev = world
        return self.local, grid
