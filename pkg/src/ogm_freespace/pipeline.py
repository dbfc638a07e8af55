"""Per-frame pipeline: preprocess, align, map, extract and simplify free space."""
from __future__ import annotations

import bisect
import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from . import freespace
from .alignment import PositionCircleState, SpeedFilter, default_radius_max
from .grid_map import IsmConfig, OccupancyGrid, UpdateStats, normalize, rasterize_scan_enhanced
from .logs import OdometryRecord
from .scan_model import FullScan, Pose2D, preprocess
from .simplify import FreeSpacePolygon, douglas_peucker_capped

log = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    height: int = 300
    width: int = 300
    resolution: float = 0.2
    p_free: float = 0.40
    p_unknown: float = 0.5
    p_occ: float = 0.65
    max_range: float = 150.0
    clamp_min: float = -5.0
    clamp_max: float = 5.0
    aperture_deg: float = 145.0
    dbscan_eps: float = 0.8
    dbscan_min_pts: int = 3
    dbscan_min_cluster: int = 5
    virtual_fallback_range: float = 0.0
    speed_filter_n: int = 5
    speed_filter_coeffs: tuple[float, ...] = ()
    k_radius: float = 0.4
    radius_max: float = -1.0  # negative: derive from map size and edge_margin
    edge_margin: int = 10
    hysteresis_low: float = 0.40
    hysteresis_high: float = 0.49
    connectivity: int = 8
    opening_radius: int = 5
    dp_epsilon: float = 0.4
    dp_max_vertices: int = 40
    mount_x: float = 0.0
    mount_y: float = 0.0
    mount_yaw: float = 0.0
    time_tolerance_us: int = 20_000

    def __post_init__(self):
        self.ism  # validates probabilities
        if self.speed_filter_coeffs:
            SpeedFilter(self.speed_filter_coeffs)
        if not 0 <= self.hysteresis_low <= self.hysteresis_high <= 1:
            raise ValueError("hysteresis thresholds must satisfy 0 <= low <= high <= 1")
        if self.dp_max_vertices < 3:
            raise ValueError("dp_max_vertices must be at least 3 for a closed polygon")
        if self.height < 2 * self.edge_margin + 2 or self.width < 2 * self.edge_margin + 2:
            raise ValueError("map too small for the edge margin")

    @property
    def ism(self) -> IsmConfig:
        return IsmConfig(self.p_free, self.p_unknown, self.p_occ, self.max_range)

    @property
    def mount(self) -> Pose2D:
        return Pose2D(self.mount_x, self.mount_y, self.mount_yaw)

    def effective_radius_max(self) -> float:
        if self.radius_max >= 0:
            return self.radius_max
        return default_radius_max(self.height, self.width, self.edge_margin)

    def speed_filter(self) -> SpeedFilter:
        if self.speed_filter_coeffs:
            return SpeedFilter(self.speed_filter_coeffs)
        return SpeedFilter.moving_average(self.speed_filter_n)

    def new_grid(self) -> OccupancyGrid:
        return OccupancyGrid(self.height, self.width, self.resolution, self.clamp_min, self.clamp_max)

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_mapping(cls, values: dict[str, str]) -> "PipelineConfig":
        """Build from string values, converting each to its field type."""
        fields = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in fields:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = _convert(fields[key].type, raw)
        return cls(**kwargs)


def _convert(type_name, raw):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    if type_name == "int":
        return int(raw)
    if type_name == "float":
        return float(raw)
    if type_name.startswith("tuple"):
        return tuple(float(v) for v in raw.replace(",", " ").split())
    return raw


def parse_config_text(text: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def load_config(path: str | Path | None = None, overrides: dict[str, str] | None = None) -> PipelineConfig:
    values = parse_config_text(Path(path).read_text()) if path else {}
    values.update(overrides or {})
    return PipelineConfig.from_mapping(values)


def dump_config(cfg: PipelineConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = ", ".join(repr(v) for v in value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


@dataclass
class FrameResult:
    timestamp: int
    world_pose: Pose2D
    local_pose: Pose2D
    polygon: FreeSpacePolygon
    edges: np.ndarray
    stats: UpdateStats
    valid: bool
    latency_s: float


@dataclass
class PipelineState:
    cfg: PipelineConfig
    grid: OccupancyGrid = None
    align: PositionCircleState = None
    prev_time: int | None = None
    polygon: FreeSpacePolygon | None = None
    edges: np.ndarray | None = None
    free: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.grid is None:
            self.grid = self.cfg.new_grid()
        if self.align is None:
            self.align = PositionCircleState(
                k_radius=self.cfg.k_radius,
                radius_max=self.cfg.effective_radius_max(),
                margin=self.cfg.edge_margin,
                speed_filter=self.cfg.speed_filter(),
            )


def extract_free_space(prob: np.ndarray, cell: tuple[int, int], cfg: PipelineConfig) -> np.ndarray:
    """Binarize, open, and keep the vehicle's immediate neighbourhood as observed.

    Opening removes every free region narrower than the vehicle, which
    would otherwise include the apex of the scan wedge the vehicle sits in.
    Inside a disc of the opening radius around the vehicle the unopened
    binary map is kept, so the vehicle is never cut off from the space in
    front of it.
    """
    raw = freespace.binarize_hysteresis(prob, cfg.hysteresis_low, cfg.hysteresis_high, cfg.connectivity)
    opened = freespace.opening(raw, cfg.opening_radius)
    r = cfg.opening_radius
    h, w = raw.shape
    r0, c0 = cell
    rs, re = max(r0 - r, 0), min(r0 + r + 1, h)
    cs, ce = max(c0 - r, 0), min(c0 + r + 1, w)
    se = freespace.disc(r)[rs - (r0 - r):re - (r0 - r), cs - (c0 - r):ce - (c0 - r)]
    window = opened[rs:re, cs:ce]
    window[se] = raw[rs:re, cs:ce][se]
    return opened


def run_frame(state: PipelineState, scan: FullScan, odom: OdometryRecord) -> FrameResult:
    """Process one time-aligned scan and odometry record, mutating ``state``."""
    cfg = state.cfg
    t0 = time.perf_counter()
    scan = preprocess(scan, cfg.dbscan_eps, cfg.dbscan_min_pts, cfg.dbscan_min_cluster, cfg.virtual_fallback_range)

    dt = 0.0 if state.prev_time is None else (odom.timestamp - state.prev_time) * 1e-6
    local, _ = state.align.step(odom.pose, dt, state.grid, odom.speed)
    state.prev_time = odom.timestamp

    sensor = local.compose(cfg.mount)
    stats = rasterize_scan_enhanced(state.grid, scan, sensor, cfg.ism)

    prob = normalize(state.grid)
    cell = freespace.vehicle_cell(state.grid, local)
    free = extract_free_space(prob, cell, cfg)
    state.free = free
    valid = True
    try:
        edges = freespace.insight_edges(free, cell)
        verts = state.grid.cell_centers(edges)
        polygon = douglas_peucker_capped(verts, cfg.dp_epsilon, cfg.dp_max_vertices, closed=True)
        state.polygon, state.edges = polygon, edges
    except freespace.VehicleCellOccupied:
        log.warning("frame %d: vehicle cell %s is not free, reusing previous polygon", scan.timestamp, cell)
        valid = False
        polygon = state.polygon or FreeSpacePolygon(np.empty((0, 2)), np.empty(0, dtype=int), True)
        edges = state.edges if state.edges is not None else np.empty((0, 2), dtype=int)
    return FrameResult(scan.timestamp, odom.pose, local, polygon, edges, stats, valid, time.perf_counter() - t0)


def match_odometry(scans: list[FullScan], odometry: list[OdometryRecord],
                   tolerance_us: int = 20_000) -> Iterator[tuple[FullScan, OdometryRecord]]:
    """Pair each scan with its nearest odometry record; scans without one inside the tolerance are skipped."""
    times = [r.timestamp for r in odometry]
    for scan in scans:
        k = bisect.bisect_left(times, scan.timestamp)
        best = None
        for j in (k - 1, k):
            if 0 <= j < len(times) and (best is None or abs(times[j] - scan.timestamp) < abs(times[best] - scan.timestamp)):
                best = j
        if best is None or abs(times[best] - scan.timestamp) > tolerance_us:
            log.warning("scan %d: no odometry within %d us, frame skipped", scan.timestamp, tolerance_us)
            continue
        yield scan, odometry[best]


def run(scans: list[FullScan], odometry: list[OdometryRecord], cfg: PipelineConfig,
        state: PipelineState | None = None) -> Iterator[tuple[FrameResult, PipelineState]]:
    state = state or PipelineState(cfg)
    for scan, odom in match_odometry(scans, odometry, cfg.time_tolerance_us):
        yield run_frame(state, scan, odom), state
