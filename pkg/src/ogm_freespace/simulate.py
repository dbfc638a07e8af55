"""Synthetic polygon worlds and a 2D laser scanner simulator used to generate test logs."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .logs import OdometryRecord, parse_odometry_log, write_odometry_log
from .scan_model import FullScan, Kind, Pose2D, write_scan_log


@dataclass
class SensorSpec:
    aperture_deg: float = 145.0
    resolution_deg: float = 0.25
    max_range: float = 150.0
    mount: Pose2D = field(default_factory=lambda: Pose2D(0.0, 0.0, 0.0))
    range_noise: float = 0.0
    dropout: float = 0.0
    clutter: int = 0

    def azimuths(self) -> np.ndarray:
        """Beam azimuths in radians, centered in the aperture."""
        n = int(round(self.aperture_deg / self.resolution_deg))
        deg = -self.aperture_deg / 2.0 + (np.arange(n) + 0.5) * self.resolution_deg
        return np.radians(deg)


@dataclass
class SyntheticWorld:
    bounds: tuple[float, float]
    obstacles: list[np.ndarray]

    @classmethod
    def from_json(cls, data: dict) -> "SyntheticWorld":
        return cls(tuple(data["bounds"]), [np.asarray(p, dtype=np.float64) for p in data["obstacles"]])

    @classmethod
    def load(cls, path: str | Path) -> "SyntheticWorld":
        return cls.from_json(json.loads(Path(path).read_text()))

    def to_json(self) -> dict:
        return {"bounds": list(self.bounds), "obstacles": [p.tolist() for p in self.obstacles]}

    def segments(self) -> np.ndarray:
        """All obstacle edges as an ``(S, 4)`` array ``x1, y1, x2, y2``."""
        parts = [np.hstack([p, np.roll(p, -1, axis=0)]) for p in self.obstacles if len(p) >= 2]
        return np.vstack(parts) if parts else np.empty((0, 4))


def box_room(width: float, height: float, wall: float = 0.5) -> SyntheticWorld:
    """Closed rectangular room ``[0, width] x [0, height]`` built from four wall slabs."""
    w, h, t = width, height, wall
    walls = [
        [[-t, -t], [w + t, -t], [w + t, 0.0], [-t, 0.0]],
        [[-t, h], [w + t, h], [w + t, h + t], [-t, h + t]],
        [[-t, 0.0], [0.0, 0.0], [0.0, h], [-t, h]],
        [[w, 0.0], [w + t, 0.0], [w + t, h], [w, h]],
    ]
    return SyntheticWorld((w, h), [np.array(p) for p in walls])


def corridor(length: float, width: float, wall: float = 0.5, pillars: int = 0, seed: int = 0) -> SyntheticWorld:
    """Closed straight corridor along x, optionally with small pillars near the walls."""
    world = box_room(length, width, wall)
    rng = np.random.default_rng(seed)
    for _ in range(pillars):
        x = rng.uniform(5.0, length - 5.0)
        y = rng.choice([rng.uniform(0.5, 1.5), rng.uniform(width - 1.5, width - 0.5)])
        s = rng.uniform(0.3, 0.6)
        world.obstacles.append(np.array([[x, y], [x + s, y], [x + s, y + s], [x, y + s]]))
    return world


def ray_cast(segments: np.ndarray, origin: tuple[float, float], angles: np.ndarray, max_range: float) -> np.ndarray:
    """Distance along each ray to the nearest segment, ``inf`` when nothing lies within ``max_range``."""
    angles = np.asarray(angles, dtype=np.float64)
    if len(segments) == 0:
        return np.full(len(angles), np.inf)
    ox, oy = origin
    dx, dy = np.cos(angles)[:, None], np.sin(angles)[:, None]
    ax, ay = segments[:, 0][None, :], segments[:, 1][None, :]
    ex, ey = (segments[:, 2] - segments[:, 0])[None, :], (segments[:, 3] - segments[:, 1])[None, :]
    denom = dx * ey - dy * ex
    qx, qy = ax - ox, ay - oy
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (qx * ey - qy * ex) / denom
        s = (qx * dy - qy * dx) / denom
    ok = (denom != 0) & (t > 1e-12) & (s >= 0.0) & (s <= 1.0)
    t = np.where(ok, t, np.inf).min(axis=1)
    t[t > max_range] = np.inf
    return t


@dataclass
class SimulatedFrame:
    scan: FullScan
    odometry: OdometryRecord
    sensor_pose: Pose2D
    boundary: np.ndarray  # world (x, y): sensor origin then every beam endpoint


def simulate(world: SyntheticWorld, trajectory: list[OdometryRecord], sensor: SensorSpec = SensorSpec(),
             seed: int = 0) -> list[SimulatedFrame]:
    """Scan the world from every trajectory pose. Noise, dropout and clutter stay off unless ``sensor`` enables them."""
    rng = np.random.default_rng(seed)
    segments = world.segments()
    az = sensor.azimuths()
    frames = []
    for rec in trajectory:
        spose = rec.pose.compose(sensor.mount)
        dist = ray_cast(segments, (spose.x, spose.y), spose.yaw + az, sensor.max_range)
        echo = np.isfinite(dist)
        ranges = np.where(echo, dist, sensor.max_range)
        truth = ranges.copy()
        if sensor.range_noise > 0:
            ranges = np.where(echo, np.clip(ranges + rng.normal(0, sensor.range_noise, len(az)), 0, sensor.max_range), ranges)
        if sensor.dropout > 0:
            echo &= rng.random(len(az)) >= sensor.dropout
            ranges = np.where(echo, ranges, sensor.max_range)
        kind = np.where(echo, Kind.MEASURED, Kind.MAX_RANGE).astype(np.int8)
        layer = np.zeros(len(az), dtype=np.int64)
        scan_az, scan_r = az, ranges
        if sensor.clutter > 0:
            half = math.radians(sensor.aperture_deg) / 2.0
            c_az = np.sort(rng.choice(az, size=min(sensor.clutter, len(az)), replace=False))
            c_r = rng.uniform(1.0, 20.0, len(c_az))
            scan_az = np.concatenate([az, np.clip(c_az, -half, half)])
            scan_r = np.concatenate([ranges, c_r])
            kind = np.concatenate([kind, np.full(len(c_az), Kind.MEASURED, dtype=np.int8)])
            layer = np.concatenate([layer, np.ones(len(c_az), dtype=np.int64)])
        scan = FullScan(rec.timestamp, scan_az, scan_r, layer, kind).sorted()
        heading = spose.yaw + az
        boundary = np.vstack([[spose.x, spose.y],
                              np.stack([spose.x + truth * np.cos(heading), spose.y + truth * np.sin(heading)], axis=1)])
        frames.append(SimulatedFrame(scan, rec, spose, boundary))
    return frames


def straight_trajectory(start: Pose2D, speed: float, frames: int, period_us: int = 40_000,
                        yaw_rate: float = 0.0, t0: int = 0) -> list[OdometryRecord]:
    """Constant speed and turn rate drive sampled once per scan period."""
    out = []
    x, y, yaw = start.x, start.y, start.yaw
    dt = period_us * 1e-6
    for k in range(frames):
        out.append(OdometryRecord(t0 + k * period_us, Pose2D(x, y, yaw)))
        x += speed * dt * math.cos(yaw)
        y += speed * dt * math.sin(yaw)
        yaw += yaw_rate * dt
    return out


def load_trajectory(path: str | Path) -> list[OdometryRecord]:
    with open(path, newline="") as fh:
        return parse_odometry_log(fh)


def write_outputs(frames: list[SimulatedFrame], out_dir: str | Path) -> dict[str, Path]:
    """Write ``scans.csv``, ``odom.csv`` and ``groundtruth.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"scans": out / "scans.csv", "odom": out / "odom.csv", "groundtruth": out / "groundtruth.json"}
    with open(paths["scans"], "w", newline="") as fh:
        write_scan_log([f.scan for f in frames], fh)
    with open(paths["odom"], "w", newline="") as fh:
        write_odometry_log([f.odometry for f in frames], fh)
    truth = {
        "frames": [
            {
                "timestamp_us": f.scan.timestamp,
                "sensor_pose": {"x": f.sensor_pose.x, "y": f.sensor_pose.y, "yaw": f.sensor_pose.yaw},
                "boundary_m": f.boundary.tolist(),
            }
            for f in frames
        ]
    }
    paths["groundtruth"].write_text(json.dumps(truth))
    return paths
