"""Odometry and polygon log formats."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Iterable, TextIO

from .scan_model import Pose2D, ScanLogError

ODOM_HEADER = "timestamp_us,x_m,y_m,yaw_rad"


@dataclass(frozen=True)
class OdometryRecord:
    timestamp: int
    pose: Pose2D
    speed: float | None = None


def parse_odometry_log(stream: TextIO | bytes | str) -> list[OdometryRecord]:
    """Read ``timestamp_us,x_m,y_m,yaw_rad[,speed_mps]`` rows with strictly increasing timestamps."""
    if isinstance(stream, bytes):
        stream = io.StringIO(stream.decode("utf-8"))
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    records: list[OdometryRecord] = []
    for lineno, row in enumerate(csv.reader(stream), start=1):
        if not row or not "".join(row).strip():
            continue
        if lineno == 1 and row[0].strip() == "timestamp_us":
            continue
        if len(row) not in (4, 5):
            raise ScanLogError(f"expected 4 or 5 fields, got {len(row)}", lineno)
        try:
            ts = int(row[0])
            pose = Pose2D(float(row[1]), float(row[2]), float(row[3]))
            speed = float(row[4]) if len(row) == 5 and row[4].strip() else None
        except ValueError as exc:
            raise ScanLogError(str(exc), lineno) from None
        if records and ts <= records[-1].timestamp:
            raise ScanLogError(f"timestamp {ts} does not increase", lineno)
        records.append(OdometryRecord(ts, pose, speed))
    return records


def write_odometry_log(records: Iterable[OdometryRecord], stream: TextIO) -> None:
    stream.write(ODOM_HEADER + "\n")
    for rec in records:
        p = rec.pose
        stream.write(f"{rec.timestamp},{p.x!r},{p.y!r},{p.yaw!r}\n")


def polygon_record(timestamp: int, world: Pose2D, local: Pose2D, vertices, valid: bool = True) -> str:
    """One JSON line of the per-frame polygon export."""
    payload = {
        "timestamp_us": int(timestamp),
        "pose": {"x": world.x, "y": world.y, "yaw": world.yaw},
        "local_pose": {"x": local.x, "y": local.y, "yaw": local.yaw},
        "vertices_m": [[float(x), float(y)] for x, y in vertices],
        "valid": bool(valid),
    }
    return json.dumps(payload)


def read_polygon_log(stream: TextIO) -> list[dict]:
    return [json.loads(line) for line in stream if line.strip()]
