"""Laser full scans: log parsing, clutter removal and virtual scan points."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, TextIO

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

DEFAULT_MAX_RANGE = 150.0
DEFAULT_APERTURE_DEG = 145.0


class Kind(IntEnum):
    MEASURED = 0
    VIRTUAL = 1
    MAX_RANGE = 2


class ScanLogError(ValueError):
    """Raised for malformed scan or odometry logs; carries the offending line."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def normalize_angle(angle: float) -> float:
    """Wrap to (-pi, pi]."""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    yaw: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "yaw", normalize_angle(float(self.yaw)))

    def compose(self, other: "Pose2D") -> "Pose2D":
        """Pose of ``other`` (expressed in this pose's frame) in the parent frame."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return Pose2D(self.x + c * other.x - s * other.y, self.y + s * other.x + c * other.y, self.yaw + other.yaw)


@dataclass(frozen=True)
class ScanPoint:
    azimuth: float
    range: float
    layer: int = 0
    kind: Kind = Kind.MEASURED


@dataclass(frozen=True, eq=False)
class FullScan:
    """One sweep, stored column-wise and sorted by ``(azimuth, layer)``."""

    timestamp: int
    azimuth: np.ndarray
    range: np.ndarray
    layer: np.ndarray
    kind: np.ndarray

    @classmethod
    def from_points(cls, timestamp: int, points: Iterable[ScanPoint]) -> "FullScan":
        pts = list(points)
        scan = cls(
            int(timestamp),
            np.array([p.azimuth for p in pts], dtype=np.float64),
            np.array([p.range for p in pts], dtype=np.float64),
            np.array([p.layer for p in pts], dtype=np.int64),
            np.array([int(p.kind) for p in pts], dtype=np.int8),
        )
        return scan.sorted()

    @classmethod
    def empty(cls, timestamp: int = 0) -> "FullScan":
        return cls.from_points(timestamp, [])

    def __len__(self) -> int:
        return len(self.azimuth)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FullScan):
            return NotImplemented
        return (
            self.timestamp == other.timestamp
            and np.array_equal(self.azimuth, other.azimuth)
            and np.array_equal(self.range, other.range)
            and np.array_equal(self.layer, other.layer)
            and np.array_equal(self.kind, other.kind)
        )

    @property
    def points(self) -> list[ScanPoint]:
        return [
            ScanPoint(float(a), float(r), int(l), Kind(int(k)))
            for a, r, l, k in zip(self.azimuth, self.range, self.layer, self.kind)
        ]

    def sorted(self) -> "FullScan":
        order = np.lexsort((self.layer, self.azimuth))
        return self.select(order)

    def select(self, index) -> "FullScan":
        return FullScan(self.timestamp, self.azimuth[index], self.range[index], self.layer[index], self.kind[index])

    def cartesian(self) -> np.ndarray:
        """Sensor-frame ``(x, y)`` of every point, layers projected to the plane."""
        return np.stack([self.range * np.cos(self.azimuth), self.range * np.sin(self.azimuth)], axis=1)


def parse_scan_log(
    stream: TextIO | bytes | str,
    max_range: float = DEFAULT_MAX_RANGE,
    aperture_deg: float = DEFAULT_APERTURE_DEG,
) -> list[FullScan]:
    """Read ``timestamp_us,layer,azimuth_deg,range_m,echo_valid`` rows into full scans.

    Rows sharing a timestamp must be contiguous and timestamps must not
    decrease. A header row is accepted if it is the first line.
    """
    if isinstance(stream, bytes):
        stream = io.StringIO(stream.decode("utf-8"))
    elif isinstance(stream, str):
        stream = io.StringIO(stream)

    half_aperture = math.radians(aperture_deg) / 2.0
    scans: list[FullScan] = []
    rows: list[ScanPoint] = []
    current: int | None = None

    def flush():
        if current is None:
            return
        scan = FullScan.from_points(current, rows)
        for layer in np.unique(scan.layer):
            az = scan.azimuth[scan.layer == layer]
            if np.any(np.diff(az) == 0):
                raise ScanLogError(f"duplicate azimuth in layer {layer} of scan {current}")
        scans.append(scan)

    for lineno, row in enumerate(csv.reader(stream), start=1):
        if not row or not "".join(row).strip():
            continue
        if lineno == 1 and row[0].strip() == "timestamp_us":
            continue
        if len(row) != 5:
            raise ScanLogError(f"expected 5 fields, got {len(row)}", lineno)
        try:
            ts = int(row[0])
            layer = int(row[1])
            az = math.radians(float(row[2]))
            rng = float(row[3])
            valid = int(row[4])
        except ValueError as exc:
            raise ScanLogError(str(exc), lineno) from None
        if valid not in (0, 1):
            raise ScanLogError(f"echo_valid must be 0 or 1, got {valid}", lineno)
        if not math.isfinite(az) or abs(az) > half_aperture + 1e-9:
            raise ScanLogError(f"azimuth {row[2]} outside the {aperture_deg} deg aperture", lineno)
        if valid and not (0.0 <= rng <= max_range):
            raise ScanLogError(f"range {rng} outside [0, {max_range}]", lineno)
        if current is not None and ts < current:
            raise ScanLogError(f"timestamp {ts} precedes {current}", lineno)
        if ts != current:
            flush()
            current, rows = ts, []
        if valid:
            rows.append(ScanPoint(az, rng, layer, Kind.MEASURED))
        else:
            rows.append(ScanPoint(az, max_range, layer, Kind.MAX_RANGE))
    flush()
    return scans


def write_scan_log(scans: Iterable[FullScan], stream: TextIO) -> None:
    stream.write("timestamp_us,layer,azimuth_deg,range_m,echo_valid\n")
    for scan in scans:
        for a, r, l, k in zip(scan.azimuth, scan.range, scan.layer, scan.kind):
            valid = 0 if k == Kind.MAX_RANGE else 1
            stream.write(f"{scan.timestamp},{int(l)},{math.degrees(float(a))!r},{float(r)!r},{valid}\n")


def dbscan_labels(xy: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Cluster labels (``-1`` for noise) of classic DBSCAN.

    A point is core if at least ``min_pts`` points, itself included, lie
    within distance ``eps``. Labels match the sequential algorithm that
    visits points in index order and grows each cluster to completion: clusters
    are numbered by their lowest core index and a border point reachable from
    several clusters joins the lowest-numbered one.
    """
    n = len(xy)
    labels = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return labels
    pairs = cKDTree(xy).query_pairs(eps, output_type="ndarray")
    degree = np.bincount(pairs.ravel(), minlength=n) + 1
    core = degree >= min_pts
    if not core.any():
        return labels
    both = core[pairs[:, 0]] & core[pairs[:, 1]]
    cp = pairs[both]
    graph = csr_matrix((np.ones(len(cp)), (cp[:, 0], cp[:, 1])), shape=(n, n))
    _, comp = connected_components(graph, directed=False)
    core_idx = np.flatnonzero(core)
    # renumber components by their lowest core index
    first_core = np.full(comp.max() + 1, n, dtype=np.int64)
    np.minimum.at(first_core, comp[core_idx], core_idx)
    order = np.argsort(first_core)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    labels[core_idx] = rank[comp[core_idx]]
    # border points: the lowest-numbered cluster among core neighbours
    border = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
    for a, b in ((0, 1), (1, 0)):
        m = core[pairs[:, a]] & ~core[pairs[:, b]]
        np.minimum.at(border, pairs[m, b], labels[pairs[m, a]])
    reached = (~core) & (border != np.iinfo(np.int64).max)
    labels[reached] = border[reached]
    return labels


def dbscan_filter(scan: FullScan, eps: float = 0.8, min_pts: int = 3, min_cluster_size: int = 5) -> FullScan:
    """Drop measured points that are DBSCAN noise or belong to clusters smaller than ``min_cluster_size``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    measured = np.flatnonzero(scan.kind == Kind.MEASURED)
    keep = np.ones(len(scan), dtype=bool)
    if len(measured):
        labels = dbscan_labels(scan.select(measured).cartesian(), eps, min_pts)
        sizes = np.bincount(labels[labels >= 0], minlength=1)
        ok = labels >= 0
        ok[ok] = sizes[labels[ok]] >= min_cluster_size
        keep[measured[~ok]] = False
    return scan.select(keep)


def synthesize_virtual_points(scan: FullScan, fallback_range: float = 0.0) -> FullScan:
    """Replace max-range returns with virtual points.

    A virtual point keeps its azimuth and takes the smaller range of the
    nearest measured returns before and after it in azimuth order (layers
    merged); with only one side available that side's range is used, and
    with none at all ``fallback_range``.
    """
    kind = scan.kind.copy()
    rng = scan.range.copy()
    missing = np.flatnonzero(kind == Kind.MAX_RANGE)
    if len(missing) == 0:
        return scan
    measured = np.flatnonzero(kind == Kind.MEASURED)
    if len(measured) == 0:
        rng[missing] = fallback_range
    else:
        pos = np.searchsorted(measured, missing)
        before = rng[measured[np.maximum(pos - 1, 0)]]
        after = rng[measured[np.minimum(pos, len(measured) - 1)]]
        before = np.where(pos > 0, before, np.inf)
        after = np.where(pos < len(measured), after, np.inf)
        rng[missing] = np.minimum(before, after)
    kind[missing] = Kind.VIRTUAL
    return FullScan(scan.timestamp, scan.azimuth, rng, scan.layer, kind)


def preprocess(scan: FullScan, eps: float = 0.8, min_pts: int = 3, min_cluster_size: int = 5,
               fallback_range: float = 0.0) -> FullScan:
    return synthesize_virtual_points(dbscan_filter(scan, eps, min_pts, min_cluster_size), fallback_range)
