"""Douglas-Peucker simplification with a hard cap on the number of kept vertices."""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np


@dataclass
class FreeSpacePolygon:
    vertices: np.ndarray
    indices: np.ndarray
    closed: bool = True

    def __len__(self) -> int:
        return len(self.vertices)


def segment_distances(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each point to the segment ``a``-``b``."""
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.hypot(*(points - a).T)
    t = np.clip((points - a) @ ab / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.hypot(*(points - proj).T)


def _farthest(pts: np.ndarray, a: int, b: int) -> tuple[float, int]:
    d = segment_distances(pts[a + 1:b], pts[a], pts[b])
    k = int(np.argmax(d))  # first maximum, i.e. lowest index on ties
    return float(d[k]), a + 1 + k


def douglas_peucker_capped(points, epsilon: float, max_vertices: int, closed: bool = False) -> FreeSpacePolygon:
    """Simplify a polyline (or closed polygon) to at most ``max_vertices`` vertices.

    Splits are taken greatest deviation first, so when the cap stops the
    refinement the kept vertices are the most significant ones. Without the
    cap binding the result equals plain Douglas-Peucker. A closed ring is
    anchored at its first vertex and the vertex farthest from it, and the
    two arcs share the vertex budget; it always keeps a third vertex when
    the ring has any area to keep.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    minimum = 3 if closed else 2
    if max_vertices < minimum:
        raise ValueError(f"max_vertices must be at least {minimum}")
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    n = len(pts)
    if n <= minimum:
        idx = np.arange(min(n, max_vertices))
        return FreeSpacePolygon(pts[idx], idx, closed)

    if closed:
        far = int(np.argmax(np.hypot(*(pts - pts[0]).T)))
        if far == 0:
            return FreeSpacePolygon(pts[:1], np.array([0]), closed)
        ext = np.vstack([pts, pts[:1]])
        kept = [0, far]
        spans = [(0, far), (far, n)]
    else:
        ext = pts
        kept = [0, n - 1]
        spans = [(0, n - 1)]

    heap: list[tuple[float, int, int, int]] = []

    def push(a: int, b: int) -> None:
        if b - a > 1:
            d, k = _farthest(ext, a, b)
            heapq.heappush(heap, (-d, k, a, b))

    for a, b in spans:
        push(a, b)
    while heap and len(kept) < max_vertices:
        neg_d, k, a, b = heap[0]
        d = -neg_d
        forced = closed and len(kept) < 3 and d > 0.0
        if d <= epsilon and not forced:
            break
        heapq.heappop(heap)
        kept.append(k)
        push(a, k)
        push(k, b)

    idx = np.array(sorted(kept))
    return FreeSpacePolygon(pts[idx], idx, closed)
