"""Integer line tracing and even-odd polygon filling on cell grids.

Cells are addressed as ``(row, col)``. Continuous grid coordinates use the
same order, with cell ``(r, c)`` covering ``[r, r+1) x [c, c+1)`` so its
center sits at ``(r + 0.5, c + 0.5)``.
"""
from __future__ import annotations

import numpy as np


def bresenham(r0: int, c0: int, r1: int, c1: int) -> np.ndarray:
    """Cells of the Bresenham line from ``(r0, c0)`` to ``(r1, c1)``, both ends included.

    Returns an ``(n, 2)`` int array ordered from start to end.
    """
    cells, _ = bresenham_batch(np.array([r0]), np.array([c0]), np.array([r1]), np.array([c1]))
    return cells


def bresenham_batch(r0, c0, r1, c1) -> tuple[np.ndarray, np.ndarray]:
    """Trace many lines at once.

    Returns ``(cells, offsets)`` where line ``i`` occupies
    ``cells[offsets[i]:offsets[i + 1]]``.

    The minor coordinate at major step ``k`` is ``k * d_minor / d_major``
    rounded half away from the start point, which is the midpoint form of
    Bresenham's algorithm written in closed form so that every line is
    traced by the same integer arithmetic.
    """
    r0 = np.asarray(r0, dtype=np.int64).ravel()
    c0 = np.asarray(c0, dtype=np.int64).ravel()
    r1 = np.asarray(r1, dtype=np.int64).ravel()
    c1 = np.asarray(c1, dtype=np.int64).ravel()
    dr, dc = r1 - r0, c1 - c0
    adr, adc = np.abs(dr), np.abs(dc)
    sr, sc = np.sign(dr), np.sign(dc)
    n = np.maximum(adr, adc)
    lengths = n + 1
    offsets = np.zeros(len(n) + 1, dtype=np.int64)
    np.cumsum(lengths, out=offsets[1:])
    if len(n) == 0:
        return np.empty((0, 2), dtype=np.int64), offsets

    seg = np.repeat(np.arange(len(n)), lengths)
    k = np.arange(offsets[-1], dtype=np.int64) - offsets[seg]
    col_major = (adc >= adr)[seg]
    a_r, a_c = adr[seg], adc[seg]
    # denominators are clamped to 1 only for zero-length lines where k == 0
    minor_r = (2 * k * a_r + a_c) // np.maximum(2 * a_c, 1)
    minor_c = (2 * k * a_c + a_r) // np.maximum(2 * a_r, 1)
    rows = np.where(col_major, r0[seg] + sr[seg] * minor_r, r0[seg] + sr[seg] * k)
    cols = np.where(col_major, c0[seg] + sc[seg] * k, c0[seg] + sc[seg] * minor_c)
    return np.stack([rows, cols], axis=1), offsets


def fill_polygon(vertices: np.ndarray, shape: tuple[int, int], offset: tuple[int, int] = (0, 0)) -> np.ndarray:
    """Boolean mask of cells whose centers lie inside ``vertices`` (even-odd rule).

    ``vertices`` is an ``(n, 2)`` array of continuous ``(row, col)`` points
    expressed relative to the integer cell ``offset``; the mask is in absolute
    grid indices. Keeping geometry relative to an integer anchor makes the
    result invariant under whole-cell translations of the anchor.
    """
    height, width = shape
    mask = np.zeros(shape, dtype=bool)
    pts = np.asarray(vertices, dtype=np.float64)
    if len(pts) < 3:
        return mask
    r_off, c_off = int(offset[0]), int(offset[1])
    y1, x1 = pts[:, 0], pts[:, 1]
    y2, x2 = np.roll(y1, -1), np.roll(x1, -1)
    ylo, yhi = np.minimum(y1, y2), np.maximum(y1, y2)
    # scanline at row r crosses an edge iff ylo <= r - r_off + 0.5 < yhi
    first = np.ceil(ylo - 0.5).astype(np.int64) + r_off
    last = np.ceil(yhi - 0.5).astype(np.int64) + r_off - 1
    first = np.maximum(first, 0)
    last = np.minimum(last, height - 1)
    counts = np.maximum(last - first + 1, 0)
    if counts.sum() == 0:
        return mask

    edge = np.repeat(np.arange(len(pts)), counts)
    starts = np.zeros(len(pts), dtype=np.int64)
    np.cumsum(counts[:-1], out=starts[1:])
    rows = first[edge] + (np.arange(counts.sum()) - starts[edge])
    yc = (rows - r_off) + 0.5
    ex1, ey1 = x1[edge], y1[edge]
    t = (yc - ey1) / (y2[edge] - ey1)
    xc = ex1 + t * (x2[edge] - ex1)
    cols = np.clip(np.ceil(xc - 0.5).astype(np.int64) + c_off, 0, width)

    toggles = np.zeros((height, width + 1), dtype=np.int32)
    np.add.at(toggles, (rows, cols), 1)
    mask[:] = (np.cumsum(toggles, axis=1)[:, :width] & 1).astype(bool)
    return mask


def in_bounds(cells: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    rows, cols = cells[:, 0], cells[:, 1]
    return (rows >= 0) & (rows < shape[0]) & (cols >= 0) & (cols < shape[1])
