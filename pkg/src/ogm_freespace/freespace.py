"""Binarization of the normalized map and in-sight edge detection."""
from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from .raster import bresenham


class VehicleCellOccupied(RuntimeError):
    """The vehicle's own cell is not free, so no in-sight edges can be cast."""


def binarize_hysteresis(prob: np.ndarray, low: float = 0.40, high: float = 0.49,
                        connectivity: int = 8) -> np.ndarray:
    """Free mask from an occupancy probability image.

    Cells with ``P(occ) <= low`` are free seeds. Cells with ``P(occ) <= high``
    are free when connected to a seed through such cells.
    """
    if not 0.0 <= low <= high <= 1.0:
        raise ValueError(f"need 0 <= low <= high <= 1, got low={low}, high={high}")
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    prob = np.asarray(prob)
    weak = prob <= high
    seeds = prob <= low
    structure = ndimage.generate_binary_structure(2, 2 if connectivity == 8 else 1)
    labels, count = ndimage.label(weak, structure=structure)
    if count == 0:
        return np.zeros(prob.shape, dtype=bool)
    seeded = np.zeros(count + 1, dtype=bool)
    seeded[np.unique(labels[seeds])] = True
    seeded[0] = False
    return seeded[labels]


def disc(radius: int) -> np.ndarray:
    r = int(radius)
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return xx * xx + yy * yy <= r * r


def _disc_rows(radius: int) -> list[tuple[int, int]]:
    """``(row offset, half width)`` of every row of the disc."""
    se = disc(radius)
    return [(dy, int(se[dy + radius].sum()) // 2) for dy in range(-radius, radius + 1)]


def _disc_filter(img: np.ndarray, radius: int, erode: bool) -> np.ndarray:
    """Binary erosion or dilation by a disc, as one 1-D run filter per distinct row width.

    Cells beyond the image edge count as set for erosion and unset for dilation.
    """
    h = img.shape[0]
    out = np.ones_like(img) if erode else np.zeros_like(img)
    run_filter = ndimage.minimum_filter1d if erode else ndimage.maximum_filter1d
    runs: dict[int, np.ndarray] = {}
    for dy, half in _disc_rows(radius):
        if half not in runs:
            runs[half] = run_filter(img, 2 * half + 1, axis=1, mode="constant", cval=int(erode))
        m = runs[half]
        dst, src = (out[:h - dy], m[dy:]) if dy >= 0 else (out[-dy:], m[:h + dy])
        if erode:
            dst &= src
        else:
            dst |= src
    return out


def opening(free: np.ndarray, radius: int) -> np.ndarray:
    """Morphological opening of the free foreground with a disc.

    Space beyond the map edge counts as free, so open areas that run off
    the map are not eaten from the border.
    """
    if radius < 0:
        raise ValueError("radius must be non-negative")
    free = np.asarray(free, dtype=bool)
    if radius == 0:
        return free.copy()
    padded = np.pad(free, radius, constant_values=True).view(np.uint8)
    opened = _disc_filter(_disc_filter(padded, radius, erode=True), radius, erode=False)
    return opened[radius:-radius, radius:-radius].astype(bool)


def bresenham_first_occupied(free: np.ndarray, start: tuple[int, int], end: tuple[int, int]) -> tuple[int, int]:
    """First non-free cell on the Bresenham line ``start -> end``, or ``end`` if none."""
    r0, c0 = start
    if not free[r0, c0]:
        raise VehicleCellOccupied(f"start cell {start} is not free")
    for r, c in bresenham(r0, c0, *end):
        if not (0 <= r < free.shape[0] and 0 <= c < free.shape[1]) or not free[r, c]:
            return int(r), int(c)
    return int(end[0]), int(end[1])


def border_targets(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Border cells in the order they are written, with their sort keys.

    Keys use 1-based row ``i`` and column ``j``: left column ``i``, bottom row
    ``H + j``, right column ``2H + W - i + 1``, top row ``2H + 2W - j + 1``, which
    runs counter-clockwise around the map starting at the top-left.
    """
    h, w = height, width
    i = np.arange(1, h + 1)
    j = np.arange(1, w + 1)
    left = np.stack([i - 1, np.zeros(h, int)], axis=1)
    right = np.stack([i - 1, np.full(h, w - 1)], axis=1)
    top = np.stack([np.zeros(w, int), j - 1], axis=1)
    bottom = np.stack([np.full(w, h - 1), j - 1], axis=1)
    # interleave as the two loops do: (left_i, right_i) for each i, then (top_j, bottom_j) for each j
    rows_loop = np.stack([left, right], axis=1).reshape(-1, 2)
    rows_keys = np.stack([i, 2 * h + w - i + 1], axis=1).ravel()
    cols_loop = np.stack([top, bottom], axis=1).reshape(-1, 2)
    cols_keys = np.stack([2 * h + 2 * w - j + 1, h + j], axis=1).ravel()
    return np.vstack([rows_loop, cols_loop]), np.concatenate([rows_keys, cols_keys])


def cast_rays(free: np.ndarray, start: tuple[int, int], targets: np.ndarray, block: int = 32) -> np.ndarray:
    """First non-free cell on each Bresenham ray from ``start`` to every target (target if unobstructed).

    Rays are marched ``block`` steps at a time and dropped once resolved,
    so cost follows the distance to the first obstacle, not the map size.
    """
    r0, c0 = start
    h, w = free.shape
    targets = np.asarray(targets, dtype=np.int64)
    dr, dc = targets[:, 0] - r0, targets[:, 1] - c0
    adr, adc = np.abs(dr), np.abs(dc)
    sr, sc = np.sign(dr), np.sign(dc)
    n = np.maximum(adr, adc)
    col_major = adc >= adr
    hits = targets.copy()
    active = np.arange(len(targets))
    k0 = 0
    while len(active):
        steps = np.arange(k0, k0 + block)
        k = np.minimum(steps[None, :], n[active, None])
        a_r, a_c = adr[active, None], adc[active, None]
        minor_r = (2 * k * a_r + a_c) // np.maximum(2 * a_c, 1)
        minor_c = (2 * k * a_c + a_r) // np.maximum(2 * a_r, 1)
        cm = col_major[active, None]
        rows = np.where(cm, r0 + sr[active, None] * minor_r, r0 + sr[active, None] * k)
        cols = np.where(cm, c0 + sc[active, None] * k, c0 + sc[active, None] * minor_c)
        inside = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
        blocked = ~inside
        blocked[inside] = ~free[rows[inside], cols[inside]]
        any_hit = blocked.any(axis=1)
        first = np.argmax(blocked, axis=1)
        sel = np.flatnonzero(any_hit)
        hits[active[sel], 0] = rows[sel, first[sel]]
        hits[active[sel], 1] = cols[sel, first[sel]]
        done = any_hit | (n[active] < k0 + block)
        active = active[~done]
        k0 += block
    return hits


def settle_hits(free: np.ndarray, start: tuple[int, int], hits: np.ndarray) -> np.ndarray:
    """Pull each hit back until the direct line from ``start`` reaches it unobstructed.

    A Bresenham line to an intermediate cell need not follow the longer ray
    it lies on, so a hit can be shadowed on its own line. Re-casting toward
    a hit moves it strictly closer. The first blocked cell of any line from
    a free start touches free space, so one cast toward every such cell
    gives a successor table that is then followed to its fixed points.
    """
    h, w = free.shape
    touching = ~free & ndimage.binary_dilation(free, structure=np.ones((3, 3), bool))
    cand = np.unique(np.vstack([np.argwhere(touching), hits]), axis=0)
    slot = np.full((h, w), -1, dtype=np.int64)
    slot[cand[:, 0], cand[:, 1]] = np.arange(len(cand))
    succ = slot[tuple(cast_rays(free, start, cand).T)]
    cur = slot[hits[:, 0], hits[:, 1]]
    while True:
        nxt = succ[cur]
        if np.array_equal(nxt, cur):
            return cand[cur]
        cur = nxt


def edge_index_grid(free: np.ndarray, vehicle_cell: tuple[int, int]) -> np.ndarray:
    """Sort-key raster: each ray's hit cell holds the key of the last ray that hit it, 0 elsewhere."""
    free = np.asarray(free, dtype=bool)
    h, w = free.shape
    if h < 2 or w < 2:
        raise ValueError("map must be at least 2x2")
    r, c = vehicle_cell
    if not (0 <= r < h and 0 <= c < w) or not free[r, c]:
        raise VehicleCellOccupied(f"vehicle cell {vehicle_cell} is not free")
    targets, keys = border_targets(h, w)
    hits = settle_hits(free, (r, c), cast_rays(free, (r, c), targets))
    flat = hits[:, 0] * w + hits[:, 1]
    # later writes win: keep the last occurrence of every cell
    _, last_rev = np.unique(flat[::-1], return_index=True)
    last = len(flat) - 1 - last_rev
    table = np.zeros((h, w), dtype=np.int64)
    table.flat[flat[last]] = keys[last]
    return table


def insight_edges(free: np.ndarray, vehicle_cell: tuple[int, int]) -> np.ndarray:
    """Sorted in-sight edge cells ``(row, col)`` seen from ``vehicle_cell``."""
    table = edge_index_grid(free, vehicle_cell)
    rows, cols = np.nonzero(table)
    order = np.argsort(table[rows, cols], kind="stable")
    return np.stack([rows[order], cols[order]], axis=1)


def vehicle_cell(grid, pose) -> tuple[int, int]:
    r, c = grid.to_grid(pose.x, pose.y)
    return int(math.floor(r)), int(math.floor(c))
