"""Tiling: converting an irregular label grid into pure rectangular tiles.

Both tilers consume :class:`~tilecast.clustering.ClusterLabels` in the
region's local frame and emit tiles in grid-absolute coordinates, offset by
the region origin. Every plan is a disjoint exact cover of its region and
every tile larger than one cell meets the purity threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .clustering import ClusterLabels
from .errors import ConfigError, CoordinateError, ShapeError
from .grid import DataWindow, RegionRect, medoid_series, region_series

#: Growth directions for bottom-up tiling, tried in this cyclic order.
_DIRECTIONS = ("right", "down", "left", "up")


@dataclass(frozen=True)
class Tile:
    """A rectangle with a dominant cluster label.

    ``purity`` is the fraction of cells carrying ``majority_cluster``; it is
    at least the plan threshold unless the tile is a single cell.
    """

    rect: RegionRect
    majority_cluster: int
    purity: float
    medoid_cell: tuple[int, int] | None = None


@dataclass(frozen=True)
class TilePlan:
    """A disjoint cover of ``region`` by tiles."""

    tiles: tuple[Tile, ...]
    region: RegionRect
    threshold: float


def purity(rect: RegionRect, labels: ClusterLabels) -> tuple[int, float]:
    """Majority label of ``rect`` and its frequency ratio; ties pick the smaller id.

    ``rect`` is expressed in the label grid's own (local) frame.
    """
    if rect.row_end > labels.shape.rows or rect.col_end > labels.shape.cols:
        raise CoordinateError(f"rect {rect} exceeds label grid {labels.shape}")
    block = labels.labels[rect.row0 : rect.row_end, rect.col0 : rect.col_end]
    counts = np.bincount(block.ravel(), minlength=labels.k)
    majority = int(counts.argmax())  # argmax returns the first (smallest) id on ties
    return majority, float(counts[majority] / block.size)


def _check_threshold(threshold: float):
    if not 0 < threshold <= 1:
        raise ConfigError(f"purity threshold must be in (0, 1], got {threshold}")


def tile_bottom_up(labels: ClusterLabels, region: RegionRect, threshold: float) -> TilePlan:
    """Grow tiles one row/column at a time from row-major seed cells.

    Each tile starts as the first unassigned cell and expands cyclically
    right, down, left, up. An expansion is accepted only when every newly
    covered cell is unassigned and the grown rectangle's purity stays at or
    above the threshold; a failing direction is retired, and the tile closes
    once all four are retired.
    """
    _check_threshold(threshold)
    h, w = region.height, region.width
    if labels.shape.rows != h or labels.shape.cols != w:
        raise ShapeError(f"label grid {labels.shape} does not cover region {region}")
    grid = labels.labels
    assigned = np.zeros((h, w), dtype=bool)
    tiles: list[Tile] = []

    for seed in range(h * w):
        r0, c0 = divmod(seed, w)
        if assigned[r0, c0]:
            continue
        top, left, bottom, right = r0, c0, r0 + 1, c0 + 1  # half-open extents
        alive = {d: True for d in _DIRECTIONS}
        di = 0
        while any(alive.values()):
            direction = _DIRECTIONS[di % 4]
            di += 1
            if not alive[direction]:
                continue
            if direction == "right":
                ok = right < w and not assigned[top:bottom, right].any()
                cand = (top, left, bottom, right + 1)
            elif direction == "down":
                ok = bottom < h and not assigned[bottom, left:right].any()
                cand = (top, left, bottom + 1, right)
            elif direction == "left":
                ok = left > 0 and not assigned[top:bottom, left - 1].any()
                cand = (top, left - 1, bottom, right)
            else:
                ok = top > 0 and not assigned[top - 1, left:right].any()
                cand = (top - 1, left, bottom, right)
            if ok:
                t, l, b, r = cand
                block = grid[t:b, l:r]
                counts = np.bincount(block.ravel(), minlength=labels.k)
                if counts.max() / block.size >= threshold:
                    top, left, bottom, right = cand
                    continue
            alive[direction] = False

        local = RegionRect(top, left, bottom - top, right - left)
        majority, pur = purity(local, labels)
        assigned[top:bottom, left:right] = True
        tiles.append(
            Tile(
                rect=RegionRect(region.row0 + top, region.col0 + left,
                                bottom - top, right - left),
                majority_cluster=majority,
                purity=pur,
            )
        )
    return TilePlan(tiles=tuple(tiles), region=region, threshold=threshold)


def tile_quadtree(labels: ClusterLabels, region: RegionRect, threshold: float) -> TilePlan:
    """Recursively quarter the region until every node is pure enough.

    A node becomes a tile when its purity meets the threshold or it is a
    single cell; otherwise it splits at ``ceil(extent / 2)`` into NW, NE, SW,
    SE children (zero-area children on odd extents are skipped).
    """
    _check_threshold(threshold)
    h, w = region.height, region.width
    if labels.shape.rows != h or labels.shape.cols != w:
        raise ShapeError(f"label grid {labels.shape} does not cover region {region}")
    tiles: list[Tile] = []

    def visit(r0: int, c0: int, hh: int, ww: int):
        local = RegionRect(r0, c0, hh, ww)
        majority, pur = purity(local, labels)
        if pur >= threshold or hh * ww == 1:
            tiles.append(
                Tile(
                    rect=RegionRect(region.row0 + r0, region.col0 + c0, hh, ww),
                    majority_cluster=majority,
                    purity=pur,
                )
            )
            return
        sh = -(-hh // 2)  # ceil split keeps quadrants near-equal on odd extents
        sw = -(-ww // 2)
        quads = (
            (r0, c0, sh, sw),
            (r0, c0 + sw, sh, ww - sw),
            (r0 + sh, c0, hh - sh, sw),
            (r0 + sh, c0 + sw, hh - sh, ww - sw),
        )
        for qr, qc, qh, qw in quads:  # NW, NE, SW, SE
            if qh > 0 and qw > 0:
                visit(qr, qc, qh, qw)

    visit(0, 0, h, w)
    return TilePlan(tiles=tuple(tiles), region=region, threshold=threshold)


def tile_medoids(plan: TilePlan, window: DataWindow, metric: str = "euclidean") -> TilePlan:
    """Fill every tile's medoid cell from its series in ``window``."""
    if not plan.region.fits_in(window.shape):
        raise CoordinateError(f"plan region {plan.region} exceeds window {window.shape}")
    filled = []
    for tile in plan.tiles:
        series = region_series(window, tile.rect)
        medoid = medoid_series(series, metric=metric)
        filled.append(replace(tile, medoid_cell=(medoid.row, medoid.col)))
    return TilePlan(tiles=tuple(filled), region=plan.region, threshold=plan.threshold)
