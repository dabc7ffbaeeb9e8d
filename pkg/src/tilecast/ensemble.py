"""Ensemble composition: per-tile predictor selection, placement, stitching.

Each tile receives exactly one predictor (the registry argmin of estimated
error at the tile's medoid); predictors larger or smaller than their tile are
laid out as a disjoint grid of placements with edge rows/columns duplicated
to fill the model's input window.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .clustering import (
    ClustererState,
    ClusteringConfig,
    ClusterLabels,
    assign_points,
    silhouette,
    _compact,
)
from .errors import ConfigError, MetricUndefinedError, ShapeError, StreamError
from .grid import CellSeries, DataWindow, Frame, GridShape, QuerySpec, RegionRect, rmse
from .predictors import ModelRegistry, PredictorMeta, predict
from .representation import GldReducer, ParCorrReducer
from .tiling import Tile, TilePlan, tile_bottom_up, tile_medoids, tile_quadtree
from .warping import dtw


@dataclass(frozen=True)
class Placement:
    """One predictor invocation inside a tile.

    ``target_rect`` is the sub-rectangle (grid-absolute) whose cells this
    invocation produces; padding counts how many duplicated rows/columns fill
    the model input beyond the tile data.
    """

    tile_index: int
    predictor_id: str
    target_rect: RegionRect
    pad_rows: int
    pad_cols: int


@dataclass(frozen=True)
class TileSelection:
    tile_index: int
    predictor_id: str
    estimate: float
    extrapolated: bool = False


@dataclass(frozen=True)
class EnsemblePlan:
    """Allocation for one window: one predictor per tile plus its placements.

    ``metas`` resolves the predictor ids referenced by the placements, so a
    plan executes without access to the registry it was composed from.
    """

    window_tick: int
    tile_plan: TilePlan
    selections: tuple[TileSelection, ...]
    placements: tuple[Placement, ...]
    metas: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs of the per-window pipeline (representation through execution)."""

    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    tiling: str = "quadtree"
    purity_threshold: float = 0.9
    dr: str = "parcorr"
    basis_size: int = 8
    medoid_metric: str = "euclidean"
    seed: int = 0

    def __post_init__(self):
        if self.tiling not in ("quadtree", "bottom_up"):
            raise ConfigError(f"unknown tiling strategy {self.tiling!r}")
        if self.dr not in ("parcorr", "gld"):
            raise ConfigError(f"unknown representation {self.dr!r}")
        if not 0 < self.purity_threshold <= 1:
            raise ConfigError(f"purity threshold must be in (0, 1], got {self.purity_threshold}")

    def make_reducer(self):
        if self.dr == "gld":
            return GldReducer()
        return ParCorrReducer(b=self.basis_size, seed=self.seed)


def compose_ensemble(tile_plan: TilePlan, window: DataWindow,
                     registry: ModelRegistry) -> EnsemblePlan:
    """Select the lowest-estimated-error predictor for every tile.

    Ties go to the lexicographically smallest predictor id. Every registry
    entry must carry a fitted error estimation function.
    """
    if len(registry) == 0:
        raise ConfigError("cannot compose an ensemble from an empty registry")
    missing = [e.meta.id for e in registry if e.eef is None]
    if missing:
        raise ConfigError(f"predictors without fitted EEF: {missing}")

    selections = []
    placements = []
    metas = {}
    for idx, tile in enumerate(tile_plan.tiles):
        if tile.medoid_cell is None:
            raise ConfigError(f"tile {idx} has no medoid; run tile_medoids first")
        r, c = tile.medoid_cell
        medoid = CellSeries(r, c, np.array([f.values[r, c] for f in window.frames]))
        best = None
        for entry in registry:
            dist = dtw(entry.eef.training_centroid, medoid.values)
            key = (entry.eef(dist), entry.meta.id)
            if best is None or key < best[0]:
                max_dist = max((p.dist for p in entry.eef.pairs), default=None)
                extrapolated = max_dist is not None and dist > max_dist
                best = (key, entry.meta, extrapolated)
        (estimate, _), meta, extrapolated = best
        selections.append(
            TileSelection(tile_index=idx, predictor_id=meta.id,
                          estimate=estimate, extrapolated=extrapolated)
        )
        placements.extend(place_in_tile(tile, meta, tile_index=idx))
        metas[meta.id] = meta
    return EnsemblePlan(
        window_tick=window.end_tick,
        tile_plan=tile_plan,
        selections=tuple(selections),
        placements=tuple(placements),
        metas=metas,
    )


def place_in_tile(tile: Tile, meta: PredictorMeta, tile_index: int = 0) -> list[Placement]:
    """Cover the tile with a disjoint grid of model-sized placements.

    Layout runs from the tile's top-left; interior placements are exactly the
    model's spatial size, and bottom/right remainders record how many rows or
    columns of duplicated edge data complete the input.
    """
    h, w = meta.input_rows, meta.input_cols
    placements = []
    rect = tile.rect
    for r0 in range(rect.row0, rect.row_end, h):
        th = min(h, rect.row_end - r0)
        for c0 in range(rect.col0, rect.col_end, w):
            tw = min(w, rect.col_end - c0)
            placements.append(
                Placement(
                    tile_index=tile_index,
                    predictor_id=meta.id,
                    target_rect=RegionRect(r0, c0, th, tw),
                    pad_rows=h - th,
                    pad_cols=w - tw,
                )
            )
    return placements


def run_placements(placements, metas: dict, region: RegionRect,
                   block: np.ndarray) -> np.ndarray:
    """Run placements against a (n, region_h, region_w) block and stitch.

    Each placement writes exactly its target cells, so execution order is
    irrelevant to the result.
    """
    out = np.empty((region.height, region.width))
    for pl in placements:
        meta = metas[pl.predictor_id]
        rect = pl.target_rect
        r0 = rect.row0 - region.row0
        c0 = rect.col0 - region.col0
        data = block[:, r0 : r0 + rect.height, c0 : c0 + rect.width]
        if pl.pad_rows or pl.pad_cols:
            data = np.pad(data, ((0, 0), (0, pl.pad_rows), (0, pl.pad_cols)), mode="edge")
        try:
            pred = predict(meta, data)
        except ShapeError as exc:
            raise ShapeError(
                f"tile {pl.tile_index} placement at {rect.as_tuple()}: {exc}"
            ) from exc
        out[r0 : r0 + rect.height, c0 : c0 + rect.width] = pred[: rect.height, : rect.width]
    return out


def _execute_block(plan: EnsemblePlan, block: np.ndarray) -> np.ndarray:
    return run_placements(plan.placements, plan.metas, plan.tile_plan.region, block)


def execute_plan(plan: EnsemblePlan, window: DataWindow) -> Frame:
    """Predict the next frame over the plan's region and stitch tile outputs."""
    region = plan.tile_plan.region
    block = window.region_block(region)
    out = _execute_block(plan, block)
    return Frame(
        shape=GridShape(region.height, region.width),
        values=out,
        timestamp=window.end_tick + 1,
    )


@dataclass(frozen=True)
class TileReport:
    rect: tuple[int, int, int, int]
    purity: float
    predictor: str
    estimate: float | None


@dataclass
class WindowReport:
    """Per-window outcome of a continuous query."""

    tick: int
    rmse: float
    elapsed_ms: dict
    tiles: list[TileReport]
    silhouette: float | None
    k: int | None


def iterate_windows(stream, query: QuerySpec):
    """Tumbling windows plus their truth frames.

    Yields ``(window, truths)`` where ``truths`` holds the ``horizon`` frames
    following the window. Windows never overlap; the run ends cleanly when the
    stream cannot complete a window or its truth.
    """
    frames = []
    shape = None
    pending = []
    n, k = query.window_len, query.horizon
    for frame in stream:
        if shape is None:
            shape = frame.shape
        elif frame.shape != shape:
            raise StreamError(
                f"grid shape drifted from {shape} to {frame.shape} at tick {frame.timestamp}"
            )
        frames.append(frame)
        while len(frames) >= (len(pending) + 1) * n + k:
            start = len(pending) * n
            pending.append(None)
            window = DataWindow(frames[start : start + n])
            truths = frames[start + n : start + n + k]
            yield window, truths


def run_continuous_query(query: QuerySpec, stream, registry: ModelRegistry,
                         config: PipelineConfig) -> list[WindowReport]:
    """Drive the full pipeline over tumbling windows of the stream.

    Per window: reduce the region's cells, cluster them under the configured
    strategy, tile the labels, pick one predictor per tile by estimated
    error, execute and stitch, then score against the true next frame(s).
    Multi-step horizons re-apply the same plan on the rolled window.
    """
    for entry in registry:
        if entry.meta.input_len != query.window_len:
            raise ConfigError(
                f"predictor {entry.meta.id} expects input length {entry.meta.input_len}, "
                f"query window is {query.window_len}"
            )
    region = query.region
    reducer = config.make_reducer()
    state = ClustererState()
    tiler = tile_quadtree if config.tiling == "quadtree" else tile_bottom_up
    reports = []

    for window, truths in iterate_windows(stream, query):
        if not region.fits_in(window.shape):
            raise ConfigError(f"query region {region} exceeds grid {window.shape}")
        timer = {}
        t0 = time.perf_counter()
        points = reducer.reduce(window, region)
        timer["represent"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        assign = assign_points(points, config.clustering, state)
        assign, k = _compact(assign)
        labels = ClusterLabels(
            shape=GridShape(region.height, region.width),
            labels=assign.reshape(region.height, region.width),
            k=k,
        )
        score = None
        if k >= 2:
            try:
                score = silhouette(points, assign)
            except MetricUndefinedError:
                score = None
        timer["cluster"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        plan = tiler(labels, region, config.purity_threshold)
        plan = tile_medoids(plan, window, metric=config.medoid_metric)
        timer["tile"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        eplan = compose_ensemble(plan, window, registry)
        timer["compose"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        block = window.region_block(region)
        step_errors = []
        for step in range(query.horizon):
            pred = _execute_block(eplan, block)
            truth = truths[step].values[
                region.row0 : region.row_end, region.col0 : region.col_end
            ]
            step_errors.append(rmse(pred, truth))
            block = np.concatenate([block[1:], pred[None]], axis=0)
        timer["execute"] = time.perf_counter() - t0

        sel_by_tile = {s.tile_index: s for s in eplan.selections}
        tiles = [
            TileReport(
                rect=tile.rect.as_tuple(),
                purity=tile.purity,
                predictor=sel_by_tile[i].predictor_id,
                estimate=sel_by_tile[i].estimate,
            )
            for i, tile in enumerate(plan.tiles)
        ]
        reports.append(
            WindowReport(
                tick=window.end_tick,
                rmse=float(np.mean(step_errors)),
                elapsed_ms={key: val * 1000.0 for key, val in timer.items()},
                tiles=tiles,
                silhouette=score,
                k=k,
            )
        )
    return reports
