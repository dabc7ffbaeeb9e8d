"""Allocation strategies, the default model zoo, and experiment runners.

Besides the adaptive per-tile pipeline this module provides the reference
strategies it is compared against: random allocation, a single pooled global
model, cellwise averaging of all models, the best single model in hindsight,
and oracle best-fit allocations driven by the synthetic generator's ground
truth (frozen or re-derived per grid).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .eef import NoiseSchedule, fit_eef
from .ensemble import (
    Placement,
    PipelineConfig,
    TileReport,
    WindowReport,
    iterate_windows,
    place_in_tile,
    run_continuous_query,
    run_placements,
)
from .errors import ConfigError
from .grid import CellSeries, QuerySpec, RegionRect, rmse
from .predictors import ModelRegistry, PredictorMeta, fit_predictor
from .streamio import GriddedStream
from .synthetic import Pattern, SyntheticGridConfig
from .tiling import Tile

STRATEGIES = (
    "stream_ensemble",
    "random",
    "global",
    "average",
    "best_of_all",
    "best_fit_static",
    "best_fit_dynamic",
)

_TIMER_KEYS = ("represent", "cluster", "tile", "compose", "execute")


@dataclass(frozen=True)
class StrategyConfig:
    strategy: str
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    seed: int = 0
    frozen_layout: dict | None = None  # generator config dict for best_fit_static

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")


@dataclass
class StrategyReport:
    strategy: str
    records: list[WindowReport]
    model_id: str | None = None

    @property
    def mean_rmse(self) -> float:
        if not self.records:
            return float("nan")
        return float(np.mean([r.rmse for r in self.records]))


# ---------------------------------------------------------------------------
# Default model zoo over synthetic streams.

_SPECIALIST_SIZES = ((1, 1), (3, 3), (5, 5), (7, 7))


def specialist_id(pattern: Pattern) -> str:
    return f"spec-{pattern.key()}"


def _specialist_kind(pattern: Pattern) -> tuple[str, dict]:
    if pattern.kind == "linear":
        return "linear_trend", {}
    if pattern.kind == "sine":
        return "sine_fit", {"frequency": pattern.params[1]}
    return "persistence", {}


def training_slices(stream: GriddedStream, region: RegionRect, start: int, end: int,
                    window_len: int, horizon: int = 1, max_cells: int = 60,
                    seed: int = 0) -> list[CellSeries]:
    """Window-aligned training series for error estimation.

    Slices of length ``window_len + horizon`` at stride ``window_len`` keep
    periodic patterns phase-locked across slices and put centroid distances on
    the same scale as window medoids. Cells are subsampled deterministically
    when the region is large.
    """
    block = stream.values[start:end, region.row0 : region.row_end,
                          region.col0 : region.col_end].astype(float)
    span = end - start
    n_cells = region.height * region.width
    flat = block.reshape(span, n_cells)
    if n_cells > max_cells:
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(97,)))
        keep = np.sort(rng.choice(n_cells, size=max_cells, replace=False))
        flat = flat[:, keep]
    length = window_len + horizon
    out = []
    for s in range(0, span - length + 1, window_len):
        for c in range(flat.shape[1]):
            out.append(CellSeries(0, c, flat[s : s + length, c]))
    if not out:
        raise ConfigError(
            f"training interval [{start}, {end}) too short for window {window_len}"
        )
    return out


def full_series(stream: GriddedStream, region: RegionRect, start: int, end: int,
                max_cells: int = 60, seed: int = 0) -> list[CellSeries]:
    """Full-interval series per (subsampled) cell, for parameter fitting."""
    block = stream.values[start:end, region.row0 : region.row_end,
                          region.col0 : region.col_end].astype(float)
    n_cells = region.height * region.width
    flat = block.reshape(end - start, n_cells)
    if n_cells > max_cells:
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(98,)))
        keep = np.sort(rng.choice(n_cells, size=max_cells, replace=False))
        flat = flat[:, keep]
    return [CellSeries(0, c, flat[:, c]) for c in range(flat.shape[1])]


def build_default_registry(
    stream: GriddedStream,
    window_len: int,
    train_start: int = 0,
    train_end: int | None = None,
    seed: int = 0,
    horizon: int = 1,
    noise_levels: int = 10,
    with_eefs: bool = True,
    with_extras: bool = True,
    eef_max_cells: int = 3,
) -> ModelRegistry:
    """Fit the standard zoo on a synthetic stream: one specialist per pattern,
    a pooled global model, and (optionally) generic baseline predictors.

    Requires generator metadata on the stream for the specialists. Error
    estimation datasets keep only ``eef_max_cells`` cells: averaging many
    cells into the noise-ladder centroids cancels their noise and would put
    the calibrated distances far below the scale of single-cell tile medoids.
    """
    if stream.meta is None:
        raise ConfigError("stream has no generator metadata; cannot derive specialists")
    config = SyntheticGridConfig.from_dict(stream.meta)
    if train_end is None:
        train_end = train_start + 8 * window_len
    if train_end > stream.ticks:
        raise ConfigError(f"training interval end {train_end} exceeds stream {stream.ticks}")

    whole = RegionRect(0, 0, stream.shape.rows, stream.shape.cols)
    plan: list[tuple[str, str, dict, RegionRect, tuple[int, int]]] = []
    seen: set[str] = set()
    for rect, pattern in config.regions():
        pid = specialist_id(pattern)
        if pid in seen:
            continue
        seen.add(pid)
        kind, extra = _specialist_kind(pattern)
        rows, cols = _SPECIALIST_SIZES[len(seen) % len(_SPECIALIST_SIZES)]
        plan.append((pid, kind, extra, rect, (rows, cols)))
    # Order 1 keeps the pooled model capacity-starved relative to the pattern
    # mix it is trained on, the role a single global model plays here.
    plan.append(("global-pooled-ar", "pooled_global", {"order": 1}, whole, (3, 3)))
    if with_extras:
        first_rect = config.regions()[0][0]
        plan.append(("base-persistence", "persistence", {}, first_rect, (1, 1)))
        plan.append(("base-mean", "mean", {}, first_rect, (3, 3)))
        plan.append(("base-ar3", "ar", {"order": 3}, first_rect, (5, 5)))

    registry = ModelRegistry()
    for index, (pid, kind, extra, rect, (rows, cols)) in enumerate(plan):
        series = full_series(stream, rect, train_start, train_end, seed=seed)
        hyper = {
            "id": pid,
            "input_rows": rows,
            "input_cols": cols,
            "input_len": window_len,
            "training_region": rect,
            "training_interval": (train_start, train_end),
            **extra,
        }
        meta = fit_predictor(kind, series, hyper)
        eef = None
        if with_eefs:
            dataset = training_slices(
                stream, rect, train_start, train_end, window_len, horizon,
                max_cells=eef_max_cells, seed=seed,
            )
            schedule = NoiseSchedule.for_data(dataset, levels=noise_levels)
            eef = fit_eef(meta, dataset, schedule, seed=seed * 1009 + index,
                          window_len=window_len, horizon=horizon)
        registry.add(meta, eef)
    return registry


# ---------------------------------------------------------------------------
# Strategy execution.


def _whole_region_placements(query: QuerySpec, meta: PredictorMeta):
    tile = Tile(rect=query.region, majority_cluster=0, purity=1.0)
    return place_in_tile(tile, meta)


def _rollout(placements, metas, region: RegionRect, block: np.ndarray,
             horizon: int) -> list[np.ndarray]:
    """Recursive multi-step predictions for one placement set."""
    steps = []
    for _ in range(horizon):
        pred = run_placements(placements, metas, region, block)
        steps.append(pred)
        block = np.concatenate([block[1:], pred[None]], axis=0)
    return steps


def _score_steps(steps, truths, region: RegionRect) -> float:
    errs = []
    for pred, truth in zip(steps, truths):
        crop = truth.values[region.row0 : region.row_end, region.col0 : region.col_end]
        errs.append(rmse(pred, crop))
    return float(np.mean(errs))


def _baseline_record(tick, score, tiles, execute_s) -> WindowReport:
    elapsed = {k: 0.0 for k in _TIMER_KEYS}
    elapsed["execute"] = execute_s * 1000.0
    return WindowReport(tick=tick, rmse=score, elapsed_ms=elapsed, tiles=tiles,
                        silhouette=None, k=None)


def _region_tiles_from_layout(layout: dict, query: QuerySpec,
                              registry: ModelRegistry) -> list[tuple[RegionRect, str]]:
    """Oracle allocation: each generator region (clipped to the query) gets the
    specialist trained on its pattern."""
    config = SyntheticGridConfig.from_dict(layout)
    out = []
    region = query.region
    for rect, pattern in config.regions():
        r0 = max(rect.row0, region.row0)
        c0 = max(rect.col0, region.col0)
        r1 = min(rect.row_end, region.row_end)
        c1 = min(rect.col_end, region.col_end)
        if r1 <= r0 or c1 <= c0:
            continue
        pid = specialist_id(pattern)
        registry.get(pid)  # raises ConfigError when the specialist is missing
        out.append((RegionRect(r0, c0, r1 - r0, c1 - c0), pid))
    return out


def run_strategy(config: StrategyConfig, query: QuerySpec, stream: GriddedStream,
                 registry: ModelRegistry, start_tick: int = 0,
                 end_tick: int | None = None) -> StrategyReport:
    """Evaluate one allocation strategy over the stream's tumbling windows."""
    if len(registry) == 0:
        raise ConfigError("empty registry")
    if config.strategy == "stream_ensemble":
        records = run_continuous_query(
            query, stream.frames(start_tick, end_tick), registry, config.pipeline
        )
        return StrategyReport(strategy=config.strategy, records=records)

    frames = stream.frames(start_tick, end_tick)
    region = query.region
    metas = {e.meta.id: e.meta for e in registry}
    entries = list(registry)

    if config.strategy == "global":
        pooled = [e for e in entries if e.meta.kind == "pooled_global"]
        if not pooled:
            raise ConfigError("global strategy needs a registered pooled_global model")
        chosen_meta = pooled[0].meta
    if config.strategy in ("best_fit_static", "best_fit_dynamic"):
        layout = config.frozen_layout if config.strategy == "best_fit_static" else stream.meta
        if layout is None:
            raise ConfigError(f"{config.strategy} needs a generator layout")
        allocation = _region_tiles_from_layout(layout, query, registry)
        alloc_placements = []
        for rect, pid in allocation:
            tile = Tile(rect=rect, majority_cluster=0, purity=1.0)
            alloc_placements.extend(place_in_tile(tile, metas[pid], tile_index=0))
        alloc_tiles = [
            TileReport(rect=rect.as_tuple(), purity=1.0, predictor=pid, estimate=None)
            for rect, pid in allocation
        ]

    rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(11,)))
    records: list[WindowReport] = []
    per_model_scores: dict[str, list[float]] = {e.meta.id: [] for e in entries}
    per_model_ticks: list[int] = []

    for window, truths in iterate_windows(frames, query):
        block = window.region_block(region)
        tick = window.end_tick
        t0 = time.perf_counter()

        if config.strategy == "random":
            entry = entries[int(rng.integers(len(entries)))]
            steps = _rollout(_whole_region_placements(query, entry.meta),
                             metas, region, block, query.horizon)
            score = _score_steps(steps, truths, region)
            tiles = [TileReport(rect=region.as_tuple(), purity=1.0,
                                predictor=entry.meta.id, estimate=None)]
            records.append(_baseline_record(tick, score, tiles, time.perf_counter() - t0))

        elif config.strategy == "global":
            steps = _rollout(_whole_region_placements(query, chosen_meta),
                             metas, region, block, query.horizon)
            score = _score_steps(steps, truths, region)
            tiles = [TileReport(rect=region.as_tuple(), purity=1.0,
                                predictor=chosen_meta.id, estimate=None)]
            records.append(_baseline_record(tick, score, tiles, time.perf_counter() - t0))

        elif config.strategy == "average":
            all_steps = [
                _rollout(_whole_region_placements(query, e.meta), metas, region,
                         block, query.horizon)
                for e in entries
            ]
            steps = [np.mean([s[i] for s in all_steps], axis=0) for i in range(query.horizon)]
            score = _score_steps(steps, truths, region)
            tiles = [TileReport(rect=region.as_tuple(), purity=1.0,
                                predictor="average", estimate=None)]
            records.append(_baseline_record(tick, score, tiles, time.perf_counter() - t0))

        elif config.strategy == "best_of_all":
            per_model_ticks.append(tick)
            for e in entries:
                steps = _rollout(_whole_region_placements(query, e.meta), metas,
                                 region, block, query.horizon)
                per_model_scores[e.meta.id].append(_score_steps(steps, truths, region))

        else:  # best_fit_static / best_fit_dynamic
            steps = _rollout(alloc_placements, metas, region, block, query.horizon)
            score = _score_steps(steps, truths, region)
            records.append(_baseline_record(tick, score, alloc_tiles,
                                            time.perf_counter() - t0))

    if config.strategy == "best_of_all":
        if not per_model_ticks:
            return StrategyReport(strategy=config.strategy, records=[])
        best_id = min(per_model_scores, key=lambda pid: (np.mean(per_model_scores[pid]), pid))
        for tick, score in zip(per_model_ticks, per_model_scores[best_id]):
            tiles = [TileReport(rect=region.as_tuple(), purity=1.0,
                                predictor=best_id, estimate=None)]
            records.append(_baseline_record(tick, score, tiles, 0.0))
        return StrategyReport(strategy=config.strategy, records=records, model_id=best_id)

    return StrategyReport(strategy=config.strategy, records=records)


# ---------------------------------------------------------------------------
# Experiment drivers.


def motivating_experiment(seeds, ticks: int = 240, window_len: int = 24,
                          train_end: int = 96, horizon: int = 1) -> dict:
    """Allocation-strategy comparison over the two preset grids.

    Specialists and the pooled model are fitted on the first grid and reused
    on the second; the static best-fit allocation keeps the first grid's
    layout on the second grid. Returns per-grid mean RMSE by strategy.
    """
    from .synthetic import generate_synthetic, preset

    sums: dict[str, dict[str, list[float]]] = {"grid1": {}, "grid2": {}}
    for seed in seeds:
        cfg1 = preset("grid1", ticks=ticks, seed=seed)
        cfg2 = preset("grid2", ticks=ticks, seed=seed)
        stream1 = generate_synthetic(cfg1)
        stream2 = generate_synthetic(cfg2)
        registry = build_default_registry(
            stream1, window_len, train_end=train_end, seed=seed,
            with_eefs=False, with_extras=False,
        )
        query = QuerySpec(region=RegionRect(0, 0, cfg1.rows, cfg1.cols),
                          horizon=horizon, window_len=window_len)

        runs = {
            "grid1": (stream1, ["best_fit_dynamic", "random", "global"]),
            "grid2": (stream2, ["best_fit_dynamic", "best_fit_static", "random", "global"]),
        }
        for grid_name, (stream, strategies) in runs.items():
            for name in strategies:
                config = StrategyConfig(
                    strategy=name,
                    seed=seed,
                    frozen_layout=cfg1.to_dict() if name == "best_fit_static" else None,
                )
                report = run_strategy(config, query, stream, registry,
                                      start_tick=train_end)
                sums[grid_name].setdefault(name, []).append(report.mean_rmse)
    return {
        grid: {name: float(np.mean(vals)) for name, vals in by_strategy.items()}
        for grid, by_strategy in sums.items()
    }


def compare_strategies(datasets, strategies, query: QuerySpec, pipeline: PipelineConfig,
                       seed: int = 0, train_end: int | None = None,
                       registries: dict | None = None) -> list[dict]:
    """Strategy matrix: one row of mean RMSE per (stream, query) dataset.

    ``datasets`` entries are ``(name, stream)`` pairs evaluated under the
    shared ``query``, or ``(name, stream, query)`` triples with their own
    query region (the paper-style setup: several query datasets per grid).
    Each dataset gets one fitted registry shared by all strategies.
    """
    if train_end is None:
        train_end = 8 * query.window_len
    rows = []
    for entry in datasets:
        name, stream = entry[0], entry[1]
        dataset_query = entry[2] if len(entry) > 2 else query
        if registries is not None and name in registries:
            registry = registries[name]
        else:
            registry = build_default_registry(
                stream, dataset_query.window_len, train_end=train_end, seed=seed,
                horizon=dataset_query.horizon,
            )
        row = {"dataset": name}
        for strat in strategies:
            config = StrategyConfig(
                strategy=strat,
                pipeline=pipeline,
                seed=seed,
                frozen_layout=stream.meta if strat == "best_fit_static" else None,
            )
            report = run_strategy(config, dataset_query, stream, registry,
                                  start_tick=train_end)
            row[strat] = report.mean_rmse
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# Report serialization. Timing fields default to zero so identical runs
# produce byte-identical files; pass timings=True to keep measurements.


def record_to_dict(record: WindowReport, timings: bool = False) -> dict:
    elapsed = {
        key: (round(record.elapsed_ms.get(key, 0.0), 3) if timings else 0.0)
        for key in _TIMER_KEYS
    }
    return {
        "tick": record.tick,
        "rmse": record.rmse,
        "elapsed_ms": elapsed,
        "tiles": [
            {
                "rect": list(t.rect),
                "purity": t.purity,
                "predictor": t.predictor,
                "estimate": t.estimate,
            }
            for t in record.tiles
        ],
        "silhouette": record.silhouette,
        "k": record.k,
    }


def write_jsonl(records, path: str | Path, timings: bool = False):
    with Path(path).open("w") as fh:
        for record in records:
            fh.write(json.dumps(record_to_dict(record, timings=timings)) + "\n")


def write_compare_csv(rows, strategies, path: str | Path):
    lines = ["dataset," + ",".join(strategies)]
    for row in rows:
        lines.append(
            row["dataset"] + "," + ",".join(f"{row[s]:.6f}" for s in strategies)
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_cluster_report_csv(records, path: str | Path):
    """Per-window clustering quality and stage timings (timings are volatile)."""
    lines = ["tick,k,silhouette,represent_ms,cluster_ms,tile_count"]
    for r in records:
        sil = "" if r.silhouette is None else f"{r.silhouette:.6f}"
        k = "" if r.k is None else str(r.k)
        lines.append(
            f"{r.tick},{k},{sil},{r.elapsed_ms.get('represent', 0.0):.3f},"
            f"{r.elapsed_ms.get('cluster', 0.0):.3f},{len(r.tiles)}"
        )
    Path(path).write_text("\n".join(lines) + "\n")
