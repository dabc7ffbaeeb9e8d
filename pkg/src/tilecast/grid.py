"""Grid data model: frames, windows, per-cell series, and shared error metrics.

Coordinates are zero-based (row, col) with row 0 at the top. Timestamps are
abstract integer ticks; any wall-clock mapping lives in file metadata only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import CoordinateError, ShapeError
from .warping import dtw

#: Standard deviations below this are treated as zero by :func:`znormalize`.
DEGENERATE_STD = 1e-9


@dataclass(frozen=True)
class GridShape:
    """Extent of a regular grid: ``rows`` x ``cols`` cells."""

    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ShapeError(f"grid shape must be positive, got {self.rows}x{self.cols}")

    def contains(self, row: int, col: int) -> bool:
        return 0 <= row < self.rows and 0 <= col < self.cols


@dataclass(frozen=True)
class RegionRect:
    """Axis-aligned rectangle: inclusive top-left corner plus positive extents."""

    row0: int
    col0: int
    height: int
    width: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ShapeError(f"rect extents must be positive, got {self.height}x{self.width}")
        if self.row0 < 0 or self.col0 < 0:
            raise CoordinateError(f"rect origin must be non-negative, got ({self.row0},{self.col0})")

    @property
    def row_end(self) -> int:
        """One past the last row."""
        return self.row0 + self.height

    @property
    def col_end(self) -> int:
        return self.col0 + self.width

    @property
    def area(self) -> int:
        return self.height * self.width

    def fits_in(self, shape: GridShape) -> bool:
        return self.row_end <= shape.rows and self.col_end <= shape.cols

    def contains(self, row: int, col: int) -> bool:
        return self.row0 <= row < self.row_end and self.col0 <= col < self.col_end

    def cells(self) -> Iterable[tuple[int, int]]:
        """All (row, col) pairs in row-major order."""
        for r in range(self.row0, self.row_end):
            for c in range(self.col0, self.col_end):
                yield r, c

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.row0, self.col0, self.height, self.width)


@dataclass(frozen=True)
class Frame:
    """One observation matrix at a single tick.

    ``values`` is an (rows, cols) float array in the physical units of the
    measured variable; all entries must be finite.
    """

    shape: GridShape
    values: np.ndarray
    timestamp: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.shape.rows, self.shape.cols):
            raise ShapeError(
                f"frame values shape {values.shape} does not match grid "
                f"{self.shape.rows}x{self.shape.cols}"
            )
        if not np.all(np.isfinite(values)):
            raise ShapeError(f"frame at tick {self.timestamp} contains non-finite values")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class DataWindow:
    """The last ``n`` consecutive frames ending at some tick.

    All frames share one grid shape and carry consecutive timestamps.
    """

    frames: tuple[Frame, ...]
    start_tick: int = field(init=False)

    def __init__(self, frames: Sequence[Frame]):
        frames = tuple(frames)
        if not frames:
            raise ShapeError("a data window needs at least one frame")
        shape = frames[0].shape
        for prev, cur in zip(frames, frames[1:]):
            if cur.shape != shape:
                raise ShapeError("all frames in a window must share one grid shape")
            if cur.timestamp != prev.timestamp + 1:
                raise ShapeError(
                    f"frame timestamps must be consecutive, got {prev.timestamp} "
                    f"then {cur.timestamp}"
                )
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "start_tick", frames[0].timestamp)

    @property
    def shape(self) -> GridShape:
        return self.frames[0].shape

    @property
    def length(self) -> int:
        return len(self.frames)

    @property
    def end_tick(self) -> int:
        return self.frames[-1].timestamp

    def stacked(self) -> np.ndarray:
        """All frames as one (n, rows, cols) array."""
        return np.stack([f.values for f in self.frames])

    def region_block(self, region: RegionRect) -> np.ndarray:
        """The (n, height, width) sub-block covered by ``region``."""
        if not region.fits_in(self.shape):
            raise CoordinateError(f"region {region} exceeds grid {self.shape}")
        return self.stacked()[:, region.row0 : region.row_end, region.col0 : region.col_end]


@dataclass(frozen=True)
class CellSeries:
    """The univariate series of one cell across a window."""

    row: int
    col: int
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    @property
    def length(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class QuerySpec:
    """A predictive query: region of interest, forecast horizon, window length."""

    region: RegionRect
    horizon: int = 1
    window_len: int = 24

    def __post_init__(self):
        if self.horizon < 1:
            raise ShapeError(f"horizon must be >= 1, got {self.horizon}")
        if self.window_len < 2:
            raise ShapeError(f"window length must be >= 2, got {self.window_len}")


def extract_cell_series(window: DataWindow, row: int, col: int) -> CellSeries:
    """The chronological value sequence of one cell across ``window``."""
    if not window.shape.contains(row, col):
        raise CoordinateError(f"cell ({row},{col}) outside grid {window.shape}")
    values = np.array([f.values[row, col] for f in window.frames])
    return CellSeries(row=row, col=col, values=values)


def region_series(window: DataWindow, region: RegionRect) -> list[CellSeries]:
    """Cell series for every cell of ``region``, in row-major order."""
    block = window.region_block(region)
    out = []
    for i in range(region.height):
        for j in range(region.width):
            out.append(CellSeries(region.row0 + i, region.col0 + j, block[:, i, j]))
    return out


def znormalize(series: np.ndarray) -> np.ndarray:
    """Center to mean 0 and scale to population standard deviation 1.

    Series whose standard deviation falls below ``DEGENERATE_STD`` map to the
    all-zero sequence instead of dividing by (near) zero.
    """
    values = np.asarray(series, dtype=float)
    if values.size == 0:
        raise ShapeError("cannot normalize an empty series")
    std = values.std()
    if std < DEGENERATE_STD:
        return np.zeros_like(values)
    return (values - values.mean()) / std


def medoid_series(series_set: Sequence[CellSeries], metric: str = "euclidean") -> CellSeries:
    """The member minimizing the summed distance to all other members.

    Ties break toward the lowest (row, col) in lexicographic order, making the
    result independent of input ordering.
    """
    if not series_set:
        raise ShapeError("medoid of an empty set is undefined")
    lengths = {s.length for s in series_set}
    if len(lengths) != 1:
        raise ShapeError(f"medoid requires equal-length series, got lengths {sorted(lengths)}")
    if len(series_set) == 1:
        return series_set[0]

    n = len(series_set)
    if metric == "euclidean":
        stacked = np.stack([s.values for s in series_set])
        sq = np.sum(stacked**2, axis=1)
        dists = np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2.0 * stacked @ stacked.T, 0.0))
        sums = dists.sum(axis=1)
    elif metric == "dtw":
        sums = np.zeros(n)
        for i in range(n):
            for j in range(i + 1, n):
                d = dtw(series_set[i].values, series_set[j].values)
                sums[i] += d
                sums[j] += d
    else:
        raise ShapeError(f"unknown medoid metric {metric!r}")

    best = min(range(n), key=lambda i: (sums[i], series_set[i].row, series_set[i].col))
    return series_set[best]


def rmse(pred: Frame | np.ndarray, truth: Frame | np.ndarray) -> float:
    """Root mean square of cellwise differences."""
    a = pred.values if isinstance(pred, Frame) else np.asarray(pred, dtype=float)
    b = truth.values if isinstance(truth, Frame) else np.asarray(truth, dtype=float)
    if a.shape != b.shape:
        raise ShapeError(f"rmse shape mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.mean((a - b) ** 2)))
