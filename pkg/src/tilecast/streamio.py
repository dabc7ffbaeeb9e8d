"""Gridded stream files: a minimal binary format plus CSV import.

Binary layout: magic ``STG1``, then three little-endian uint32 header fields
(rows M, cols N, ticks T), then T row-major frames of float32 cells. A
``<name>.json`` sidecar written by the synthetic generator carries the
generating layout; it is optional and never required to read the frames.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import FormatError, ShapeError
from .grid import DataWindow, Frame, GridShape

MAGIC = b"STG1"
HEADER = struct.Struct("<4sIII")


@dataclass
class GriddedStream:
    """An in-memory gridded stream: (ticks, rows, cols) float32 values.

    ``meta`` holds optional provenance (e.g. the synthetic generator config
    as a plain dict); it travels in the sidecar, not the binary payload.
    """

    values: np.ndarray
    meta: dict | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 3:
            raise ShapeError(f"stream values must be (ticks, rows, cols), got {values.shape}")
        self.values = values

    @property
    def ticks(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> GridShape:
        return GridShape(self.values.shape[1], self.values.shape[2])

    def frame(self, tick: int) -> Frame:
        return Frame(shape=self.shape, values=self.values[tick].astype(float), timestamp=tick)

    def frames(self, start: int = 0, end: int | None = None) -> Iterator[Frame]:
        end = self.ticks if end is None else end
        for t in range(start, end):
            yield self.frame(t)

    def window(self, start: int, length: int) -> DataWindow:
        if start < 0 or start + length > self.ticks:
            raise ShapeError(f"window [{start}, {start + length}) outside stream of {self.ticks}")
        return DataWindow([self.frame(t) for t in range(start, start + length)])


def write_stream(stream: GriddedStream, path: str | Path):
    """Write the binary file, plus the sidecar when metadata is present."""
    path = Path(path)
    t, m, n = stream.values.shape
    payload = stream.values.astype("<f4").tobytes(order="C")
    path.write_bytes(HEADER.pack(MAGIC, m, n, t) + payload)
    if stream.meta is not None:
        sidecar_path(path).write_text(json.dumps(stream.meta, indent=2) + "\n")


def sidecar_path(path: str | Path) -> Path:
    return Path(str(path) + ".json")


def read_stream(path: str | Path) -> GriddedStream:
    """Read a binary stream file; attaches sidecar metadata when present."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(raw)} bytes)", offset=len(raw))
    magic, m, n, t = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}", offset=0)
    expected = HEADER.size + 4 * m * n * t
    if len(raw) != expected:
        raise FormatError(
            f"{path}: payload ends at byte {len(raw)}, expected {expected}",
            offset=min(len(raw), expected),
        )
    values = np.frombuffer(raw, dtype="<f4", offset=HEADER.size).reshape(t, m, n)
    meta = None
    sidecar = sidecar_path(path)
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
    return GriddedStream(values=values.copy(), meta=meta)


def import_csv(path: str | Path, rows: int) -> GriddedStream:
    """Read frames from CSV: T*M lines of N comma-separated values.

    ``rows`` is the grid row count M; the column count comes from the first
    line and the tick count from the total line count, which must be an exact
    multiple of M.
    """
    path = Path(path)
    if rows < 1:
        raise FormatError("row count must be >= 1")
    data = []
    cols = None
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if cols is None:
                cols = len(parts)
            elif len(parts) != cols:
                raise FormatError(f"{path}:{lineno}: expected {cols} values, got {len(parts)}")
            try:
                data.append([float(p) for p in parts])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    if not data:
        raise FormatError(f"{path}: no data rows")
    if len(data) % rows != 0:
        raise FormatError(
            f"{path}: {len(data)} lines is not a whole number of {rows}-row frames"
        )
    ticks = len(data) // rows
    values = np.asarray(data, dtype=np.float32).reshape(ticks, rows, cols)
    return GriddedStream(values=values)


def load_stream(path: str | Path, csv_rows: int | None = None) -> GriddedStream:
    """Open either format by extension: ``.csv`` needs the grid row count."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        if csv_rows is None:
            raise FormatError(f"{path}: CSV input needs the grid row count")
        return import_csv(path, csv_rows)
    return read_stream(path)
