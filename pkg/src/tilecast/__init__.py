"""tilecast: adaptive per-tile predictor allocation over gridded data streams.

The pipeline partitions a query region into cluster-pure rectangular tiles
per data window and assigns each tile the registered predictor with the
lowest estimated generalization error, re-planning as the stream evolves.
"""

from .errors import (
    ConfigError,
    CoordinateError,
    FitError,
    FormatError,
    ManifestError,
    MetricUndefinedError,
    ShapeError,
    StreamError,
    TilecastError,
)
from .grid import (
    CellSeries,
    DataWindow,
    Frame,
    GridShape,
    QuerySpec,
    RegionRect,
    extract_cell_series,
    medoid_series,
    region_series,
    rmse,
    znormalize,
)
from .warping import dtw

__version__ = "0.1.0"
