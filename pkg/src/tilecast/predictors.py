"""Predictor zoo behind one uniform interface, plus the model registry.

Every kind maps a (input_len, rows, cols) block to the next (rows, cols)
frame and is pure at inference. All current kinds operate cell by cell, so
inference reduces to a vectorized kernel over flattened series; spatially
coupled kinds can be added later behind the same interface.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .eef import ErrorEstimationFunction
from .errors import ConfigError, FitError, ManifestError, ShapeError
from .grid import CellSeries, RegionRect

KINDS = ("persistence", "mean", "ar", "linear_trend", "sine_fit", "pooled_global")

_SINE_PINV_CACHE: dict[tuple[float, int], np.ndarray] = {}


@dataclass(frozen=True)
class PredictorMeta:
    """Frozen description of one registered predictor."""

    id: str
    kind: str
    input_rows: int
    input_cols: int
    input_len: int
    params: dict = field(default_factory=dict)
    training_region: RegionRect | None = None
    training_interval: tuple[int, int] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown predictor kind {self.kind!r}")
        if min(self.input_rows, self.input_cols, self.input_len) < 1:
            raise ShapeError(f"predictor {self.id}: input dims must be >= 1")


def _sine_designs(frequency: float, length: int) -> tuple[np.ndarray, np.ndarray]:
    key = (float(frequency), length)
    if key not in _SINE_PINV_CACHE:
        t = np.arange(length)
        design = np.column_stack(
            [np.sin(2 * np.pi * frequency * t), np.cos(2 * np.pi * frequency * t), np.ones(length)]
        )
        _SINE_PINV_CACHE[key] = np.linalg.pinv(design)
    pinv = _SINE_PINV_CACHE[key]
    tn = length
    nxt = np.array([np.sin(2 * np.pi * frequency * tn), np.cos(2 * np.pi * frequency * tn), 1.0])
    return pinv, nxt


def predict_series_batch(meta: PredictorMeta, block: np.ndarray) -> np.ndarray:
    """One-step prediction for many series at once: (input_len, n) -> (n,)."""
    block = np.asarray(block, dtype=float)
    if block.ndim != 2 or block.shape[0] != meta.input_len:
        raise ShapeError(
            f"predictor {meta.id}: batch block must be ({meta.input_len}, n), got {block.shape}"
        )
    j = meta.input_len
    kind = meta.kind
    if kind == "persistence":
        return block[-1].copy()
    if kind == "mean":
        return block.mean(axis=0)
    if kind in ("ar", "pooled_global"):
        order = int(meta.params["order"])
        if order >= j:
            raise ShapeError(f"predictor {meta.id}: AR order {order} needs input longer than {order}")
        out = np.full(block.shape[1], float(meta.params["intercept"]))
        for i, coef in enumerate(meta.params["coefficients"], start=1):
            out += float(coef) * block[j - i]
        return out
    if kind == "linear_trend":
        t = np.arange(j)
        tc = t - t.mean()
        denom = float((tc**2).sum())
        slope = (tc @ block) / denom
        intercept = block.mean(axis=0) - slope * t.mean()
        return intercept + slope * j
    if kind == "sine_fit":
        pinv, nxt = _sine_designs(float(meta.params["frequency"]), j)
        return nxt @ (pinv @ block)
    raise ConfigError(f"unknown predictor kind {kind!r}")


def predict(meta: PredictorMeta, block: np.ndarray) -> np.ndarray:
    """One-step-ahead (rows, cols) prediction from a (input_len, rows, cols) block."""
    block = np.asarray(block, dtype=float)
    expected = (meta.input_len, meta.input_rows, meta.input_cols)
    if block.shape != expected:
        raise ShapeError(f"predictor {meta.id}: input shape {block.shape} != {expected}")
    if not np.all(np.isfinite(block)):
        raise ShapeError(f"predictor {meta.id}: input contains non-finite values")
    flat = block.reshape(meta.input_len, -1)
    return predict_series_batch(meta, flat).reshape(meta.input_rows, meta.input_cols)


def fit_predictor(kind: str, training_data: list[CellSeries], hyperparams: dict) -> PredictorMeta:
    """Freeze a predictor's parameters from training series.

    ``hyperparams`` carries the identity and geometry ("id", "input_rows",
    "input_cols", "input_len", optional "training_region" /
    "training_interval") plus kind-specific settings ("order" for the
    autoregressive kinds, "frequency" for sinusoids). Refitting on identical
    data reproduces identical parameters.
    """
    if kind not in KINDS:
        raise ConfigError(f"unknown predictor kind {kind!r}")
    if not training_data:
        raise ShapeError("fit_predictor needs a non-empty training dataset")
    meta = PredictorMeta(
        id=hyperparams["id"],
        kind=kind,
        input_rows=int(hyperparams.get("input_rows", 1)),
        input_cols=int(hyperparams.get("input_cols", 1)),
        input_len=int(hyperparams["input_len"]),
        params={},
        training_region=hyperparams.get("training_region"),
        training_interval=hyperparams.get("training_interval"),
    )

    if kind in ("ar", "pooled_global"):
        order = int(hyperparams.get("order", 3))
        params = _fit_ar(training_data, order, meta.id)
    elif kind == "linear_trend":
        params = _fit_line(training_data)
    elif kind == "sine_fit":
        params = _fit_sine(training_data, float(hyperparams["frequency"]))
    else:
        params = {}
    return replace(meta, params=params)


def _fit_ar(training_data: list[CellSeries], order: int, pid: str) -> dict:
    rows = []
    targets = []
    for s in training_data:
        v = s.values
        for t in range(order, len(v)):
            rows.append(np.concatenate([[1.0], v[t - order : t][::-1]]))
            targets.append(v[t])
    if len(rows) < order + 1:
        raise FitError(f"predictor {pid}: too little data for AR({order})")
    design = np.stack(rows)
    coefs, _, rank, _ = np.linalg.lstsq(design, np.asarray(targets), rcond=None)
    if rank < order + 1:
        raise FitError(f"predictor {pid}: rank-deficient AR({order}) design")
    return {
        "order": order,
        "intercept": float(coefs[0]),
        "coefficients": [float(c) for c in coefs[1:]],
    }


def _fit_line(training_data: list[CellSeries]) -> dict:
    t = np.concatenate([np.arange(s.length) for s in training_data]).astype(float)
    y = np.concatenate([s.values for s in training_data])
    tc = t - t.mean()
    denom = float((tc**2).sum())
    if denom == 0:
        raise FitError("linear trend fit needs more than one time point")
    slope = float((tc @ (y - y.mean())) / denom)
    intercept = float(y.mean() - slope * t.mean())
    return {"slope": slope, "intercept": intercept}


def _fit_sine(training_data: list[CellSeries], frequency: float) -> dict:
    t = np.concatenate([np.arange(s.length) for s in training_data]).astype(float)
    y = np.concatenate([s.values for s in training_data])
    design = np.column_stack(
        [np.sin(2 * np.pi * frequency * t), np.cos(2 * np.pi * frequency * t), np.ones_like(t)]
    )
    coefs, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < 3:
        raise FitError("rank-deficient sinusoid design; check the declared frequency")
    residual = float(np.sqrt(np.mean((design @ coefs - y) ** 2)))
    return {
        "frequency": float(frequency),
        "amp_sin": float(coefs[0]),
        "amp_cos": float(coefs[1]),
        "offset": float(coefs[2]),
        "fit_residual": residual,
    }


# ---------------------------------------------------------------------------
# Registry and manifest I/O.


@dataclass
class RegistryEntry:
    meta: PredictorMeta
    eef: ErrorEstimationFunction | None = None


@dataclass
class ModelRegistry:
    """Ordered collection of predictors; ids are unique."""

    entries: list[RegistryEntry] = field(default_factory=list)

    def add(self, meta: PredictorMeta, eef: ErrorEstimationFunction | None = None):
        if any(e.meta.id == meta.id for e in self.entries):
            raise ManifestError(f"duplicate predictor id {meta.id!r}")
        self.entries.append(RegistryEntry(meta=meta, eef=eef))

    def get(self, pid: str) -> RegistryEntry:
        for e in self.entries:
            if e.meta.id == pid:
                return e
        raise ConfigError(f"no predictor with id {pid!r}")

    def ids(self) -> list[str]:
        return [e.meta.id for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


_ENTRY_KEYS = {"id", "kind", "input_rows", "input_cols", "input_len", "params",
               "training_region", "training_interval", "eef"}
_REGION_KEYS = {"row0", "col0", "height", "width"}
_EEF_KEYS = {"degree", "coefficients", "cv_rmse", "centroid"}


def _check_keys(obj: dict, allowed: set[str], where: str):
    unknown = set(obj) - allowed
    if unknown:
        raise ManifestError(f"unknown key {sorted(unknown)[0]!r} in {where}")
    missing = allowed - set(obj)
    if missing:
        raise ManifestError(f"missing key {sorted(missing)[0]!r} in {where}")


def registry_load(path: str | Path) -> ModelRegistry:
    """Read a JSON model manifest; rejects unknown keys and duplicate ids."""
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise ManifestError("manifest top level must be an array of predictor entries")
    registry = ModelRegistry()
    for i, item in enumerate(raw):
        where = f"entry {i}"
        if not isinstance(item, dict):
            raise ManifestError(f"{where} must be an object")
        _check_keys(item, _ENTRY_KEYS, where)
        region = None
        if item["training_region"] is not None:
            _check_keys(item["training_region"], _REGION_KEYS, f"{where}.training_region")
            region = RegionRect(**{k: int(v) for k, v in item["training_region"].items()})
        interval = None
        if item["training_interval"] is not None:
            start, end = item["training_interval"]
            interval = (int(start), int(end))
        try:
            meta = PredictorMeta(
                id=str(item["id"]),
                kind=str(item["kind"]),
                input_rows=int(item["input_rows"]),
                input_cols=int(item["input_cols"]),
                input_len=int(item["input_len"]),
                params=item["params"],
                training_region=region,
                training_interval=interval,
            )
        except (ConfigError, ShapeError, TypeError, ValueError) as exc:
            raise ManifestError(f"{where}: {exc}") from exc
        eef = None
        if item["eef"] is not None:
            _check_keys(item["eef"], _EEF_KEYS, f"{where}.eef")
            eef = ErrorEstimationFunction(
                degree=int(item["eef"]["degree"]),
                coefficients=tuple(float(c) for c in item["eef"]["coefficients"]),
                cv_rmse=float(item["eef"]["cv_rmse"]),
                training_centroid=np.asarray(item["eef"]["centroid"], dtype=float),
            )
        registry.add(meta, eef)
    return registry


def registry_save(registry: ModelRegistry, path: str | Path):
    """Write the canonical JSON manifest; load/save round-trips byte-equal."""
    out = []
    for entry in registry:
        meta = entry.meta
        item = {
            "id": meta.id,
            "kind": meta.kind,
            "input_rows": meta.input_rows,
            "input_cols": meta.input_cols,
            "input_len": meta.input_len,
            "params": meta.params,
            "training_region": (
                None
                if meta.training_region is None
                else {
                    "row0": meta.training_region.row0,
                    "col0": meta.training_region.col0,
                    "height": meta.training_region.height,
                    "width": meta.training_region.width,
                }
            ),
            "training_interval": (
                None if meta.training_interval is None else list(meta.training_interval)
            ),
            "eef": (
                None
                if entry.eef is None
                else {
                    "degree": entry.eef.degree,
                    "coefficients": list(entry.eef.coefficients),
                    "cv_rmse": entry.eef.cv_rmse,
                    "centroid": [float(v) for v in entry.eef.training_centroid],
                }
            ),
        }
        out.append(item)
    Path(path).write_text(json.dumps(out, indent=2) + "\n")
