"""Per-predictor error estimation from noise-inflated training data.

A predictor's training series are perturbed by Gaussian noise of growing
variance; each noise level contributes one (warping distance, observed error)
pair, and a low-degree polynomial fitted to those pairs estimates the
predictor's error at any warping distance from its training centroid.
Distances run on raw series because the estimate targets absolute error in
data units.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FitError, ShapeError
from .grid import CellSeries
from .warping import dtw

DEFAULT_NOISE_LEVELS = 10
#: Default per-level variance increment as a fraction of the data's variance.
DEFAULT_BASE_SIGMA_FRACTION = 0.05


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear variance ladder: level i carries variance ``i * base_sigma``."""

    levels: int = DEFAULT_NOISE_LEVELS
    base_sigma: float = 1.0

    def __post_init__(self):
        if self.levels < 2:
            raise ShapeError(f"need at least 2 noise levels, got {self.levels}")
        if self.base_sigma <= 0:
            raise ShapeError(f"base_sigma must be > 0, got {self.base_sigma}")

    def variance(self, level: int) -> float:
        if not 0 <= level < self.levels:
            raise ShapeError(f"level {level} outside [0, {self.levels})")
        return level * self.base_sigma

    @classmethod
    def for_data(cls, dataset: list[CellSeries], levels: int = DEFAULT_NOISE_LEVELS,
                 fraction: float = DEFAULT_BASE_SIGMA_FRACTION) -> "NoiseSchedule":
        """Scale-aware schedule: base increment is a fraction of global variance."""
        pooled = np.concatenate([s.values for s in dataset])
        var = float(pooled.var())
        if var <= 0:
            raise FitError("cannot derive a noise schedule from constant data")
        return cls(levels=levels, base_sigma=fraction * var)


@dataclass(frozen=True)
class DistanceErrorPair:
    dist: float
    err: float

    def __post_init__(self):
        if self.dist < 0 or self.err < 0:
            raise ShapeError(f"distance and error must be >= 0, got {self}")


@dataclass(frozen=True)
class ErrorEstimationFunction:
    """Polynomial error model evaluated at warping distance from the centroid.

    ``coefficients`` are ascending (constant term first); evaluations clamp
    at zero. ``cv_rmse`` is the leave-one-out residual of the chosen degree.
    """

    degree: int
    coefficients: tuple[float, ...]
    cv_rmse: float
    training_centroid: np.ndarray
    pairs: tuple[DistanceErrorPair, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if self.degree not in (1, 2):
            raise FitError(f"EEF degree must be 1 or 2, got {self.degree}")
        if len(self.coefficients) != self.degree + 1:
            raise FitError("coefficient count does not match degree")
        object.__setattr__(self, "training_centroid",
                           np.asarray(self.training_centroid, dtype=float))

    def __call__(self, dist: float) -> float:
        value = sum(c * dist**p for p, c in enumerate(self.coefficients))
        return max(float(value), 0.0)


def inject_noise(dataset: list[CellSeries], level: int, schedule: NoiseSchedule,
                 seed: int) -> list[CellSeries]:
    """Perturb every value with i.i.d. Gaussian noise of the level's variance.

    Level 0 returns the dataset unchanged. Deterministic per (seed, level).
    """
    variance = schedule.variance(level)
    if variance == 0.0:
        return list(dataset)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(level,)))
    sigma = np.sqrt(variance)
    return [
        CellSeries(s.row, s.col, s.values + rng.normal(scale=sigma, size=s.length))
        for s in dataset
    ]


def centroid_series(dataset: list[CellSeries]) -> CellSeries:
    """Pointwise mean series of the dataset."""
    if not dataset:
        raise ShapeError("centroid of an empty dataset is undefined")
    lengths = {s.length for s in dataset}
    if len(lengths) != 1:
        raise ShapeError(f"centroid requires equal-length series, got {sorted(lengths)}")
    mean = np.mean([s.values for s in dataset], axis=0)
    return CellSeries(row=dataset[0].row, col=dataset[0].col, values=mean)


def model_error_on(dataset: list[CellSeries], predictor, window_len: int,
                   horizon: int = 1) -> float:
    """Mean RMSE over every (input window -> step-ahead value) pair.

    Every length-``window_len`` slice of every series whose target ``horizon``
    steps later exists contributes one pair; the predictor is rolled forward
    recursively for horizons beyond one.
    """
    from .predictors import predict_series_batch  # deferred: predictors imports this module

    if window_len < 1 or horizon < 1:
        raise ShapeError("window_len and horizon must be >= 1")
    inputs = []
    targets = []
    for s in dataset:
        usable = s.length - window_len - horizon + 1
        for start in range(usable):
            inputs.append(s.values[start : start + window_len])
            targets.append(s.values[start + window_len + horizon - 1])
    if not inputs:
        raise ShapeError(
            f"series too short to form ({window_len} -> +{horizon}) pairs"
        )
    block = np.stack(inputs, axis=1)  # (window_len, n_pairs)
    for _ in range(horizon):
        preds = predict_series_batch(predictor, block)
        block = np.vstack([block[1:], preds[None, :]])
    errors = np.abs(preds - np.asarray(targets))
    return float(np.sqrt(np.mean(errors**2)))


def _loo_rmse(x: np.ndarray, y: np.ndarray, degree: int) -> float:
    """Leave-one-out RMSE of a least-squares polynomial of the given degree."""
    n = len(x)
    if n - 1 < degree + 1:
        return float("inf")
    residuals = []
    for leave in range(n):
        keep = np.arange(n) != leave
        coefs = np.polynomial.polynomial.polyfit(x[keep], y[keep], degree)
        pred = np.polynomial.polynomial.polyval(x[leave], coefs)
        residuals.append(pred - y[leave])
    return float(np.sqrt(np.mean(np.square(residuals))))


def fit_eef(predictor, training_dataset: list[CellSeries], schedule: NoiseSchedule,
            seed: int, window_len: int | None = None, horizon: int = 1,
            ) -> ErrorEstimationFunction:
    """Build a predictor's error estimation function from its training data.

    One (distance, error) pair per noise level: the warping distance between
    the clean and perturbed dataset centroids against the predictor's error on
    the perturbed data. Degree-1 and degree-2 least-squares fits compete by
    leave-one-out RMSE.
    """
    if schedule.levels < 3:
        raise ShapeError("EEF fitting needs at least 3 noise levels")
    if window_len is None:
        window_len = int(predictor.input_len)
    clean_centroid = centroid_series(training_dataset)

    dists = np.empty(schedule.levels)
    errs = np.empty(schedule.levels)
    for level in range(schedule.levels):
        noisy = inject_noise(training_dataset, level, schedule, seed)
        dists[level] = dtw(clean_centroid.values, centroid_series(noisy).values)
        errs[level] = model_error_on(noisy, predictor, window_len, horizon)

    if np.ptp(dists) < 1e-12:
        raise FitError("all noise-level distances coincide; regression is singular")

    # Candidate fits must be non-decreasing over [0, inf): an error model that
    # improves with distance inverts every downstream selection once tiles sit
    # beyond the calibrated range.
    best = None
    for degree in (1, 2):
        coefs = np.polynomial.polynomial.polyfit(dists, errs, degree)
        if not _monotone_nondecreasing(coefs):
            continue
        cv = _loo_rmse(dists, errs, degree)
        if best is None or cv < best[2]:
            best = (degree, coefs, cv)
    if best is None:
        # Errors trend downward in distance; fall back to a flat estimate.
        best = (1, np.array([float(np.mean(errs)), 0.0]), _loo_rmse(dists, errs, 1))
    degree, coefs, cv = best
    pairs = tuple(DistanceErrorPair(float(d), float(e)) for d, e in zip(dists, errs))
    return ErrorEstimationFunction(
        degree=degree,
        coefficients=tuple(float(c) for c in coefs),
        cv_rmse=cv,
        training_centroid=clean_centroid.values,
        pairs=pairs,
    )


def _monotone_nondecreasing(coefs: np.ndarray) -> bool:
    """True when the polynomial never decreases for any distance >= 0."""
    if len(coefs) == 2:
        return coefs[1] >= 0
    c1, c2 = coefs[1], coefs[2]
    return c2 > 0 and c1 >= 0 or (c2 == 0 and c1 >= 0)


def estimate_error(eef: ErrorEstimationFunction, target_series: CellSeries,
                   band: int | None = None) -> float:
    """Estimated error for a target series: F at its distance from the centroid."""
    dist = dtw(eef.training_centroid, target_series.values, band=band)
    return eef(dist)
