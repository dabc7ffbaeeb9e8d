"""Low-dimensional series representations: random sketches and GLD fits.

Two interchangeable reductions feed the clustering stage: dot products of the
normalized series against seeded Rademacher vectors (a sketch whose euclidean
geometry approximates normalized-series distances), and the four parameters of
a generalized lambda distribution fitted to the series' empirical quantiles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import FitError, ShapeError
from .grid import CellSeries, DataWindow, RegionRect, znormalize

#: Probability used for the outer percentile statistics of the GLD fit.
GLD_TAIL_P = 0.1
GLD_SOLVER_TOL = 1e-6
GLD_MAX_ITER = 200


@dataclass(frozen=True)
class SketchBasis:
    """`b` seeded Rademacher vectors of length `w`; regenerable from the seed."""

    b: int
    w: int
    vectors: np.ndarray
    seed: int

    def __post_init__(self):
        if self.b < 1 or self.w < 1:
            raise ShapeError(f"basis dims must be positive, got b={self.b}, w={self.w}")
        if self.vectors.shape != (self.b, self.w):
            raise ShapeError(f"basis vectors shape {self.vectors.shape} != ({self.b},{self.w})")


@dataclass(frozen=True)
class SketchVector:
    components: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "components", np.asarray(self.components, dtype=float))


@dataclass(frozen=True)
class GldParams:
    """Generalized lambda parameters: location, scale, shape, tail."""

    lambda1: float
    lambda2: float
    lambda3: float
    lambda4: float

    def __post_init__(self):
        vals = (self.lambda1, self.lambda2, self.lambda3, self.lambda4)
        if not all(np.isfinite(vals)):
            raise FitError(f"non-finite GLD parameters {vals}")
        if self.lambda2 == 0:
            raise FitError("GLD scale parameter must be nonzero")

    def as_array(self) -> np.ndarray:
        return np.array([self.lambda1, self.lambda2, self.lambda3, self.lambda4])


def make_sketch_basis(b: int, w: int, seed: int) -> SketchBasis:
    """Draw `b` random vectors with i.i.d. +-1 entries from a seeded generator."""
    if b < 1 or w < 1:
        raise ShapeError(f"basis dims must be positive, got b={b}, w={w}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    vectors = rng.integers(0, 2, size=(b, w)).astype(float) * 2.0 - 1.0
    return SketchBasis(b=b, w=w, vectors=vectors, seed=seed)


def parcorr_sketch(series: CellSeries, basis: SketchBasis) -> SketchVector:
    """Project the normalized series onto the basis, scaled by 1/sqrt(b).

    The scaling makes sketch-space euclidean distance an unbiased estimate of
    normalized-series distance, comparable across basis sizes.
    """
    if series.length != basis.w:
        raise ShapeError(f"series length {series.length} != basis length {basis.w}")
    normalized = znormalize(series.values)
    return SketchVector(basis.vectors @ normalized / np.sqrt(basis.b))


def _gld_s(p: float, lam3: np.ndarray, lam4: np.ndarray):
    """Shape term of the RS quantile function: p^l3 - (1-p)^l4."""
    return np.power(p, lam3) - np.power(1.0 - p, lam4)


def _gld_ratio_residuals(lam: np.ndarray, rho3: float, rho4: float):
    lam3, lam4 = lam
    lo = _gld_s(GLD_TAIL_P, lam3, lam4)
    hi = _gld_s(1.0 - GLD_TAIL_P, lam3, lam4)
    mid = _gld_s(0.5, lam3, lam4)
    q1 = _gld_s(0.25, lam3, lam4)
    q3 = _gld_s(0.75, lam3, lam4)
    denom_3 = hi - mid
    denom_4 = hi - lo
    with np.errstate(divide="ignore", invalid="ignore"):
        r3 = (mid - lo) / denom_3 - rho3
        r4 = (q3 - q1) / denom_4 - rho4
    return np.array([np.nan_to_num(r3, nan=1e6), np.nan_to_num(r4, nan=1e6)])


def gld_quantile(params: GldParams, u) -> np.ndarray:
    """Quantile function Q(u) of the fitted distribution."""
    u = np.asarray(u, dtype=float)
    return params.lambda1 + _gld_s(u, params.lambda3, params.lambda4) / params.lambda2


def gld_fit(series: CellSeries) -> GldParams:
    """Fit lambda parameters by matching four sample percentile statistics.

    The two quantile-ratio statistics (which depend only on the shape and tail
    parameters) are solved by Newton-type refinement from the best seed on a
    coarse (lambda3, lambda4) grid; location and scale then follow in closed
    form. Raises :class:`FitError` on degenerate spread or non-convergence.
    """
    values = np.asarray(series.values, dtype=float)
    if len(values) < 8:
        raise ShapeError(f"GLD fit needs at least 8 samples, got {len(values)}")
    if values.std() < 1e-12:
        raise FitError("GLD fit undefined for (near-)constant series")

    q = np.quantile(values, [GLD_TAIL_P, 0.25, 0.5, 0.75, 1.0 - GLD_TAIL_P])
    lo, q1, med, q3, hi = q
    rho1 = med
    rho2 = hi - lo
    if rho2 <= 0 or hi - med <= 0:
        raise FitError("sample quantiles too degenerate for a percentile fit")
    rho3 = (med - lo) / (hi - med)
    rho4 = (q3 - q1) / rho2

    grid = np.geomspace(0.02, 5.0, 24)
    g3, g4 = np.meshgrid(grid, grid, indexing="ij")
    res = _gld_ratio_residuals(np.stack([g3.ravel(), g4.ravel()]), rho3, rho4)
    seed_idx = int(np.argmin(res[0] ** 2 + res[1] ** 2))
    x0 = np.array([g3.ravel()[seed_idx], g4.ravel()[seed_idx]])

    sol = optimize.root(
        _gld_ratio_residuals,
        x0,
        args=(rho3, rho4),
        method="hybr",
        options={"maxfev": GLD_MAX_ITER * 2},
    )
    residual = float(np.max(np.abs(sol.fun)))
    if residual > GLD_SOLVER_TOL:
        raise FitError(
            f"GLD percentile solve did not converge (residual {residual:.3g})",
            residual=residual,
        )
    lam3, lam4 = (float(v) for v in sol.x)
    lam2 = (_gld_s(1.0 - GLD_TAIL_P, lam3, lam4) - _gld_s(GLD_TAIL_P, lam3, lam4)) / rho2
    if lam2 == 0 or not np.isfinite(lam2):
        raise FitError("GLD scale collapsed during fit")
    lam1 = rho1 - _gld_s(0.5, lam3, lam4) / lam2
    return GldParams(lambda1=float(lam1), lambda2=float(lam2), lambda3=lam3, lambda4=lam4)


class ParCorrReducer:
    """Reduce every cell of a window region to its sketch vector.

    One basis per series length is built lazily from the configured seed and
    reused, so repeated windows of equal length share identical projections.
    """

    def __init__(self, b: int = 8, seed: int = 0):
        if b < 1:
            raise ShapeError(f"sketch size must be >= 1, got {b}")
        self.b = b
        self.seed = seed
        self._bases: dict[int, SketchBasis] = {}

    def basis_for(self, w: int) -> SketchBasis:
        if w not in self._bases:
            self._bases[w] = make_sketch_basis(self.b, w, self.seed)
        return self._bases[w]

    def reduce(self, window: DataWindow, region: RegionRect) -> np.ndarray:
        """(cells, b) matrix of sketches, cells in row-major region order."""
        basis = self.basis_for(window.length)
        block = window.region_block(region).reshape(window.length, -1)
        mean = block.mean(axis=0)
        std = block.std(axis=0)
        centered = block - mean
        safe = np.where(std < 1e-9, 1.0, std)
        normalized = np.where(std < 1e-9, 0.0, centered / safe)
        return (basis.vectors @ normalized).T / np.sqrt(basis.b)


class GldReducer:
    """Reduce every cell to its four fitted lambda parameters."""

    def reduce(self, window: DataWindow, region: RegionRect) -> np.ndarray:
        block = window.region_block(region).reshape(window.length, -1)
        out = np.empty((block.shape[1], 4))
        for idx in range(block.shape[1]):
            params = gld_fit(CellSeries(0, 0, block[:, idx]))
            out[idx] = params.as_array()
        return out
