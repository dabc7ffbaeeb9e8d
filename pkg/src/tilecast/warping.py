"""Dynamic time warping with unit steps and optional Sakoe-Chiba banding."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


def dtw(a, b, band: int | None = None) -> float:
    """Minimal cumulative alignment cost between two sequences.

    Classic dynamic program: local cost ``|a_i - b_j|`` with match, insert and
    delete steps, full warping window by default. ``band`` restricts the path
    to ``|i - j| <= band`` (Sakoe-Chiba); a band narrower than the length
    difference leaves the end cell unreachable and yields ``inf``.
    """
    x = np.asarray(a, dtype=float).ravel()
    y = np.asarray(b, dtype=float).ravel()
    n, m = len(x), len(y)
    if n == 0 or m == 0:
        raise ShapeError("dtw requires non-empty sequences")
    if band is not None and band < 0:
        raise ShapeError(f"band radius must be >= 0, got {band}")

    inf = float("inf")
    xs = x.tolist()
    ys = y.tolist()
    prev = [inf] * (m + 1)
    cur = [inf] * (m + 1)
    prev[0] = 0.0
    for i in range(1, n + 1):
        cur[0] = inf
        if band is None:
            lo, hi = 1, m
        else:
            lo = max(1, i - band)
            hi = min(m, i + band)
            for j in range(1, lo):
                cur[j] = inf
            for j in range(hi + 1, m + 1):
                cur[j] = inf
        xi = xs[i - 1]
        for j in range(lo, hi + 1):
            d = xi - ys[j - 1]
            if d < 0.0:
                d = -d
            best = prev[j]
            if prev[j - 1] < best:
                best = prev[j - 1]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = d + best
        prev, cur = cur, prev
        prev[0] = inf
    return prev[m]


def dtw_brute(a, b) -> float:
    """Exhaustive minimal-cost alignment by path enumeration.

    Independent oracle for :func:`dtw`; exponential, only usable for very
    short sequences.
    """
    x = np.asarray(a, dtype=float).ravel()
    y = np.asarray(b, dtype=float).ravel()
    n, m = len(x), len(y)
    if n == 0 or m == 0:
        raise ShapeError("dtw requires non-empty sequences")

    best = [float("inf")]

    def walk(i: int, j: int, cost: float):
        cost = cost + abs(x[i] - y[j])
        if i == n - 1 and j == m - 1:
            if cost < best[0]:
                best[0] = cost
            return
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, cost)
        if i + 1 < n:
            walk(i + 1, j, cost)
        if j + 1 < m:
            walk(i, j + 1, cost)

    walk(0, 0, 0.0)
    return best[0]
