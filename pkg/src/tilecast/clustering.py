"""Spatial clustering of reduced cell representations.

Three interchangeable strategies label the cells of a query region per
window: ``static`` clusters once and only re-assigns afterwards, ``dynamic``
re-clusters every window with silhouette-guided choice of k, and ``stream``
maintains an incremental clustering-feature tree and clusters its entries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ConfigError, MetricUndefinedError, ShapeError
from .grid import DataWindow, GridShape, RegionRect
from .representation import ParCorrReducer

KMEANS_TOL = 1e-6
KMEANS_MAX_ITER = 100
KMEANS_RESTARTS = 10


@dataclass(frozen=True)
class ClusterLabels:
    """Per-cell cluster ids for a rectangular region.

    ``labels`` is an integer matrix in the region's local frame (entry (0,0)
    is the region's top-left cell); ids are dense in ``[0, k)`` and every id
    occurs at least once.
    """

    shape: GridShape
    labels: np.ndarray
    k: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int)
        if labels.shape != (self.shape.rows, self.shape.cols):
            raise ShapeError(f"label matrix {labels.shape} != shape {self.shape}")
        present = np.unique(labels)
        if present.min() < 0 or present.max() >= self.k or len(present) != self.k:
            raise ShapeError(f"labels must cover [0, {self.k}) densely, found {present}")
        object.__setattr__(self, "labels", labels)


@dataclass(frozen=True)
class BirchConfig:
    threshold: float = 0.5
    branching: int = 8
    max_leaves: int = 64

    def __post_init__(self):
        if self.threshold <= 0:
            raise ConfigError(f"birch threshold must be > 0, got {self.threshold}")
        if self.branching < 2:
            raise ConfigError(f"birch branching must be >= 2, got {self.branching}")
        if self.max_leaves < 2:
            raise ConfigError(f"birch max_leaves must be >= 2, got {self.max_leaves}")


@dataclass(frozen=True)
class ClusteringConfig:
    strategy: str = "dynamic"
    k_min: int = 2
    k_max: int = 5
    fixed_k: int | None = None
    seed: int = 0
    recluster_every: int = 1
    birch: BirchConfig = field(default_factory=BirchConfig)

    def __post_init__(self):
        if self.strategy not in ("static", "dynamic", "stream"):
            raise ConfigError(f"unknown clustering strategy {self.strategy!r}")
        if not (2 <= self.k_min <= self.k_max):
            raise ConfigError(f"need 2 <= k_min <= k_max, got [{self.k_min}, {self.k_max}]")
        if self.recluster_every < 1:
            raise ConfigError("recluster_every must be >= 1")


def _as_points(points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        pts = points
    else:
        pts = np.stack([getattr(p, "components", p) for p in points])
    pts = np.asarray(pts, dtype=float)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ShapeError("points must form a non-empty 2-D array")
    return pts


def kmeans(points, k: int, seed: int,
           restarts: int = KMEANS_RESTARTS) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm from k-means++ seeding; deterministic given seed.

    The best of ``restarts`` seeded initializations (by within-cluster sum of
    squares) is returned. Each run iterates until the largest centroid
    movement drops below ``KMEANS_TOL`` or ``KMEANS_MAX_ITER`` passes; an
    emptied cluster is reseeded at the point farthest from its assigned
    centroid, keeping k constant.
    """
    pts = _as_points(points)
    n = pts.shape[0]
    if not 1 <= k <= n:
        raise ConfigError(f"k must be in [1, {n}], got {k}")

    best = None
    for run in range(max(restarts, 1)):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(run,)))
        assign, centroids, inertia = _lloyd(pts, k, rng)
        if best is None or inertia < best[2]:
            best = (assign, centroids, inertia)
    return best[0], best[1]


def _lloyd(pts: np.ndarray, k: int, rng: np.random.Generator):
    n = pts.shape[0]
    centroids = _kmeans_pp(pts, k, rng)
    for _ in range(KMEANS_MAX_ITER):
        dists = cdist(pts, centroids)
        assign = dists.argmin(axis=1)
        assigned_dist = dists[np.arange(n), assign]
        farthest = iter(np.argsort(-assigned_dist))
        new_centroids = centroids.copy()
        for j in range(k):
            members = assign == j
            if members.any():
                new_centroids[j] = pts[members].mean(axis=0)
            else:
                new_centroids[j] = pts[int(next(farthest))]
        movement = np.linalg.norm(new_centroids - centroids, axis=1).max()
        centroids = new_centroids
        if movement < KMEANS_TOL:
            break
    dists = cdist(pts, centroids)
    assign = dists.argmin(axis=1)
    inertia = float((dists[np.arange(n), assign] ** 2).sum())
    return assign, centroids, inertia


def _kmeans_pp(pts: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = pts.shape[0]
    centroids = np.empty((k, pts.shape[1]))
    centroids[0] = pts[rng.integers(n)]
    closest = cdist(pts, centroids[:1]).ravel() ** 2
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            centroids[j] = pts[rng.integers(n)]
        else:
            centroids[j] = pts[rng.choice(n, p=closest / total)]
        closest = np.minimum(closest, cdist(pts, centroids[j : j + 1]).ravel() ** 2)
    return centroids


def silhouette(points, assignments) -> float:
    """Mean silhouette coefficient over all points.

    Coefficient per point: (b - a) / max(a, b) with a the mean intra-cluster
    distance and b the smallest mean distance to another cluster; points in
    singleton clusters, and points with a = b = 0, contribute 0.
    """
    pts = _as_points(points)
    assign = np.asarray(assignments, dtype=int)
    if len(assign) != pts.shape[0]:
        raise ShapeError("one assignment per point required")
    if pts.shape[0] < 2:
        raise MetricUndefinedError("silhouette needs at least 2 points")
    labels = np.unique(assign)
    if len(labels) < 2:
        raise MetricUndefinedError("silhouette undefined for a single cluster")

    dists = cdist(pts, pts)
    sizes = {int(c): int((assign == c).sum()) for c in labels}
    scores = np.zeros(pts.shape[0])
    for c in labels:
        members = assign == c
        if sizes[int(c)] == 1:
            continue  # singleton contributes 0
        a = dists[members][:, members].sum(axis=1) / (sizes[int(c)] - 1)
        b = np.full(int(members.sum()), np.inf)
        for other in labels:
            if other == c:
                continue
            b = np.minimum(b, dists[members][:, assign == other].mean(axis=1))
        denom = np.maximum(a, b)
        with np.errstate(invalid="ignore"):
            s = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
        scores[members] = s
    return float(scores.mean())


def select_k(points, config: ClusteringConfig) -> int:
    """Silhouette-maximizing k over ``[k_min, k_max]``; ties take the smallest.

    A configured ``fixed_k`` bypasses the search entirely.
    """
    if config.fixed_k is not None:
        return config.fixed_k
    pts = _as_points(points)
    if config.k_max > pts.shape[0]:
        raise ConfigError(f"k_max {config.k_max} exceeds point count {pts.shape[0]}")
    best_k = None
    best_score = -np.inf
    for k in range(config.k_min, config.k_max + 1):
        assign, _ = kmeans(pts, k, config.seed)
        score = silhouette(pts, assign)
        if score > best_score:
            best_k, best_score = k, score
    return best_k


# ---------------------------------------------------------------------------
# Stream clustering: a single-level clustering-feature tree.


@dataclass
class CF:
    """Clustering feature: exact count, linear sum and componentwise square sum."""

    n: int
    ls: np.ndarray
    ss: np.ndarray

    @property
    def centroid(self) -> np.ndarray:
        return self.ls / self.n

    def radius_with(self, point: np.ndarray) -> float:
        """RMS distance to centroid of this CF after absorbing ``point``."""
        n = self.n + 1
        ls = self.ls + point
        ss = self.ss + point**2
        var = ss / n - (ls / n) ** 2
        return float(np.sqrt(max(var.sum(), 0.0)))

    def absorb(self, point: np.ndarray):
        self.n += 1
        self.ls = self.ls + point
        self.ss = self.ss + point**2

    def merge(self, other: "CF"):
        self.n += other.n
        self.ls = self.ls + other.ls
        self.ss = self.ss + other.ss

    def merged_radius(self, other: "CF") -> float:
        n = self.n + other.n
        ls = self.ls + other.ls
        ss = self.ss + other.ss
        var = ss / n - (ls / n) ** 2
        return float(np.sqrt(max(var.sum(), 0.0)))


@dataclass
class CFTree:
    """Flat list of leaf nodes holding CF entries; the stream clusterer state.

    Inserting beyond a node's branching factor splits the node; exceeding the
    leaf budget grows the threshold and rebuilds, bounding memory. The
    ``generation`` counter increments on every rebuild.
    """

    threshold: float
    branching: int
    max_leaves: int
    nodes: list[list[CF]] = field(default_factory=list)
    generation: int = 0

    @classmethod
    def from_config(cls, config: BirchConfig) -> "CFTree":
        return cls(threshold=config.threshold, branching=config.branching,
                   max_leaves=config.max_leaves)

    @property
    def entries(self) -> list[CF]:
        return [cf for node in self.nodes for cf in node]

    @property
    def dimension(self) -> int | None:
        for node in self.nodes:
            if node:
                return len(node[0].ls)
        return None

    def total_count(self) -> int:
        return sum(cf.n for cf in self.entries)

    def centroids(self) -> np.ndarray:
        return np.stack([cf.centroid for cf in self.entries])


def birch_insert(state: CFTree, point) -> CFTree:
    """Absorb ``point`` into the nearest CF entry, or open a new entry.

    Absorption happens only when the entry's radius after absorbing stays
    within the threshold. Count, linear-sum and square-sum statistics are
    updated exactly, so totals over the tree are conserved.
    """
    point = np.asarray(point, dtype=float).ravel()
    dim = state.dimension
    if dim is not None and len(point) != dim:
        raise ShapeError(f"point dimension {len(point)} != tree dimension {dim}")

    if not state.nodes:
        state.nodes.append([CF(1, point.copy(), point**2)])
        return state

    node_idx, entry_idx = _nearest_entry(state, point)
    entry = state.nodes[node_idx][entry_idx]
    if entry.radius_with(point) <= state.threshold:
        entry.absorb(point)
        return state

    state.nodes[node_idx].append(CF(1, point.copy(), point**2))
    if len(state.nodes[node_idx]) > state.branching:
        _split_node(state, node_idx)
    if len(state.nodes) > state.max_leaves:
        _rebuild(state)
    return state


def _nearest_entry(state: CFTree, point: np.ndarray) -> tuple[int, int]:
    best = (np.inf, 0, 0)
    for ni, node in enumerate(state.nodes):
        for ei, cf in enumerate(node):
            d = float(np.linalg.norm(cf.centroid - point))
            if d < best[0]:
                best = (d, ni, ei)
    return best[1], best[2]


def _split_node(state: CFTree, node_idx: int):
    """Split a node by its farthest entry pair; each entry joins the nearer seed."""
    node = state.nodes[node_idx]
    cents = np.stack([cf.centroid for cf in node])
    d = cdist(cents, cents)
    i, j = np.unravel_index(int(d.argmax()), d.shape)
    left, right = [], []
    for idx, cf in enumerate(node):
        (left if d[idx, i] <= d[idx, j] else right).append(cf)
    state.nodes[node_idx] = left
    state.nodes.insert(node_idx + 1, right)


def _rebuild(state: CFTree):
    """Grow the threshold and re-insert all CFs, merging those now in range."""
    state.threshold *= 1.5
    state.generation += 1
    old = state.entries
    state.nodes = []
    for cf in old:
        if not state.nodes:
            state.nodes.append([cf])
            continue
        ni, ei = _nearest_entry(state, cf.centroid)
        target = state.nodes[ni][ei]
        if target.merged_radius(cf) <= state.threshold:
            target.merge(cf)
        else:
            state.nodes[ni].append(cf)
            if len(state.nodes[ni]) > state.branching:
                _split_node(state, ni)


# ---------------------------------------------------------------------------
# Per-window labeling with cross-window state handoff.


@dataclass
class ClustererState:
    """Mutable cross-window clustering state, owned by one pipeline run.

    Static mode freezes ``centroids`` after the first window; stream mode owns
    a CF tree plus the latest global clustering of its entries; dynamic mode
    stores the last full clustering for windows between re-clusterings.
    """

    centroids: np.ndarray | None = None
    tree: CFTree | None = None
    entry_labels: np.ndarray | None = None
    window_index: int = 0


def _compact(assign: np.ndarray) -> tuple[np.ndarray, int]:
    """Renumber labels densely, dropping empty ids, preserving id order."""
    present = np.unique(assign)
    remap = {int(c): i for i, c in enumerate(present)}
    return np.array([remap[int(c)] for c in assign]), len(present)


def cluster_window(
    window: DataWindow,
    region: RegionRect,
    config: ClusteringConfig,
    state: ClustererState | None = None,
    reducer=None,
) -> ClusterLabels:
    """Label every cell of ``region`` for one window under the chosen strategy.

    ``state`` carries whatever the strategy persists across windows and must
    be passed back on subsequent calls; with ``state=None`` every call behaves
    like a first window. The ``reducer`` maps the window region to one point
    per cell (default: sketches with the config seed).
    """
    if not region.fits_in(window.shape):
        raise ShapeError(f"region {region} exceeds window shape {window.shape}")
    if reducer is None:
        reducer = ParCorrReducer(seed=config.seed)
    points = reducer.reduce(window, region)
    assign = assign_points(points, config, state)
    assign, k = _compact(assign)
    labels = assign.reshape(region.height, region.width)
    return ClusterLabels(shape=GridShape(region.height, region.width), labels=labels, k=k)


def assign_points(points: np.ndarray, config: ClusteringConfig,
                  state: ClustererState | None = None) -> np.ndarray:
    """Raw (non-compacted) cluster assignment of reduced points for one window."""
    if config.strategy == "dynamic":
        assign = _dynamic_assign(points, config, state)
    elif config.strategy == "static":
        assign = _static_assign(points, config, state)
    else:
        assign = _stream_assign(points, config, state)
    if state is not None:
        state.window_index += 1
    return assign


def _full_cluster(points: np.ndarray, config: ClusteringConfig) -> tuple[np.ndarray, np.ndarray]:
    k = select_k(points, config)
    return kmeans(points, k, config.seed)


def _dynamic_assign(points, config, state) -> np.ndarray:
    due = state is None or state.window_index % config.recluster_every == 0 or state.centroids is None
    if due:
        assign, centroids = _full_cluster(points, config)
        if state is not None:
            state.centroids = centroids
        return assign
    return cdist(points, state.centroids).argmin(axis=1)


def _static_assign(points, config, state) -> np.ndarray:
    if state is None or state.centroids is None:
        assign, centroids = _full_cluster(points, config)
        if state is not None:
            state.centroids = centroids
        return assign
    return cdist(points, state.centroids).argmin(axis=1)


def _stream_assign(points, config, state) -> np.ndarray:
    tree = state.tree if state is not None and state.tree is not None else CFTree.from_config(config.birch)
    for p in points:
        birch_insert(tree, p)
    centroids = tree.centroids()
    n_entries = centroids.shape[0]

    if n_entries == 1:
        entry_labels = np.zeros(1, dtype=int)
    else:
        entry_cfg = ClusteringConfig(
            strategy="dynamic",
            k_min=min(config.k_min, n_entries),
            k_max=min(config.k_max, n_entries),
            fixed_k=min(config.fixed_k, n_entries) if config.fixed_k is not None else None,
            seed=config.seed,
        )
        try:
            k = select_k(centroids, entry_cfg)
            entry_labels, _ = kmeans(centroids, k, config.seed)
        except MetricUndefinedError:
            entry_labels = np.zeros(n_entries, dtype=int)

    if state is not None:
        state.tree = tree
        state.entry_labels = entry_labels
    nearest = cdist(points, centroids).argmin(axis=1)
    return entry_labels[nearest]
