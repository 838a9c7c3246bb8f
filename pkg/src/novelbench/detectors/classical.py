from __future__ import annotations

import math

import numpy as np

from ..nn import ConfigurationError
from .base import TrainedDetector
from .config import DetectorConfig
from .kdtree import KdTree


class KnnDetector(TrainedDetector):
    """Mean Euclidean distance to the ``k`` nearest training points."""

    algorithms = ("knn",)

    def __init__(self, config: DetectorConfig, train: np.ndarray):
        super().__init__(config, train.shape[1])
        if config.k > train.shape[0]:
            raise ConfigurationError(f"k={config.k} exceeds {train.shape[0]} training points")
        self.k = config.k
        self.tree = KdTree(train)

    def score(self, x) -> np.ndarray:
        return self.tree.mean_knn_distance(self._check(x), self.k)

    def _arrays(self):
        return {"points": self.tree.points}

    @classmethod
    def _restore(cls, config, dim, arrays, meta):
        return cls(config, arrays["points"])


def harmonic(m: int) -> float:
    return math.fsum(1.0 / i for i in range(1, m + 1))


def average_path_length(m: int) -> float:
    """Expected unsuccessful-search path length in a BST over ``m`` points.

    Uses exact harmonic numbers, so ``c(1) = 0`` and ``c(2) = 1``.
    """
    if m <= 1:
        return 0.0
    return 2.0 * harmonic(m - 1) - 2.0 * (m - 1) / m


class IsolationTree:
    """One random partition tree stored as flat node arrays.

    ``value`` holds, for external nodes, the path length assigned to a sample
    that lands there: its depth plus ``c(size)`` when ``adjust`` is set.
    """

    def __init__(self, data: np.ndarray, height_limit: int, rng: np.random.Generator,
                 adjust: bool = True):
        feature, threshold, left, right, size, depth = [], [], [], [], [], []

        def new_node(n_rows, dep):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            size.append(n_rows)
            depth.append(dep)
            return len(size) - 1

        stack = [(new_node(len(data), 0), np.arange(len(data)))]
        while stack:
            node, rows = stack.pop()
            if depth[node] >= height_limit or len(rows) <= 1:
                continue
            sub = data[rows]
            lo, hi = sub.min(axis=0), sub.max(axis=0)
            candidates = np.flatnonzero(hi > lo)
            if candidates.size == 0:
                continue
            dim = int(rng.choice(candidates))
            thr = float(rng.uniform(lo[dim], hi[dim]))
            go_left = sub[:, dim] < thr
            feature[node] = dim
            threshold[node] = thr
            l_rows, r_rows = rows[go_left], rows[~go_left]
            left[node] = new_node(len(l_rows), depth[node] + 1)
            right[node] = new_node(len(r_rows), depth[node] + 1)
            stack += [(right[node], r_rows), (left[node], l_rows)]

        self.feature = np.array(feature, dtype=np.int64)
        self.threshold = np.array(threshold)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.size = np.array(size, dtype=np.int64)
        self.depth = np.array(depth, dtype=np.int64)
        self.value = self.depth.astype(float)
        if adjust:
            self.value += np.array([average_path_length(int(s)) for s in self.size])

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def path_length(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(len(x), dtype=np.int64)
        rows = np.arange(len(x))
        while True:
            feat = self.feature[node]
            inner = feat >= 0
            if not inner.any():
                break
            r, nd = rows[inner], node[inner]
            go_left = x[r, feat[inner]] < self.threshold[nd]
            node[inner] = np.where(go_left, self.left[nd], self.right[nd])
        return self.value[node]


class IsolationForestDetector(TrainedDetector):
    """Negative mean path length over ``n_trees`` isolation trees."""

    algorithms = ("iforest",)

    def __init__(self, config: DetectorConfig, train: np.ndarray):
        super().__init__(config, train.shape[1])
        n = train.shape[0]
        self.psi = min(config.subsample or 256, n)
        self.height_limit = math.ceil(math.log2(self.psi)) if self.psi > 1 else 0
        adjust = True if config.path_adjust is None else config.path_adjust
        rng = np.random.default_rng(config.seed)
        self.trees = []
        for _ in range(config.n_trees):
            rows = rng.choice(n, size=self.psi, replace=False)
            self.trees.append(IsolationTree(train[rows], self.height_limit, rng, adjust))

    def score(self, x) -> np.ndarray:
        x = self._check(x)
        total = np.zeros(len(x))
        for tree in self.trees:
            total += tree.path_length(x)
        return 0.0 - total / len(self.trees)

    def _arrays(self):
        out = {}
        for i, t in enumerate(self.trees):
            for name in ("feature", "threshold", "left", "right", "size", "depth", "value"):
                out[f"t{i}.{name}"] = getattr(t, name)
        return out

    @classmethod
    def _restore(cls, config, dim, arrays, meta):
        det = cls.__new__(cls)
        TrainedDetector.__init__(det, config, dim)
        det.psi, det.height_limit = meta["psi"], meta["height_limit"]
        det.trees = []
        for i in range(config.n_trees):
            t = IsolationTree.__new__(IsolationTree)
            for name in ("feature", "threshold", "left", "right", "size", "depth", "value"):
                setattr(t, name, arrays[f"t{i}.{name}"])
            det.trees.append(t)
        return det

    def _meta(self):
        return {"psi": self.psi, "height_limit": self.height_limit}
