"""Exact k-nearest-neighbour search over a bucketed KD-tree."""

from __future__ import annotations

import numpy as np


def squared_distances(points: np.ndarray, q: np.ndarray) -> np.ndarray:
    diff = points - q
    return np.sum(diff * diff, axis=1)


class KdTree:
    """Median-split KD-tree.

    Each internal node splits on the dimension with the widest spread, at the
    value of the median point; points left of the median satisfy
    ``x[dim] <= value`` and points right of it ``x[dim] >= value``. A leaf
    owns the contiguous slice ``order[start:end]`` of point indices.

    Parameters
    ----------
    points
        ``(n, d)`` matrix, kept by reference.
    leaf_size
        Nodes with at most this many points are not split.
    """

    def __init__(self, points: np.ndarray, leaf_size: int = 64):
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[0] == 0:
            raise ValueError("KdTree needs a non-empty (n, d) matrix")
        self.points = points
        self.leaf_size = max(1, int(leaf_size))
        n = points.shape[0]
        self.order = np.arange(n)
        split_dim, split_val, left, right, start, end = [], [], [], [], [], []

        def new_node(s, e):
            split_dim.append(-1)
            split_val.append(0.0)
            left.append(-1)
            right.append(-1)
            start.append(s)
            end.append(e)
            return len(start) - 1

        stack = [new_node(0, n)]
        while stack:
            node = stack.pop()
            s, e = start[node], end[node]
            if e - s <= self.leaf_size:
                continue
            idx = self.order[s:e]
            sub = points[idx]
            spread = sub.max(axis=0) - sub.min(axis=0)
            dim = int(np.argmax(spread))
            if spread[dim] <= 0:
                continue
            mid = (e - s) // 2
            part = np.argpartition(sub[:, dim], mid)
            self.order[s:e] = idx[part]
            split_dim[node] = dim
            split_val[node] = float(points[self.order[s + mid], dim])
            lo = new_node(s, s + mid)
            hi = new_node(s + mid, e)
            left[node], right[node] = lo, hi
            stack += [hi, lo]

        self.split_dim = np.array(split_dim, dtype=np.int64)
        self.split_val = np.array(split_val)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.start = np.array(start, dtype=np.int64)
        self.end = np.array(end, dtype=np.int64)

    @property
    def n_nodes(self) -> int:
        return len(self.start)

    def leaves(self) -> list[np.ndarray]:
        return [self.order[self.start[i]:self.end[i]]
                for i in range(self.n_nodes) if self.split_dim[i] < 0]

    def query(self, q: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Distances (ascending) and indices of the ``k`` nearest points to ``q``."""
        n = self.points.shape[0]
        if not 1 <= k <= n:
            raise ValueError(f"k must lie in [1, {n}], got {k}")
        q = np.asarray(q, dtype=float)
        best_d2 = np.empty(0)
        best_idx = np.empty(0, dtype=np.int64)
        worst = np.inf
        split_dim, split_val = self.split_dim, self.split_val
        stack = [(0, 0.0)]
        while stack:
            node, bound = stack.pop()
            if bound > worst:
                continue
            dim = split_dim[node]
            if dim < 0:
                idx = self.order[self.start[node]:self.end[node]]
                d2 = squared_distances(self.points[idx], q)
                best_d2 = np.concatenate([best_d2, d2])
                best_idx = np.concatenate([best_idx, idx])
                if best_d2.size > k:
                    keep = np.argpartition(best_d2, k - 1)[:k]
                    best_d2, best_idx = best_d2[keep], best_idx[keep]
                if best_d2.size == k:
                    worst = best_d2.max()
                continue
            gap = q[dim] - split_val[node]
            if gap < 0:
                near, far = self.left[node], self.right[node]
            else:
                near, far = self.right[node], self.left[node]
            stack.append((far, max(bound, gap * gap)))
            stack.append((near, bound))
        order = np.argsort(best_d2, kind="stable")
        return np.sqrt(best_d2[order]), best_idx[order]

    def mean_knn_distance(self, queries: np.ndarray, k: int) -> np.ndarray:
        queries = np.atleast_2d(np.asarray(queries, dtype=float))
        return np.array([self.query(q, k)[0].mean() for q in queries])
