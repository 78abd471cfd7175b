"""Data-dependent partitioning estimator for conditional expectations.

The partition is a binary tree grown from the sample points. A node is split
on the coordinate with the largest sample range (lowest index on ties) at the
lower sample median; points with ``x[j] <= threshold`` go left. Leaves are
deepened level by level, left to right, until there are ``R`` of them, so
for ``R = 2^k`` dividing ``M`` and distinct coordinates every cell holds
exactly ``M / R`` samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class Partition:
    feature: np.ndarray  # split coordinate per node (0 for leaves)
    threshold: np.ndarray  # split threshold per node (0 for leaves)
    left: np.ndarray  # child index, -1 for leaves
    right: np.ndarray
    leaf_id: np.ndarray  # leaf number per node, -1 for internal nodes
    n_leaves: int
    depth: int
    n_features: int

    def leaf_index(self, xs: np.ndarray) -> np.ndarray:
        """Leaf number of each row of ``xs``."""
        xs = np.asarray(xs, dtype=float).reshape(-1, self.n_features)
        node = np.zeros(xs.shape[0], dtype=np.intp)
        rows = np.arange(xs.shape[0])
        for _ in range(self.depth):
            internal = self.left[node] >= 0
            if not internal.any():
                break
            go_left = xs[rows, self.feature[node]] <= self.threshold[node]
            child = np.where(go_left, self.left[node], self.right[node])
            node = np.where(internal, child, node)
        return self.leaf_id[node]


def default_cells(n_samples: int) -> int:
    """max(8, largest power of two not exceeding floor(sqrt(M)))."""
    root = int(np.floor(np.sqrt(n_samples)))
    return max(8, 1 << (root.bit_length() - 1)) if root >= 1 else 8


def build_partition(xs: np.ndarray, R: int) -> Partition:
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 1:
        xs = xs[:, None]
    M = xs.shape[0]
    if R < 1:
        raise ValueError(f"need at least one cell, got R={R}")
    if R > M:
        raise ValueError(f"cannot build {R} cells from {M} samples")
    if not np.all(np.isfinite(xs)):
        raise ValueError("sample points must be finite")

    feature, threshold, left, right = [0], [0.0], [-1], [-1]
    members = [np.arange(M)]
    leaves = [0]
    depth = 0

    def split(node: int) -> tuple[int, int]:
        idx = members[node]
        if idx.size:
            pts = xs[idx]
            j = int(np.argmax(pts.max(axis=0) - pts.min(axis=0)))
            vals = np.sort(pts[:, j])
            thr = float(vals[(vals.size - 1) // 2])
            mask = xs[idx, j] <= thr
        else:
            j, thr, mask = 0, 0.0, np.zeros(0, dtype=bool)
        feature[node], threshold[node] = j, thr
        kids = []
        for part in (idx[mask], idx[~mask]):
            feature.append(0)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            members.append(part)
            kids.append(len(members) - 1)
        left[node], right[node] = kids
        return kids[0], kids[1]

    while len(leaves) < R:
        depth += 1
        new = []
        for i, node in enumerate(leaves):
            if len(new) + (len(leaves) - i) < R:
                new.extend(split(node))
            else:
                new.append(node)
        leaves = new

    leaf_id = np.full(len(members), -1, dtype=np.intp)
    leaf_id[leaves] = np.arange(len(leaves))
    return Partition(
        feature=np.asarray(feature, dtype=np.intp),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=np.intp),
        right=np.asarray(right, dtype=np.intp),
        leaf_id=leaf_id,
        n_leaves=len(leaves),
        depth=depth,
        n_features=xs.shape[1],
    )


@dataclass(frozen=True, eq=False)
class PartitionEstimator:
    partition: Partition
    cell_means: np.ndarray  # (R, k)
    counts: np.ndarray  # (R,)
    global_mean: np.ndarray  # (k,)
    scalar: bool

    def predict(self, xs: np.ndarray) -> np.ndarray:
        """Cell mean of the leaf containing each query; empty cells give the global mean."""
        xs = np.asarray(xs, dtype=float)
        one = xs.ndim == 0 or (xs.ndim == 1 and self.partition.n_features > 1)
        xs = xs.reshape(-1, self.partition.n_features)
        leaf = self.partition.leaf_index(xs)
        out = np.where((self.counts[leaf] > 0)[:, None], self.cell_means[leaf], self.global_mean)
        if self.scalar:
            out = out[:, 0]
        return out[0] if one else out


def fit(partition: Partition, xs: np.ndarray, ys: np.ndarray) -> PartitionEstimator:
    """Per-cell sample means of ``ys`` (shape (M,) or (M, k))."""
    ys = np.asarray(ys, dtype=float)
    scalar = ys.ndim == 1
    ys2 = ys[:, None] if scalar else ys
    leaf = partition.leaf_index(xs)
    if leaf.shape[0] != ys2.shape[0]:
        raise ValueError(f"{leaf.shape[0]} points but {ys2.shape[0]} responses")
    R = partition.n_leaves
    counts = np.bincount(leaf, minlength=R)
    sums = np.zeros((R, ys2.shape[1]))
    np.add.at(sums, leaf, ys2)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts[:, None] > 0, sums / np.maximum(counts, 1)[:, None], 0.0)
    return PartitionEstimator(partition, means, counts, ys2.mean(axis=0), scalar)


def predict(estimator: PartitionEstimator, x: np.ndarray) -> np.ndarray:
    return estimator.predict(x)


def regress(xs: np.ndarray, ys: np.ndarray, R: int) -> np.ndarray:
    """In-sample conditional-mean estimate: build, fit and evaluate at the samples."""
    part = build_partition(xs, R)
    return fit(part, xs, ys).predict(xs)
