"""KD-tree nearest-neighbour search over particle clouds, with a brute-force oracle.

The tree cycles the split axis through the Cartesian coordinates and splits
at the positional median, so it is balanced by construction; all points live
in the leaves.  Queries return the R nearest points in ascending distance,
ties broken by the smaller point index, which makes every result a pure
function of (points, query, R).
"""

from __future__ import annotations

import heapq

import numpy as np


class KdTree:
    """Static balanced KD-tree. Build once, query concurrently."""

    __slots__ = (
        "points", "perm", "_pts_sorted", "_perm_list", "_axis", "_split",
        "_left", "_right", "_start", "_end", "leaf_size",
    )

    def __init__(self, points: np.ndarray, leaf_size: int = 16):
        points = np.ascontiguousarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if points.shape[0] < 1:
            raise ValueError("empty point set")
        if not np.all(np.isfinite(points)):
            raise ValueError("points must have finite coordinates")
        if leaf_size < 1:
            raise ValueError("leaf_size must be positive")
        self.points = points
        self.leaf_size = int(leaf_size)
        self.perm = np.arange(points.shape[0])
        self._axis: list[int] = []
        self._split: list[float] = []
        self._left: list[int] = []
        self._right: list[int] = []
        self._start: list[int] = []
        self._end: list[int] = []
        self._build(0, points.shape[0], 0)
        self._pts_sorted = np.ascontiguousarray(points[self.perm])
        self._perm_list = self.perm.tolist()

    # -- construction ---------------------------------------------------

    def _build(self, start: int, end: int, depth: int) -> int:
        node = len(self._axis)
        self._axis.append(-1)
        self._split.append(0.0)
        self._left.append(-1)
        self._right.append(-1)
        self._start.append(start)
        self._end.append(end)
        n = end - start
        if n <= self.leaf_size:
            return node
        ax = depth % self.points.shape[1]
        mid = n // 2
        seg = self.perm[start:end]
        order = np.argpartition(self.points[seg, ax], mid)
        self.perm[start:end] = seg[order]
        self._axis[node] = ax
        self._split[node] = float(self.points[self.perm[start + mid], ax])
        self._left[node] = self._build(start, start + mid, depth + 1)
        self._right[node] = self._build(start + mid, end, depth + 1)
        return node

    # -- queries ----------------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self._axis)

    def is_leaf(self, node: int) -> bool:
        return self._left[node] < 0

    def leaf_members(self, node: int) -> np.ndarray:
        """Point indices stored under ``node`` (its whole subtree)."""
        return self.perm[self._start[node]:self._end[node]]

    def query(self, query, R: int):
        """Indices of the R nearest points to ``query``.

        Ascending squared Euclidean distance, ties broken by smaller index.
        """
        idx, _ = self.query_with_distances(query, R)
        return idx

    def query_with_distances(self, query, R: int):
        n = self.points.shape[0]
        if not 1 <= R <= n:
            raise ValueError(f"R must be in [1, {n}], got {R}")
        q = np.asarray(query, dtype=float).ravel()
        q_list = q.tolist()
        axis, split = self._axis, self._split
        left, right = self._left, self._right
        starts, ends = self._start, self._end
        pts, perm_list = self._pts_sorted, self._perm_list
        push, replace = heapq.heappush, heapq.heapreplace
        # heap holds (-d2, -index): the root is the worst kept candidate
        # under the (distance, index) preference order.
        heap: list[tuple[float, int]] = []
        stack = [(0, 0.0)]
        while stack:
            node, bound = stack.pop()
            if len(heap) == R and bound > -heap[0][0]:
                continue
            if left[node] < 0:
                s, e = starts[node], ends[node]
                d2 = _sq_dists(pts[s:e], q)
                for val, pid in zip(d2.tolist(), perm_list[s:e]):
                    if len(heap) < R:
                        push(heap, (-val, -pid))
                    else:
                        wd, wi = heap[0]
                        if val < -wd or (val == -wd and pid < -wi):
                            replace(heap, (-val, -pid))
                continue
            delta = q_list[axis[node]] - split[node]
            plane = delta * delta
            far_bound = bound if plane < bound else plane
            if delta < 0.0:
                stack.append((right[node], far_bound))
                stack.append((left[node], bound))
            else:
                stack.append((left[node], far_bound))
                stack.append((right[node], bound))
        out = sorted((-d, -i) for d, i in heap)
        return (np.array([i for _, i in out], dtype=np.intp),
                np.array([d for d, _ in out]))

    def query_batch(self, queries, R: int):
        """Vector of queries -> (indices, squared distances), each (M, R)."""
        queries = np.atleast_2d(np.asarray(queries, dtype=float))
        m = queries.shape[0]
        idx = np.empty((m, R), dtype=np.intp)
        d2 = np.empty((m, R))
        for k in range(m):
            idx[k], d2[k] = self.query_with_distances(queries[k], R)
        return idx, d2


def _sq_dists(block: np.ndarray, q: np.ndarray):
    """Squared distances, summed coordinatewise; the single formula shared by
    tree leaves and the brute-force scan keeps their floats bit-identical.

    (The expanded ||p||^2 - 2 p.q + ||q||^2 form is faster but rounds
    differently between BLAS call shapes, which breaks exact tie agreement.)
    """
    diff = block - q
    return np.einsum("ij,ij->i", diff, diff)


def build_kdtree(points, leaf_size: int = 16) -> KdTree:
    """Construct a KD-tree over an (N, d) point array."""
    return KdTree(points, leaf_size=leaf_size)


def knn_brute_force(points, query, R: int) -> np.ndarray:
    """Full-scan R-nearest-neighbour oracle with the same tie-break as the tree."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = points.shape[0]
    if not 1 <= R <= n:
        raise ValueError(f"R must be in [1, {n}], got {R}")
    q = np.asarray(query, dtype=float).ravel()
    d2 = _sq_dists(points, q)
    order = np.lexsort((np.arange(n), d2))
    return order[:R].astype(np.intp)


def _rank_rows(d2: np.ndarray, R: int):
    """Per row: the R column indices with smallest (value, column) pairs.

    argpartition finds the R-th smallest value per row; only the entries at
    or below it enter a single global lexicographic sort, so boundary ties
    resolve by column index exactly like a stable full sort at a fraction of
    the cost.
    """
    n_rows, n_cols = d2.shape
    part = np.argpartition(d2, min(R - 1, n_cols - 1), axis=1)[:, :R]
    vmax = np.take_along_axis(d2, part, axis=1).max(axis=1)
    rows, cols = np.nonzero(d2 <= vmax[:, None])
    vals = d2[rows, cols]
    order = np.lexsort((cols, vals, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    starts = np.searchsorted(rows, np.arange(n_rows))
    keep = (np.arange(rows.size) - starts[rows]) < R
    return cols[keep].reshape(n_rows, R), vals[keep].reshape(n_rows, R)


def _brute_knn_table(points1, points2, R: int):
    """(indices, sq_dists) of the R nearest points2 rows per points1 row,
    full-scan with index tie-break; plus the transposed query."""
    from scipy.spatial.distance import cdist

    d2 = cdist(points1, points2, metric="sqeuclidean")
    idx12, d12 = _rank_rows(d2, R)
    idx21, d21 = _rank_rows(np.ascontiguousarray(d2.T), R)
    return idx12, d12, idx21, d21


def symmetric_knn_support(points1, points2, R: int, leaf_size: int = 16,
                          method: str = "auto"):
    """Union of R-nearest-neighbour pairs in both directions.

    Pairs (alpha, beta) such that points2[beta] is among the R nearest
    neighbours of points1[alpha], or points1[alpha] is among the R nearest of
    points2[beta].  The union guarantees every row and every column of the
    induced support is nonempty.

    ``method`` picks how the neighbour tables are computed: "tree" queries
    KD-trees, "brute" ranks the full distance matrix, and "auto" chooses by
    size and duplicate fraction (a resampled particle cloud can be mostly
    duplicates, where tie-exact tree queries degrade to full scans anyway).
    All methods return identical pairs.

    Returns (rows, cols, sq_dists) with at most 2*R*N unique pairs, sorted by
    (row, col).
    """
    points1 = np.atleast_2d(np.asarray(points1, dtype=float))
    points2 = np.atleast_2d(np.asarray(points2, dtype=float))
    n = points1.shape[0]
    if points2.shape[0] != n:
        raise ValueError("point sets must have equal sizes")
    if method == "auto":
        # trees only pay off for clouds big enough to prune (a resampled
        # cloud can also be mostly duplicates, where tie-exact tree queries
        # degrade to full scans); the full-scan ranking wins below this size
        if n <= 640:
            method = "brute"
        else:
            distinct = np.unique(np.vstack([points1, points2]), axis=0).shape[0]
            method = "brute" if distinct < 0.8 * 2 * n else "tree"
    if method == "brute":
        idx12, d12, idx21, d21 = _brute_knn_table(points1, points2, R)
    elif method == "tree":
        idx12, d12 = KdTree(points2, leaf_size).query_batch(points1, R)
        idx21, d21 = KdTree(points1, leaf_size).query_batch(points2, R)
    else:
        raise ValueError(f"unknown method {method!r}")
    base = np.repeat(np.arange(n), R)
    rows = np.concatenate([base, idx21.ravel()])
    cols = np.concatenate([idx12.ravel(), base])
    vals = np.concatenate([d12.ravel(), d21.ravel()])
    keys = rows * n + cols
    uniq, first = np.unique(keys, return_index=True)
    return uniq // n, uniq % n, np.maximum(vals[first], 0.0)
