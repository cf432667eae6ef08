"""Hierarchical density-based clustering over sparse 3D clouds.

The pipeline is the classic construction: per-point core distances, a
minimum spanning tree of the complete mutual-reachability graph, a condensed
hierarchy pruned by minimum cluster size, and stability-based final
selection. Everything is exact (no dual-tree shortcuts): merged two-frame
clouds stay small enough that the quadratic MST is the fast path, and an
exhaustive oracle can check every step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.spatial import cKDTree

NOISE = -1
_INF_LAMBDA = 1e12


class TooFewPoints(ValueError):
    """Not enough points for the requested neighbor count."""


@dataclass(frozen=True)
class ClusterParams:
    """Knobs of the density clustering stage.

    min_samples is the neighbor count k used for core distances;
    cluster_selection is "eom" (excess of mass) or "leaf".
    """

    min_cluster_size: int = 20
    min_samples: int = 5
    cluster_selection: str = "eom"

    def __post_init__(self):
        if self.min_cluster_size < 2:
            raise ValueError("min_cluster_size must be >= 2")
        if self.min_samples < 1:
            raise ValueError("min_samples must be >= 1")
        if self.cluster_selection not in ("eom", "leaf"):
            raise ValueError("cluster_selection must be 'eom' or 'leaf'")


@dataclass(frozen=True)
class ClusterLabels:
    """Per-point cluster ids; NOISE (-1) marks unassigned points.

    Ids are assigned by decreasing cluster size, ties by the smallest
    member point index, so runs are reproducible.
    """

    labels: np.ndarray
    n_clusters: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    def members(self, cluster_id: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cluster_id)


def core_distances(points, k: int) -> np.ndarray:
    """Distance from each point to its k-th nearest neighbor (self excluded)."""
    pts = np.asarray(getattr(points, "xyz", points), dtype=np.float64).reshape(-1, 3)
    n = pts.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k + 1:
        raise TooFewPoints(f"need at least {k + 1} points for k={k}, got {n}")
    dists, _ = cKDTree(pts).query(pts, k=k + 1)
    return np.ascontiguousarray(dists[:, k])


@njit(cache=True, nogil=True)
def _prim_mst(pts, core):  # pragma: no cover - exercised via wrapper
    n = pts.shape[0]
    in_tree = np.zeros(n, np.bool_)
    best_w = np.full(n, np.inf)
    best_src = np.zeros(n, np.int64)
    ei = np.empty(n - 1, np.int64)
    ej = np.empty(n - 1, np.int64)
    ew = np.empty(n - 1, np.float64)
    in_tree[0] = True
    cur = 0
    for m in range(n - 1):
        cx, cy, cz = pts[cur, 0], pts[cur, 1], pts[cur, 2]
        ccore = core[cur]
        for i in range(n):
            if in_tree[i]:
                continue
            dx = pts[i, 0] - cx
            dy = pts[i, 1] - cy
            dz = pts[i, 2] - cz
            d = np.sqrt(dx * dx + dy * dy + dz * dz)
            if ccore > d:
                d = ccore
            if core[i] > d:
                d = core[i]
            if d < best_w[i]:
                best_w[i] = d
                best_src[i] = cur
        nxt = -1
        bw = np.inf
        for i in range(n):
            if not in_tree[i] and best_w[i] < bw:
                bw = best_w[i]
                nxt = i
        ei[m] = best_src[nxt]
        ej[m] = nxt
        ew[m] = bw
        in_tree[nxt] = True
        cur = nxt
    return ei, ej, ew


def mutual_reachability_mst(points, core) -> np.ndarray:
    """Minimum spanning tree of the complete mutual-reachability graph.

    d_mreach(a, b) = max(core_a, core_b, ||a - b||). Returns an (n-1, 3)
    array with columns (i, j, weight), i < j, sorted by (weight, i, j) so
    equal-weight edges are consumed in a fixed lexicographic order.
    """
    pts = np.ascontiguousarray(
        np.asarray(getattr(points, "xyz", points), dtype=np.float64).reshape(-1, 3)
    )
    core = np.ascontiguousarray(np.asarray(core, dtype=np.float64).reshape(-1))
    n = pts.shape[0]
    if core.shape[0] != n:
        raise ValueError("core distances must match the point count")
    if n < 2:
        return np.empty((0, 3))
    ei, ej, ew = _prim_mst(pts, core)
    lo = np.minimum(ei, ej)
    hi = np.maximum(ei, ej)
    order = np.lexsort((hi, lo, ew))
    return np.column_stack([lo[order], hi[order], ew[order]]).astype(np.float64)


def _single_linkage(edges: np.ndarray, n: int):
    """Union-find dendrogram from ascending MST edges.

    Leaves are 0..n-1; internal node n+m merges the components of edge m.
    Returns (children, weights, sizes) of the n-1 internal nodes.
    """
    parent = np.arange(2 * n - 1, dtype=np.int64)
    sizes = np.ones(2 * n - 1, dtype=np.int64)
    children = np.empty((n - 1, 2), dtype=np.int64)
    weights = np.empty(n - 1)

    def find(x: int) -> int:
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for m in range(n - 1):
        i, j, w = int(edges[m, 0]), int(edges[m, 1]), edges[m, 2]
        ra, rb = find(i), find(j)
        node = n + m
        children[m] = (ra, rb)
        weights[m] = w
        sizes[node] = sizes[ra] + sizes[rb]
        parent[ra] = node
        parent[rb] = node
    return children, weights, sizes


def _collect_leaves(node: int, children: np.ndarray, n: int) -> list[int]:
    out, stack = [], [node]
    while stack:
        cur = stack.pop()
        if cur < n:
            out.append(cur)
        else:
            stack.extend(children[cur - n])
    return out


def _condense(children, weights, sizes, n: int, mcs: int):
    """Prune the dendrogram to clusters of at least mcs points.

    Returns condensed rows (parent, child, lambda, size) where child < n is
    a point falling out of its parent cluster and child >= n is a cluster
    born at that lambda. Cluster ids start at n; the root cluster is n.
    """
    rows_parent: list[int] = []
    rows_child: list[int] = []
    rows_lambda: list[float] = []
    rows_size: list[int] = []
    root = 2 * n - 2
    next_label = n + 1
    stack = [(root, n)]
    while stack:
        node, label = stack.pop()
        left, right = children[node - n]
        w = weights[node - n]
        lam = 1.0 / w if w > 1.0 / _INF_LAMBDA else _INF_LAMBDA
        big_left = sizes[left] >= mcs
        big_right = sizes[right] >= mcs
        if big_left and big_right:
            for child in (left, right):
                rows_parent.append(label)
                rows_child.append(next_label)
                rows_lambda.append(lam)
                rows_size.append(int(sizes[child]))
                stack.append((child, next_label))
                next_label += 1
        elif not big_left and not big_right:
            for child in (left, right):
                for leaf in _collect_leaves(child, children, n):
                    rows_parent.append(label)
                    rows_child.append(leaf)
                    rows_lambda.append(lam)
                    rows_size.append(1)
        else:
            small, big = (left, right) if big_right else (right, left)
            for leaf in _collect_leaves(small, children, n):
                rows_parent.append(label)
                rows_child.append(leaf)
                rows_lambda.append(lam)
                rows_size.append(1)
            stack.append((big, label))
    return (
        np.asarray(rows_parent, dtype=np.int64),
        np.asarray(rows_child, dtype=np.int64),
        np.asarray(rows_lambda),
        np.asarray(rows_size, dtype=np.int64),
        next_label,
    )


def extract_clusters(mst_edges, params: ClusterParams, n_points: int | None = None) -> ClusterLabels:
    """Cut the condensed hierarchy into final clusters.

    Edges are consumed in decreasing weight order (the condensed tree walks
    splits from the root down); components that stay above min_cluster_size
    become candidate clusters and the configured stability rule picks the
    final set. Points falling out earlier are NOISE, except that a point
    leaving a selected cluster strictly after its birth keeps its label.
    A lone surviving root is a valid cluster, so a single coherent blob is
    reported as one cluster rather than all noise.
    """
    edges = np.asarray(mst_edges, dtype=np.float64).reshape(-1, 3)
    n = edges.shape[0] + 1 if n_points is None else int(n_points)
    if edges.shape[0] != max(n - 1, 0):
        raise ValueError("edge count does not match point count")
    labels = np.full(n, NOISE, dtype=np.int64)
    if n < params.min_cluster_size or n < 2:
        return ClusterLabels(labels, 0)

    order = np.lexsort((edges[:, 1], edges[:, 0], edges[:, 2]))
    children, weights, sizes = _single_linkage(edges[order], n)
    parents, childs, lambdas, row_sizes, label_end = _condense(
        children, weights, sizes, n, params.min_cluster_size
    )

    # cluster birth lambdas and stability sum((lambda_leave - lambda_birth) * size)
    birth = np.zeros(label_end - n)
    for parent, child, lam in zip(parents, childs, lambdas):
        if child >= n:
            birth[child - n] = lam
    stability = np.zeros(label_end - n)
    cluster_children: dict[int, list[int]] = {c: [] for c in range(n, label_end)}
    cluster_parent = np.full(label_end - n, -1, dtype=np.int64)
    for parent, child, lam, size in zip(parents, childs, lambdas, row_sizes):
        stability[parent - n] += (lam - birth[parent - n]) * size
        if child >= n:
            cluster_children[parent].append(child)
            cluster_parent[child - n] = parent

    selected = np.zeros(label_end - n, dtype=bool)
    if params.cluster_selection == "leaf":
        selected[:] = [not cluster_children[c] for c in range(n, label_end)]
    else:
        best = np.zeros(label_end - n)
        for c in range(label_end - 1, n - 1, -1):
            subtree = sum(best[ch - n] for ch in cluster_children[c])
            if stability[c - n] >= subtree:
                selected[c - n] = True
                best[c - n] = stability[c - n]
            else:
                best[c - n] = subtree
        # keep only the highest selected cluster along each root-to-leaf path
        shadowed = np.zeros(label_end - n, dtype=bool)
        for c in range(n, label_end):
            p = cluster_parent[c - n]
            if p >= 0:
                shadowed[c - n] = shadowed[p - n] or selected[p - n]
        selected &= ~shadowed

    # nearest selected ancestor (inclusive), walking only unselected links
    owner = np.full(label_end - n, -1, dtype=np.int64)
    for c in range(n, label_end):
        if selected[c - n]:
            owner[c - n] = c
        elif cluster_parent[c - n] >= 0:
            owner[c - n] = owner[cluster_parent[c - n] - n]

    point_rows = childs < n
    for parent, point, lam in zip(parents[point_rows], childs[point_rows], lambdas[point_rows]):
        own = owner[parent - n]
        if own >= 0 and lam > birth[own - n]:
            labels[point] = own

    # stable ids: decreasing member count, then smallest member index
    found = [c for c in range(n, label_end) if np.any(labels == c)]
    found.sort(key=lambda c: (-int(np.sum(labels == c)), int(np.flatnonzero(labels == c)[0])))
    final = np.full(n, NOISE, dtype=np.int64)
    for new_id, c in enumerate(found):
        final[labels == c] = new_id
    return ClusterLabels(final, len(found))


def cluster_points(points, params: ClusterParams | None = None) -> ClusterLabels:
    """Full clustering pipeline: core distances, MST, condensed extraction."""
    params = params or ClusterParams()
    pts = np.asarray(getattr(points, "xyz", points), dtype=np.float64).reshape(-1, 3)
    n = pts.shape[0]
    if n < max(params.min_cluster_size, params.min_samples + 1, 2):
        return ClusterLabels(np.full(n, NOISE, dtype=np.int64), 0)
    core = core_distances(pts, params.min_samples)
    edges = mutual_reachability_mst(pts, core)
    return extract_clusters(edges, params, n)
