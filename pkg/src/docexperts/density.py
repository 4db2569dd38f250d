"""Density-based cluster discovery.

Implements the classic HDBSCAN pipeline over a dense Euclidean
distance matrix: mutual-reachability distances from min_samples-core
distances, a minimum spanning tree, single-linkage agglomeration, a
condensed cluster tree, and excess-of-mass cluster selection. Each
stage is a separate function so tests can pin intermediate results.

Suited to corpora up to a few thousand points (O(n^2) memory); that is
the operating range of this engine, which clusters chunk embeddings
once at ingestion time.
"""

from __future__ import annotations

import numpy as np

CONDENSED_DTYPE = np.dtype(
    [("parent", np.int64), ("child", np.int64), ("lam", np.float64), ("size", np.int64)]
)


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    """Dense Euclidean distance matrix, float64, exact zero diagonal."""
    points = np.asarray(points, dtype=np.float64)
    squares = np.sum(points * points, axis=1)
    gram = points @ points.T
    dist_sq = squares[:, None] + squares[None, :] - 2.0 * gram
    np.maximum(dist_sq, 0.0, out=dist_sq)
    distances = np.sqrt(dist_sq)
    np.fill_diagonal(distances, 0.0)
    return distances


def core_distances(distances: np.ndarray, min_samples: int) -> np.ndarray:
    """Distance to the min_samples-th nearest point, self included.

    With min_samples = 1 the core distance is 0 (the point itself).
    """
    n = distances.shape[0]
    if not 1 <= min_samples <= n:
        raise ValueError(f"min_samples must be in [1, {n}], got {min_samples}")
    k = min_samples - 1
    return np.partition(distances, k, axis=1)[:, k]


def mutual_reachability(distances: np.ndarray, core: np.ndarray) -> np.ndarray:
    """max(d(a,b), core(a), core(b)) for every pair."""
    return np.maximum(distances, np.maximum(core[:, None], core[None, :]))


def minimum_spanning_tree(weights: np.ndarray) -> np.ndarray:
    """Prim's algorithm on a dense weight matrix.

    Returns (n-1, 3) rows of (source, target, weight), in the order the
    tree grew. Ties resolve to the lowest candidate index.
    """
    n = weights.shape[0]
    if n < 2:
        return np.empty((0, 3), dtype=np.float64)
    in_tree = np.zeros(n, dtype=bool)
    min_reach = np.full(n, np.inf)
    source = np.zeros(n, dtype=np.int64)
    edges = np.empty((n - 1, 3), dtype=np.float64)

    current = 0
    for i in range(n - 1):
        in_tree[current] = True
        row = weights[current]
        better = ~in_tree & (row < min_reach)
        min_reach[better] = row[better]
        source[better] = current
        candidates = np.where(in_tree, np.inf, min_reach)
        target = int(np.argmin(candidates))
        edges[i] = (source[target], target, min_reach[target])
        current = target
    return edges


def single_linkage(edges: np.ndarray) -> np.ndarray:
    """Agglomerate MST edges in weight order into a linkage tree.

    Row i merges two current roots into new node n+i:
    (left_root, right_root, distance, merged_size). Roots are node ids
    in [0, 2n-1): original points below n, prior merges at n+row.
    """
    n = edges.shape[0] + 1
    order = np.argsort(edges[:, 2], kind="stable")

    parent = np.arange(2 * n - 1, dtype=np.int64)
    size = np.ones(2 * n - 1, dtype=np.int64)

    def find(x: int) -> int:
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:  # path compression
            parent[x], x = root, parent[x]
        return root

    linkage = np.empty((n - 1, 4), dtype=np.float64)
    for i, edge_index in enumerate(order):
        u, v, weight = edges[edge_index]
        left, right = find(int(u)), find(int(v))
        merged = n + i
        linkage[i] = (left, right, weight, size[left] + size[right])
        parent[left] = parent[right] = merged
        size[merged] = size[left] + size[right]
    return linkage


def _bfs_linkage(linkage: np.ndarray, start: int, n_points: int) -> list[int]:
    out: list[int] = []
    frontier = [start]
    while frontier:
        out.extend(frontier)
        frontier = [
            int(child)
            for node in frontier
            if node >= n_points
            for child in linkage[node - n_points, :2]
        ]
    return out


def condense_tree(linkage: np.ndarray, min_cluster_size: int) -> np.ndarray:
    """Collapse the linkage tree into clusters of >= min_cluster_size.

    Walking from the root, a split only creates two new clusters when
    both sides are large enough; otherwise the large side keeps its
    parent's identity and the small side's points fall out one by one.
    Rows are (parent, child, lambda, size) where lambda = 1/distance is
    the density level at which the child separates; child < n_points
    marks a single point leaving, child >= n_points a cluster split.
    Cluster ids start at n_points (the root).
    """
    if min_cluster_size < 2:
        raise ValueError("min_cluster_size must be >= 2")
    n = linkage.shape[0] + 1
    root = 2 * n - 2
    relabel = np.zeros(root + 1, dtype=np.int64)
    relabel[root] = n
    next_label = n + 1
    ignore = np.zeros(root + 1, dtype=bool)
    rows: list[tuple[int, int, float, int]] = []

    def shed_points(top: int, parent_label: int, lam: float):
        for sub in _bfs_linkage(linkage, top, n):
            if sub < n:
                rows.append((parent_label, sub, lam, 1))
            ignore[sub] = True

    for node in _bfs_linkage(linkage, root, n):
        if node < n or ignore[node]:
            continue
        left, right, distance, _ = linkage[node - n]
        left, right = int(left), int(right)
        lam = 1.0 / distance if distance > 0.0 else np.inf
        left_count = int(linkage[left - n, 3]) if left >= n else 1
        right_count = int(linkage[right - n, 3]) if right >= n else 1

        if left_count >= min_cluster_size and right_count >= min_cluster_size:
            relabel[left] = next_label
            next_label += 1
            rows.append((relabel[node], relabel[left], lam, left_count))
            relabel[right] = next_label
            next_label += 1
            rows.append((relabel[node], relabel[right], lam, right_count))
        elif left_count < min_cluster_size and right_count < min_cluster_size:
            shed_points(left, relabel[node], lam)
            shed_points(right, relabel[node], lam)
        elif left_count < min_cluster_size:
            relabel[right] = relabel[node]
            shed_points(left, relabel[node], lam)
        else:
            relabel[left] = relabel[node]
            shed_points(right, relabel[node], lam)

    return np.array(rows, dtype=CONDENSED_DTYPE)


def cluster_stability(condensed: np.ndarray) -> dict[int, float]:
    """Integral of (lambda - birth lambda) over each cluster's members."""
    births: dict[int, float] = {}
    for row in condensed:
        births[int(row["child"])] = float(row["lam"])
    root = int(condensed["parent"].min())
    births[root] = 0.0

    stability: dict[int, float] = {}
    for row in condensed:
        parent = int(row["parent"])
        value = (float(row["lam"]) - births[parent]) * int(row["size"])
        stability[parent] = stability.get(parent, 0.0) + value
    return stability


def _bfs_cluster_rows(cluster_rows: np.ndarray, start: int) -> list[int]:
    out: list[int] = []
    frontier = [start]
    while frontier:
        out.extend(frontier)
        mask = np.isin(cluster_rows["parent"], frontier)
        frontier = [int(c) for c in cluster_rows["child"][mask]]
    return out


def select_excess_of_mass(condensed: np.ndarray, stability: dict[int, float]) -> set[int]:
    """Pick the cluster set maximizing total stability.

    Bottom-up over the condensed tree: a node is deselected when its
    children jointly beat it (strictly); otherwise it is selected and
    shadows its whole subtree. The root is never a candidate, so a
    corpus with no internal splits selects nothing (all noise).
    """
    root = int(condensed["parent"].min())
    candidates = sorted((node for node in stability if node != root), reverse=True)
    cluster_rows = condensed[condensed["size"] > 1]
    is_selected = {node: True for node in candidates}
    running = dict(stability)

    for node in candidates:
        children = cluster_rows["child"][cluster_rows["parent"] == node]
        subtree = float(sum(running[int(c)] for c in children))
        if subtree > running[node]:
            is_selected[node] = False
            running[node] = subtree
        else:
            for sub in _bfs_cluster_rows(cluster_rows, node):
                if sub != node:
                    is_selected[sub] = False
    return {node for node, keep in is_selected.items() if keep}


def labels_from_selection(
    condensed: np.ndarray, selected: set[int], n_points: int
) -> np.ndarray:
    """Assign each point to the selected cluster it fell out of, or noise.

    A point attaches to the cluster named in its fall-out row; walking
    that cluster's ancestry upward crosses at most one selected cluster
    (selection shadows subtrees), which becomes the point's label.
    Selected ids map to dense labels 0..k-1 in sorted id order.
    """
    parent_of: dict[int, int] = {}
    attachment: dict[int, int] = {}
    for row in condensed:
        child = int(row["child"])
        if child < n_points:
            attachment[child] = int(row["parent"])
        else:
            parent_of[child] = int(row["parent"])

    label_of = {node: i for i, node in enumerate(sorted(selected))}
    labels = np.full(n_points, -1, dtype=np.int64)
    for point in range(n_points):
        node = attachment.get(point)
        while node is not None:
            if node in selected:
                labels[point] = label_of[node]
                break
            node = parent_of.get(node)
    return labels


def hdbscan_labels(
    points: np.ndarray, min_cluster_size: int = 5, min_samples: int | None = None
) -> np.ndarray:
    """Full pipeline: points (n, d) to labels (n,), noise = -1."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n == 0:
        return np.empty(0, dtype=np.int64)
    if n == 1:
        return np.array([-1], dtype=np.int64)
    if min_samples is None:
        min_samples = min_cluster_size
    min_samples = min(min_samples, n)

    distances = pairwise_distances(points)
    core = core_distances(distances, min_samples)
    reachability = mutual_reachability(distances, core)
    tree = minimum_spanning_tree(reachability)
    linkage = single_linkage(tree)
    condensed = condense_tree(linkage, min_cluster_size)
    stability = cluster_stability(condensed)
    selected = select_excess_of_mass(condensed, stability)
    return labels_from_selection(condensed, selected, n)
