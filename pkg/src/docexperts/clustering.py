"""Cluster discovery, refinement, and centroid bookkeeping.

The pipeline is: density-based discovery (with a single-cluster
fallback so tiny corpora still work), nearest-centroid absorption of
noise points (every chunk must stay retrievable), then one pass of
seeded KMeans refinement over clusters that are too large or too
diffuse. Every output cluster carries its raw mean centroid, a
normalized copy for cosine routing, and a tightness score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .density import hdbscan_labels
from .embedding import unit_normalize
from .errors import ConfigError


@dataclass(frozen=True)
class ClusteringConfig:
    min_cluster_size: int = 5
    min_samples: int | None = None  # None: follow min_cluster_size
    max_cluster_size: int = 40
    tightness_floor: float = 0.6
    kmeans_max_iters: int = 100
    kmeans_tolerance: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.min_cluster_size < 2:
            raise ConfigError("min_cluster_size must be >= 2")
        if self.min_samples is not None and self.min_samples < 1:
            raise ConfigError("min_samples must be >= 1")
        if self.max_cluster_size <= self.min_cluster_size:
            raise ConfigError("max_cluster_size must exceed min_cluster_size")
        if not -1.0 <= self.tightness_floor <= 1.0:
            raise ConfigError("tightness_floor must be in [-1, 1]")
        if self.kmeans_max_iters < 1:
            raise ConfigError("kmeans_max_iters must be >= 1")
        if self.kmeans_tolerance < 0:
            raise ConfigError("kmeans_tolerance must be >= 0")

    @property
    def effective_min_samples(self) -> int:
        return self.min_cluster_size if self.min_samples is None else self.min_samples


@dataclass
class Cluster:
    cluster_id: int
    member_ids: list[str]
    centroid: np.ndarray  # raw member mean
    unit_centroid: np.ndarray  # normalized copy used for routing
    size: int
    tightness: float

    def __post_init__(self):
        if self.size != len(self.member_ids) or self.size < 1:
            raise ValueError("cluster size must equal len(member_ids) and be >= 1")


def tightness_of(vectors: np.ndarray) -> float:
    """Mean cosine over unordered row pairs; a single row scores 1.0.

    Uses the identity sum_{i<j} u_i.u_j = (||sum u||^2 - n) / 2 over
    unit rows, entirely in float64 so the caller's precision survives.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    n = vectors.shape[0]
    if n == 0:
        raise ValueError("tightness of zero vectors is undefined")
    if n == 1:
        return 1.0
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("tightness undefined with a zero vector member")
    units = vectors / norms
    total = units.sum(axis=0)
    return float((total @ total - n) / (n * (n - 1)))


def compute_tightness(cluster: Cluster, embeddings: Mapping[str, np.ndarray]) -> float:
    return tightness_of(np.stack([embeddings[m] for m in cluster.member_ids]))


def make_cluster(cluster_id: int, member_ids: list[str], vectors: np.ndarray) -> Cluster:
    """Build a cluster with centroid, routing copy, and tightness."""
    if len(member_ids) != vectors.shape[0] or not member_ids:
        raise ValueError("member_ids and vectors must align and be non-empty")
    mean = vectors.astype(np.float64).mean(axis=0)
    return Cluster(
        cluster_id=cluster_id,
        member_ids=list(member_ids),
        centroid=mean.astype(np.float32),
        unit_centroid=unit_normalize(mean),
        size=len(member_ids),
        tightness=tightness_of(vectors),
    )


@dataclass
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    inertia_history: list[float] = field(default_factory=list)
    iterations: int = 0


def _plus_plus_seeds(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """kmeans++: spread initial centers by squared-distance sampling."""
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = points[first]
    dist_sq = np.sum((points - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = float(dist_sq.sum())
        if total == 0.0:
            # all remaining points coincide with a chosen center
            choice = int(rng.integers(n))
        else:
            choice = int(rng.choice(n, p=dist_sq / total))
        centers[j] = points[choice]
        np.minimum(dist_sq, np.sum((points - centers[j]) ** 2, axis=1), out=dist_sq)
    return centers


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int = 0,
    max_iters: int = 100,
    tolerance: float = 1e-4,
) -> KMeansResult:
    """Lloyd's algorithm with kmeans++ seeding, deterministic per seed.

    An iteration assigns, repairs any empty cluster by promoting the
    farthest point of the largest cluster to be that cluster's center,
    records the objective, then moves centers; stops when the largest
    center movement drops below tolerance.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    centers = _plus_plus_seeds(points, k, rng)

    history: list[float] = []
    labels = np.zeros(n, dtype=np.int64)
    iterations = 0
    for _ in range(max_iters):
        iterations += 1
        dist_sq = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        labels = np.argmin(dist_sq, axis=1)

        counts = np.bincount(labels, minlength=k)
        for empty in np.flatnonzero(counts == 0):
            largest = int(np.argmax(counts))
            members = np.flatnonzero(labels == largest)
            farthest = members[int(np.argmax(dist_sq[members, largest]))]
            labels[farthest] = empty
            centers[empty] = points[farthest]
            counts[largest] -= 1
            counts[empty] += 1

        assigned = np.sum((points - centers[labels]) ** 2, axis=1)
        history.append(float(assigned.sum()))

        new_centers = centers.copy()
        for j in range(k):
            members = labels == j
            new_centers[j] = points[members].mean(axis=0)
        shift = float(np.max(np.linalg.norm(new_centers - centers, axis=1)))
        centers = new_centers
        if shift < tolerance:
            break

    return KMeansResult(
        labels=labels, centers=centers, inertia_history=history, iterations=iterations
    )


def density_cluster(
    chunk_ids: list[str], vectors: np.ndarray, config: ClusteringConfig
) -> tuple[list[Cluster], list[str]]:
    """Discover density-based clusters; outliers come back as noise ids.

    Falls back to one cluster holding everything when the corpus is
    smaller than min_cluster_size or when discovery marks every point
    as noise; either way no chunk is lost.
    """
    if len(chunk_ids) != vectors.shape[0] or not chunk_ids:
        raise ValueError("chunk_ids and vectors must align and be non-empty")
    n = len(chunk_ids)
    if n >= config.min_cluster_size:
        labels = hdbscan_labels(
            vectors,
            min_cluster_size=config.min_cluster_size,
            min_samples=min(config.effective_min_samples, n),
        )
    else:
        labels = np.full(n, -1, dtype=np.int64)

    found = sorted(int(l) for l in set(labels.tolist()) if l >= 0)
    if not found:
        return [make_cluster(0, list(chunk_ids), vectors)], []

    clusters = []
    for new_id, label in enumerate(found):
        members = np.flatnonzero(labels == label)
        clusters.append(
            make_cluster(new_id, [chunk_ids[i] for i in members], vectors[members])
        )
    noise = [chunk_ids[i] for i in np.flatnonzero(labels == -1)]
    return clusters, noise


def assign_noise(
    noise: list[str],
    clusters: list[Cluster],
    embeddings: Mapping[str, np.ndarray],
) -> list[Cluster]:
    """Absorb noise chunks into their nearest-centroid clusters.

    Every noise chunk is compared against the pre-absorption routing
    centroids (ties go to the lower cluster_id); centroids and
    tightness are recomputed once at the end.
    """
    if not clusters:
        raise ValueError("assign_noise needs at least one cluster")
    if not noise:
        return clusters

    centroid_matrix = np.stack([c.unit_centroid for c in clusters]).astype(np.float64)
    additions: dict[int, list[str]] = {}
    for chunk_id in noise:
        vector = np.asarray(embeddings[chunk_id], dtype=np.float64)
        norm = np.linalg.norm(vector)
        if norm == 0.0:
            raise ValueError(f"zero embedding for chunk {chunk_id!r}")
        scores = centroid_matrix @ (vector / norm)
        winner = int(np.argmax(scores))
        additions.setdefault(winner, []).append(chunk_id)

    out = []
    for i, cluster in enumerate(clusters):
        if i not in additions:
            out.append(cluster)
            continue
        member_ids = cluster.member_ids + additions[i]
        vectors = np.stack([embeddings[m] for m in member_ids])
        out.append(make_cluster(cluster.cluster_id, member_ids, vectors))
    return out


def refine_large_clusters(
    clusters: list[Cluster],
    config: ClusteringConfig,
    embeddings: Mapping[str, np.ndarray],
) -> list[Cluster]:
    """Split oversized or diffuse clusters with seeded KMeans.

    Trigger: size > max_cluster_size or tightness < tightness_floor.
    Split into k = ceil(size / max_cluster_size), at least 2. One pass
    only; sub-clusters are not re-examined. Output ids are dense.
    """
    out: list[Cluster] = []
    for cluster in clusters:
        oversized = cluster.size > config.max_cluster_size
        diffuse = cluster.tightness < config.tightness_floor
        if not (oversized or diffuse) or cluster.size < 2:
            out.append(cluster)
            continue
        k = max(2, math.ceil(cluster.size / config.max_cluster_size))
        vectors = np.stack([embeddings[m] for m in cluster.member_ids])
        result = kmeans(
            vectors,
            k=k,
            seed=config.seed,
            max_iters=config.kmeans_max_iters,
            tolerance=config.kmeans_tolerance,
        )
        for label in range(k):
            members = np.flatnonzero(result.labels == label)
            out.append(
                make_cluster(
                    0, [cluster.member_ids[i] for i in members], vectors[members]
                )
            )
    return [
        Cluster(
            cluster_id=i,
            member_ids=c.member_ids,
            centroid=c.centroid,
            unit_centroid=c.unit_centroid,
            size=c.size,
            tightness=c.tightness,
        )
        for i, c in enumerate(out)
    ]
