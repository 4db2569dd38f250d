"""The routing artifact: clusters, centroids, and per-cluster chunk stores.

Ingestion compiles a corpus into an ExpertIndex once; queries only read
it. The persisted form is a single little-endian binary file whose
payload is fully deterministic for a given corpus, config, and seed, so
rebuilds are byte-identical and round trips are bit-exact.

File layout (all integers little-endian):

    magic (8 bytes) | format version (uint32)
    5 sections, each uint64 length followed by payload:
        meta JSON | chunk JSON | vectors f32 | cluster JSON | centroids f32
    sha256 of everything above (32 bytes)

Vector rows are stored cluster-major so the query path reads one
contiguous block per selected cluster. The centroid section holds the
raw means first, then the normalized routing copies.
"""

from __future__ import annotations

import bisect
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .clustering import (
    Cluster,
    ClusteringConfig,
    assign_noise,
    density_cluster,
    make_cluster,
    refine_large_clusters,
)
from .corpus import Chunk, ChunkingParams, Document, chunk_corpus
from .embedding import ProviderSpec, embed_batch
from .errors import (
    ChecksumError,
    EmptyDocumentError,
    IndexFormatError,
    InvariantError,
    VersionMismatchError,
)

logger = logging.getLogger(__name__)

MAGIC = b"DXPERTIX"
FORMAT_VERSION = 1
_CHECKSUM_BYTES = 32


def _json_bytes(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode(
        "utf-8"
    )


@dataclass(frozen=True)
class IndexStats:
    M: int
    N: int
    d: int
    mean_tightness: float
    cluster_size_histogram: list[tuple[int, int]]
    noise_absorbed: int

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "N": self.N,
            "d": self.d,
            "mean_tightness": self.mean_tightness,
            "cluster_size_histogram": [list(pair) for pair in self.cluster_size_histogram],
            "noise_absorbed": self.noise_absorbed,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "IndexStats":
        return cls(
            M=int(data["M"]),
            N=int(data["N"]),
            d=int(data["d"]),
            mean_tightness=float(data["mean_tightness"]),
            cluster_size_histogram=[
                (int(size), int(count)) for size, count in data["cluster_size_histogram"]
            ],
            noise_absorbed=int(data["noise_absorbed"]),
        )

    @classmethod
    def from_clusters(cls, clusters: list[Cluster], d: int, noise_absorbed: int) -> "IndexStats":
        total = sum(c.size for c in clusters)
        weighted = float(sum(c.tightness * c.size for c in clusters) / total)
        histogram = sorted(Counter(c.size for c in clusters).items())
        return cls(
            M=len(clusters),
            N=total,
            d=d,
            mean_tightness=weighted,
            cluster_size_histogram=histogram,
            noise_absorbed=noise_absorbed,
        )


@dataclass
class ExpertIndex:
    version: int
    provider_spec: ProviderSpec
    chunking: ChunkingParams
    cluster_config: ClusteringConfig
    seed: int
    clusters: list[Cluster]
    chunks: dict[str, Chunk]
    vectors: np.ndarray  # (N, d) float32, cluster-major rows
    row_of: dict[str, int]
    cluster_rows: list[tuple[int, int]]  # row range per cluster
    stats: IndexStats
    _unit_centroids: np.ndarray | None = field(default=None, repr=False)

    @property
    def m(self) -> int:
        return len(self.clusters)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def unit_centroid_matrix(self) -> np.ndarray:
        """(M, d) float32 matrix of normalized centroids, row = cluster_id."""
        if self._unit_centroids is None:
            self._unit_centroids = np.stack([c.unit_centroid for c in self.clusters])
        return self._unit_centroids

    def vector_for(self, chunk_id: str) -> np.ndarray:
        return self.vectors[self.row_of[chunk_id]]

    def cluster_of(self, chunk_id: str) -> int:
        """Home cluster of a chunk, via its row in the cluster-major layout."""
        row = self.row_of[chunk_id]
        starts = [start for start, _ in self.cluster_rows]
        return bisect.bisect_right(starts, row) - 1

    def cluster_vector_block(self, cluster_id: int) -> np.ndarray:
        start, end = self.cluster_rows[cluster_id]
        return self.vectors[start:end]


def canonicalize_clusters(
    clusters: list[Cluster], embeddings: Mapping[str, np.ndarray]
) -> list[Cluster]:
    """Rebuild clusters in a canonical, order-independent form.

    Members sort by chunk_id, clusters sort by their smallest member,
    ids become dense. Centroids and tightness are recomputed over the
    sorted member order so every derived float is reproducible.
    """
    keyed = sorted((sorted(c.member_ids) for c in clusters), key=lambda ms: ms[0])
    return [
        make_cluster(i, members, np.stack([embeddings[m] for m in members]))
        for i, members in enumerate(keyed)
    ]


@dataclass(frozen=True)
class BuildDiagnostics:
    """What the clustering stages did, for tuning sweeps and logs."""

    density_clusters: int
    density_fallback: bool
    noise_absorbed: int
    final_clusters: int


def compile_index(
    corpus: list[Document],
    provider,
    chunking: ChunkingParams | None = None,
    clustering: ClusteringConfig | None = None,
) -> tuple[ExpertIndex, BuildDiagnostics]:
    """Compile a corpus into the routing artifact, reporting stage outcomes.

    chunk -> embed -> density clusters -> absorb noise -> refine ->
    canonical ordering. Deterministic for a given corpus, provider,
    config, and seed.
    """
    if not corpus:
        raise EmptyDocumentError("corpus has no documents")
    chunking = chunking or ChunkingParams()
    clustering = clustering or ClusteringConfig()

    chunk_list = chunk_corpus(corpus, chunking)
    ids = [c.chunk_id for c in chunk_list]
    matrix = embed_batch([c.text for c in chunk_list], provider)
    embeddings = {cid: matrix[i] for i, cid in enumerate(ids)}

    clusters, noise = density_cluster(ids, matrix, clustering)
    # discovery proper cannot produce one cluster with zero noise (any
    # selected cluster excludes at least its sibling points), so that
    # shape identifies the all-in-one fallback
    density_fallback = len(clusters) == 1 and not noise
    density_clusters = len(clusters)
    noise_absorbed = len(noise)
    clusters = assign_noise(noise, clusters, embeddings)
    clusters = refine_large_clusters(clusters, clustering, embeddings)
    clusters = canonicalize_clusters(clusters, embeddings)

    if len(clusters) == 1 and len(ids) >= 2 * clustering.min_cluster_size:
        logger.warning(
            "clustering produced a single cluster over %d chunks; "
            "routing degenerates to a flat scan",
            len(ids),
        )

    index = _assemble(
        provider_spec=provider.spec,
        chunking=chunking,
        cluster_config=clustering,
        clusters=clusters,
        chunk_list=chunk_list,
        embeddings=embeddings,
        noise_absorbed=noise_absorbed,
    )
    validate_index(index)
    diagnostics = BuildDiagnostics(
        density_clusters=density_clusters,
        density_fallback=density_fallback,
        noise_absorbed=noise_absorbed,
        final_clusters=index.m,
    )
    return index, diagnostics


def build_index(
    corpus: list[Document],
    provider,
    chunking: ChunkingParams | None = None,
    clustering: ClusteringConfig | None = None,
) -> ExpertIndex:
    return compile_index(corpus, provider, chunking, clustering)[0]


def _assemble(
    provider_spec: ProviderSpec,
    chunking: ChunkingParams,
    cluster_config: ClusteringConfig,
    clusters: list[Cluster],
    chunk_list: list[Chunk],
    embeddings: Mapping[str, np.ndarray],
    noise_absorbed: int,
) -> ExpertIndex:
    by_id = {c.chunk_id: c for c in chunk_list}
    ordered_chunks: dict[str, Chunk] = {}
    rows: list[np.ndarray] = []
    row_of: dict[str, int] = {}
    cluster_rows: list[tuple[int, int]] = []
    for cluster in clusters:
        start = len(rows)
        for member in cluster.member_ids:
            row_of[member] = len(rows)
            rows.append(embeddings[member])
            ordered_chunks[member] = by_id[member]
        cluster_rows.append((start, len(rows)))

    vectors = np.stack(rows).astype(np.float32)
    stats = IndexStats.from_clusters(clusters, vectors.shape[1], noise_absorbed)
    return ExpertIndex(
        version=FORMAT_VERSION,
        provider_spec=provider_spec,
        chunking=chunking,
        cluster_config=cluster_config,
        seed=cluster_config.seed,
        clusters=clusters,
        chunks=ordered_chunks,
        vectors=vectors,
        row_of=row_of,
        cluster_rows=cluster_rows,
        stats=stats,
    )


def validate_index(index: ExpertIndex) -> None:
    """Check every structural invariant; raise InvariantError on failure."""
    if index.m < 1:
        raise InvariantError("index has no clusters")
    sizes = sum(c.size for c in index.clusters)
    if not (sizes == index.n == len(index.chunks) == len(index.row_of)):
        raise InvariantError(
            f"chunk counts disagree: clusters say {sizes}, vectors {index.n}, "
            f"store {len(index.chunks)}"
        )
    if index.dim != index.provider_spec.dim:
        raise InvariantError(
            f"vector dim {index.dim} != provider dim {index.provider_spec.dim}"
        )

    seen: set[str] = set()
    for cluster, (start, end) in zip(index.clusters, index.cluster_rows):
        if cluster.size != end - start:
            raise InvariantError(f"cluster {cluster.cluster_id} row range size mismatch")
        for offset, member in enumerate(cluster.member_ids):
            if member in seen:
                raise InvariantError(f"chunk {member!r} appears in two clusters")
            seen.add(member)
            if member not in index.chunks:
                raise InvariantError(f"cluster member {member!r} missing from chunk store")
            if index.row_of.get(member) != start + offset:
                raise InvariantError(f"chunk {member!r} row mapping is inconsistent")
        mean = index.vectors[start:end].astype(np.float64).mean(axis=0)
        if np.max(np.abs(mean - cluster.centroid.astype(np.float64))) > 1e-6:
            raise InvariantError(
                f"cluster {cluster.cluster_id} centroid deviates from member mean"
            )

    recomputed = IndexStats.from_clusters(
        index.clusters, index.dim, index.stats.noise_absorbed
    )
    if recomputed != index.stats:
        raise InvariantError("stored stats disagree with clusters")


def _pack_section(payload: bytes) -> bytes:
    return len(payload).to_bytes(8, "little") + payload


def save_index(index: ExpertIndex, path: str | Path) -> None:
    """Write the single-file binary form (see module docstring)."""
    meta = {
        "seed": index.seed,
        "provider": index.provider_spec.to_dict(),
        "chunking": {
            "window_size": index.chunking.window_size,
            "overlap_fraction": index.chunking.overlap_fraction,
        },
        "clustering": {
            "min_cluster_size": index.cluster_config.min_cluster_size,
            "min_samples": index.cluster_config.min_samples,
            "max_cluster_size": index.cluster_config.max_cluster_size,
            "tightness_floor": index.cluster_config.tightness_floor,
            "kmeans_max_iters": index.cluster_config.kmeans_max_iters,
            "kmeans_tolerance": index.cluster_config.kmeans_tolerance,
            "seed": index.cluster_config.seed,
        },
        "stats": index.stats.to_dict(),
    }
    chunk_records = [
        {
            "chunk_id": c.chunk_id,
            "doc_id": c.doc_id,
            "ordinal": c.ordinal,
            "span": list(c.token_span),
            "text": c.text,
        }
        for c in index.chunks.values()  # cluster-major storage order
    ]
    cluster_records = [
        {
            "cluster_id": c.cluster_id,
            "row_start": index.cluster_rows[i][0],
            "row_end": index.cluster_rows[i][1],
            "tightness": c.tightness,
        }
        for i, c in enumerate(index.clusters)
    ]
    vectors = np.ascontiguousarray(index.vectors, dtype="<f4")
    centroids = np.ascontiguousarray(
        np.vstack(
            [np.stack([c.centroid for c in index.clusters]),
             np.stack([c.unit_centroid for c in index.clusters])]
        ),
        dtype="<f4",
    )

    body = b"".join(
        (
            MAGIC,
            FORMAT_VERSION.to_bytes(4, "little"),
            _pack_section(_json_bytes(meta)),
            _pack_section(_json_bytes(chunk_records)),
            _pack_section(vectors.tobytes()),
            _pack_section(_json_bytes(cluster_records)),
            _pack_section(centroids.tobytes()),
        )
    )
    digest = _sha256(body)
    Path(path).write_bytes(body + digest)


def _sha256(data: bytes) -> bytes:
    import hashlib

    return hashlib.sha256(data).digest()


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise InvariantError("section overruns file body")
        out = self.data[self.offset : self.offset + n]
        self.offset += n
        return out

    def section(self) -> bytes:
        length = int.from_bytes(self.take(8), "little")
        return self.take(length)


def load_index(path: str | Path) -> ExpertIndex:
    """Read, verify, and reconstruct a persisted index.

    Check order matters: magic, then format version (so a version bump
    is reported as such, not as corruption), then the checksum, then
    structural invariants.
    """
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IndexFormatError(f"cannot read index file: {exc}") from exc
    if len(data) < len(MAGIC) + 4 or data[: len(MAGIC)] != MAGIC:
        raise IndexFormatError(f"{path}: not an index file")
    version = int.from_bytes(data[len(MAGIC) : len(MAGIC) + 4], "little")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"{path}: format version {version}, this build reads {FORMAT_VERSION}"
        )
    if len(data) < len(MAGIC) + 4 + _CHECKSUM_BYTES:
        raise ChecksumError(f"{path}: file truncated")
    body, digest = data[:-_CHECKSUM_BYTES], data[-_CHECKSUM_BYTES:]
    if _sha256(body) != digest:
        raise ChecksumError(f"{path}: checksum mismatch (corrupt or truncated file)")

    cursor = _Cursor(body)
    cursor.take(len(MAGIC) + 4)
    meta = json.loads(cursor.section())
    chunk_records = json.loads(cursor.section())
    vector_bytes = cursor.section()
    cluster_records = json.loads(cursor.section())
    centroid_bytes = cursor.section()
    if cursor.offset != len(body):
        raise InvariantError(f"{path}: trailing bytes after final section")

    provider_spec = ProviderSpec.from_dict(meta["provider"])
    chunking = ChunkingParams(
        window_size=int(meta["chunking"]["window_size"]),
        overlap_fraction=float(meta["chunking"]["overlap_fraction"]),
    )
    cc = meta["clustering"]
    cluster_config = ClusteringConfig(
        min_cluster_size=int(cc["min_cluster_size"]),
        min_samples=None if cc["min_samples"] is None else int(cc["min_samples"]),
        max_cluster_size=int(cc["max_cluster_size"]),
        tightness_floor=float(cc["tightness_floor"]),
        kmeans_max_iters=int(cc["kmeans_max_iters"]),
        kmeans_tolerance=float(cc["kmeans_tolerance"]),
        seed=int(cc["seed"]),
    )
    stats = IndexStats.from_dict(meta["stats"])

    n = len(chunk_records)
    d = provider_spec.dim
    if len(vector_bytes) != n * d * 4:
        raise InvariantError(f"{path}: vector section holds {len(vector_bytes)} bytes, "
                             f"expected {n * d * 4}")
    vectors = np.frombuffer(vector_bytes, dtype="<f4").reshape(n, d).copy()

    m = len(cluster_records)
    if len(centroid_bytes) != 2 * m * d * 4:
        raise InvariantError(f"{path}: centroid section size mismatch")
    centroid_matrix = np.frombuffer(centroid_bytes, dtype="<f4").reshape(2 * m, d).copy()

    chunks: dict[str, Chunk] = {}
    row_of: dict[str, int] = {}
    ordered_ids: list[str] = []
    for row, record in enumerate(chunk_records):
        chunk = Chunk(
            chunk_id=record["chunk_id"],
            doc_id=record["doc_id"],
            ordinal=int(record["ordinal"]),
            token_span=(int(record["span"][0]), int(record["span"][1])),
            text=record["text"],
        )
        chunks[chunk.chunk_id] = chunk
        row_of[chunk.chunk_id] = row
        ordered_ids.append(chunk.chunk_id)

    clusters: list[Cluster] = []
    cluster_rows: list[tuple[int, int]] = []
    for i, record in enumerate(cluster_records):
        start, end = int(record["row_start"]), int(record["row_end"])
        if int(record["cluster_id"]) != i:
            raise InvariantError(f"{path}: cluster ids are not dense")
        if not (0 <= start < end <= n):
            raise InvariantError(f"{path}: cluster {i} row range out of bounds")
        clusters.append(
            Cluster(
                cluster_id=i,
                member_ids=ordered_ids[start:end],
                centroid=centroid_matrix[i],
                unit_centroid=centroid_matrix[m + i],
                size=end - start,
                tightness=float(record["tightness"]),
            )
        )
        cluster_rows.append((start, end))

    index = ExpertIndex(
        version=version,
        provider_spec=provider_spec,
        chunking=chunking,
        cluster_config=cluster_config,
        seed=int(meta["seed"]),
        clusters=clusters,
        chunks=chunks,
        vectors=vectors,
        row_of=row_of,
        cluster_rows=cluster_rows,
        stats=stats,
    )
    validate_index(index)
    return index
