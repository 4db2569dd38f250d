"""Shared helpers: hand-planted indexes with exact, known geometry."""

import numpy as np

from docexperts.clustering import ClusteringConfig, make_cluster
from docexperts.corpus import Chunk, ChunkingParams
from docexperts.embedding import PlantedProvider
from docexperts.index import ExpertIndex, FORMAT_VERSION, IndexStats, validate_index


def planted_index(groups, dim, provider=None):
    """Build a valid ExpertIndex from explicit cluster contents.

    groups: list of clusters, each a list of (chunk_id, vector) pairs;
    chunk_id must look like "doc#ordinal". Each chunk's text is its own
    chunk_id, registered with a PlantedProvider so queries can reuse
    known vectors. Vectors are unit-normalized on registration.
    """
    provider = provider or PlantedProvider(dim=dim, label="planted-test")
    chunks = {}
    clusters = []
    row_of = {}
    cluster_rows = []
    rows = []
    for cluster_id, members in enumerate(groups):
        ids = []
        start = len(rows)
        for chunk_id, vector in members:
            unit = provider.register(chunk_id, np.asarray(vector, dtype=np.float64))
            doc_id, ordinal = chunk_id.rsplit("#", 1)
            chunks[chunk_id] = Chunk(
                chunk_id=chunk_id,
                doc_id=doc_id,
                ordinal=int(ordinal),
                token_span=(0, 1),
                text=chunk_id,
            )
            row_of[chunk_id] = len(rows)
            rows.append(unit)
            ids.append(chunk_id)
        cluster_rows.append((start, len(rows)))
        clusters.append(make_cluster(cluster_id, ids, np.stack([rows[row_of[i]] for i in ids])))

    vectors = np.stack(rows).astype(np.float32)
    index = ExpertIndex(
        version=FORMAT_VERSION,
        provider_spec=provider.spec,
        chunking=ChunkingParams(),
        cluster_config=ClusteringConfig(),
        seed=0,
        clusters=clusters,
        chunks=chunks,
        vectors=vectors,
        row_of=row_of,
        cluster_rows=cluster_rows,
        stats=IndexStats.from_clusters(clusters, dim, noise_absorbed=0),
    )
    validate_index(index)
    return index, provider
