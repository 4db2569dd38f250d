"""Query answering: route to clusters, scan within, assemble context.

The query path never touches the whole corpus: the query embedding is
compared against all M cluster centroids (M counted comparisons), then
exact cosine scans run only inside the selected clusters. All vectors
are unit-normalized, so the cosine argmax over centroids coincides
with the Euclidean argmin.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .clustering import Cluster
from .corpus import tokenize
from .embedding import embed_batch
from .errors import ConfigError, EmptyQueryError, ProviderMismatchError
from .index import ExpertIndex

PIPELINE_ROUTED = "mode"


@dataclass(frozen=True)
class RouterConfig:
    m: int = 2  # clusters to select
    p: int = 5  # chunks per selected cluster
    context_token_budget: int | None = None

    def __post_init__(self):
        if self.m < 1:
            raise ConfigError("m must be >= 1")
        if self.p < 1:
            raise ConfigError("p must be >= 1")
        if self.context_token_budget is not None and self.context_token_budget < 0:
            raise ConfigError("context_token_budget must be >= 0")


@dataclass
class InstrumentationCounters:
    centroid_comparisons: int = 0
    member_comparisons: int = 0
    end_to_end_latency: float = 0.0  # seconds
    embed_latency: float = 0.0

    def to_dict(self) -> dict:
        return {
            "centroid_comparisons": self.centroid_comparisons,
            "member_comparisons": self.member_comparisons,
            "end_to_end_latency": self.end_to_end_latency,
            "embed_latency": self.embed_latency,
        }


@dataclass
class RoutedResult:
    query_text: str
    query_embedding: np.ndarray
    selected_clusters: list[tuple[int, float]]
    chunks: list[tuple[str, float, int]]  # (chunk_id, score, cluster_id)
    context: str
    counters: InstrumentationCounters
    pipeline: str = PIPELINE_ROUTED

    def to_dict(self, include_embedding: bool = False) -> dict:
        out = {
            "pipeline": self.pipeline,
            "query": self.query_text,
            "selected_clusters": [
                {"cluster_id": cid, "score": score} for cid, score in self.selected_clusters
            ],
            "chunks": [
                {"chunk_id": chunk_id, "score": score, "cluster_id": cid}
                for chunk_id, score, cid in self.chunks
            ],
            "context": self.context,
            "counters": self.counters.to_dict(),
        }
        if include_embedding:
            out["query_embedding"] = [float(x) for x in self.query_embedding]
        return out


def check_provider(index: ExpertIndex, provider) -> None:
    """The query-time provider must be the one the index was built with."""
    ours = provider.spec.identity()
    theirs = index.provider_spec.identity()
    if ours != theirs:
        raise ProviderMismatchError(
            f"provider {ours} does not match index provider {theirs}"
        )


def embed_query(query: str, provider) -> np.ndarray:
    if not query.strip():
        raise EmptyQueryError("query text is empty")
    return embed_batch([query], provider)[0]


def route_embedding(
    query_embedding: np.ndarray, index: ExpertIndex, m: int
) -> list[tuple[int, float]]:
    """Score all M routing centroids, return the top-m clusters.

    Exactly one comparison per centroid; ties prefer the lower
    cluster_id.
    """
    centroids = index.unit_centroid_matrix().astype(np.float64)
    scores = centroids @ np.asarray(query_embedding, dtype=np.float64)
    ranked = sorted(range(index.m), key=lambda cid: (-scores[cid], cid))
    return [(cid, float(scores[cid])) for cid in ranked[: min(m, index.m)]]


def route(
    query: str, index: ExpertIndex, config: RouterConfig, provider
) -> list[tuple[int, float]]:
    check_provider(index, provider)
    return route_embedding(embed_query(query, provider), index, config.m)


def retrieve_within(
    query_embedding: np.ndarray, cluster: Cluster, p: int, index: ExpertIndex
) -> list[tuple[str, float]]:
    """Exact cosine scan over one cluster's contiguous vector block."""
    block = index.cluster_vector_block(cluster.cluster_id).astype(np.float64)
    scores = block @ np.asarray(query_embedding, dtype=np.float64)
    pairs = sorted(
        zip(cluster.member_ids, scores.tolist()),
        key=lambda pair: (-pair[1], pair[0]),
    )
    return [(chunk_id, float(score)) for chunk_id, score in pairs[:p]]


def assemble_context(
    ranked: Sequence[tuple[str, float, int]],
    index: ExpertIndex,
    token_budget: int | None = None,
) -> str:
    """Concatenate chunk texts in rank order under a whole-chunk budget.

    Each chunk is preceded by a `[doc_id#ordinal]` header line; chunks
    are separated by blank lines. The budget counts chunk text tokens
    only and never splits a chunk: assembly stops at the first chunk
    that would overflow.
    """
    parts: list[str] = []
    used = 0
    for chunk_id, _score, _cluster_id in ranked:
        chunk = index.chunks[chunk_id]
        cost = len(tokenize(chunk.text))
        if token_budget is not None and used + cost > token_budget:
            break
        used += cost
        parts.append(f"[{chunk.chunk_id}]\n{chunk.text}")
    return "\n\n".join(parts)


def answer_query(
    query: str, index: ExpertIndex, config: RouterConfig, provider
) -> RoutedResult:
    """Full routed retrieval for one query.

    Embed, select the top-m clusters by centroid cosine, scan each
    selected cluster for its top-p members, merge into one global
    score-descending ranking, and assemble the context string.
    """
    started = time.perf_counter()
    if not query.strip():
        raise EmptyQueryError("query text is empty")
    check_provider(index, provider)
    counters = InstrumentationCounters()

    embed_started = time.perf_counter()
    query_embedding = embed_batch([query], provider)[0]
    counters.embed_latency = time.perf_counter() - embed_started

    selected = route_embedding(query_embedding, index, config.m)
    counters.centroid_comparisons = index.m

    candidates: list[tuple[str, float, int]] = []
    for cluster_id, _score in selected:
        cluster = index.clusters[cluster_id]
        counters.member_comparisons += cluster.size
        for chunk_id, score in retrieve_within(query_embedding, cluster, config.p, index):
            candidates.append((chunk_id, score, cluster_id))
    candidates.sort(key=lambda item: (-item[1], item[0]))

    context = assemble_context(candidates, index, config.context_token_budget)
    counters.end_to_end_latency = time.perf_counter() - started
    return RoutedResult(
        query_text=query,
        query_embedding=query_embedding,
        selected_clusters=selected,
        chunks=candidates,
        context=context,
        counters=counters,
    )
