"""Request and response bodies for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class DocumentIn(BaseModel):
    id: str
    text: str


class BuildRequest(BaseModel):
    documents: list[DocumentIn] = Field(min_length=1)
    dim: int = 256
    seed: int = 0
    window_size: int = 300
    overlap_fraction: float = 0.15
    min_cluster_size: int = 5
    min_samples: int | None = None
    max_cluster_size: int = 40
    tightness_floor: float = 0.6
    save_path: str | None = None


class BuildResponse(BaseModel):
    n_chunks: int
    m_clusters: int
    dim: int
    mean_tightness: float
    noise_absorbed: int
    density_fallback: bool
    saved_to: str | None = None


class LoadRequest(BaseModel):
    path: str


class ClusterRow(BaseModel):
    cluster_id: int
    size: int
    tightness: float


class StatsResponse(BaseModel):
    M: int
    N: int
    d: int
    mean_tightness: float
    cluster_size_histogram: list[tuple[int, int]]
    noise_absorbed: int
    clusters: list[ClusterRow]


class QueryRequest(BaseModel):
    text: str
    pipeline: str = "mode"
    m: int = 2
    p: int = 5
    k: int = 10
    reranker: str = "none"
    context_token_budget: int | None = None


class ClusterScore(BaseModel):
    cluster_id: int
    score: float


class ChunkScore(BaseModel):
    chunk_id: str
    score: float
    cluster_id: int


class CountersOut(BaseModel):
    centroid_comparisons: int
    member_comparisons: int
    end_to_end_latency: float
    embed_latency: float


class QueryResponse(BaseModel):
    pipeline: str
    query: str
    selected_clusters: list[ClusterScore]
    chunks: list[ChunkScore]
    context: str
    counters: CountersOut


class EmbedRequest(BaseModel):
    model: str | None = None
    inputs: list[str] = Field(min_length=1)


class EmbedResponse(BaseModel):
    embeddings: list[list[float]]
