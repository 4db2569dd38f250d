"""Flat top-k retrieval with a pluggable re-rank stage.

The comparator for the routed pipeline, and also the test oracle: the
scan is exact over all N chunks, so its top-1 is the true nearest
neighbor by construction. Re-rankers stand in for a neural
cross-encoder: a lexical-overlap scorer keeps a behavioral re-ranking
stage, and a fixed-cost mock reproduces the per-candidate latency
structure without any model.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .corpus import tokenize
from .embedding import embed_batch
from .errors import ConfigError, EmptyQueryError
from .index import ExpertIndex
from .router import (
    InstrumentationCounters,
    RoutedResult,
    assemble_context,
    check_provider,
)

PIPELINE_BASELINE = "baseline"

RERANK_NONE = "none"
RERANK_LEXICAL = "lexical-overlap"
RERANK_FIXED_COST = "fixed-cost-mock"
RERANK_MODES = (RERANK_NONE, RERANK_LEXICAL, RERANK_FIXED_COST)


@dataclass(frozen=True)
class BaselineConfig:
    k: int = 10
    reranker: str = RERANK_NONE
    rerank_unit_cost: float = 0.0  # seconds per candidate, fixed-cost-mock only

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.reranker not in RERANK_MODES:
            raise ConfigError(
                f"unknown reranker {self.reranker!r}; choose from {', '.join(RERANK_MODES)}"
            )
        if self.rerank_unit_cost < 0:
            raise ConfigError("rerank_unit_cost must be >= 0")


def flat_retrieve(
    query_embedding: np.ndarray, index: ExpertIndex, k: int
) -> list[tuple[str, float]]:
    """Exact cosine scan over every chunk; top-k, ties by chunk_id.

    With k=1 this is the true global nearest neighbor, which routing
    tests use as ground truth.
    """
    scores = index.vectors.astype(np.float64) @ np.asarray(query_embedding, dtype=np.float64)
    by_row = list(index.row_of.items())  # (chunk_id, row), store order
    pairs = sorted(
        ((chunk_id, float(scores[row])) for chunk_id, row in by_row),
        key=lambda pair: (-pair[1], pair[0]),
    )
    return pairs[:k]


def _overlap_f1(query_tokens: set[str], text: str) -> float:
    chunk_tokens = set(tokenize(text))
    overlap = len(query_tokens & chunk_tokens)
    if overlap == 0:
        return 0.0
    precision = overlap / len(chunk_tokens)
    recall = overlap / len(query_tokens)
    return 2.0 * precision * recall / (precision + recall)


def rerank(
    query: str,
    candidates: list[tuple[str, float]],
    config: BaselineConfig,
    index: ExpertIndex,
) -> list[tuple[str, float]]:
    """Second-stage scoring of the flat candidates.

    lexical-overlap re-scores by token-set F1 against the query and
    re-sorts (stable, so vector-score order breaks ties);
    fixed-cost-mock burns rerank_unit_cost per candidate and keeps the
    input order; none is identity.
    """
    if not candidates:
        raise ValueError("candidates must be non-empty")
    if config.reranker == RERANK_NONE:
        return list(candidates)
    if config.reranker == RERANK_FIXED_COST:
        for _ in candidates:
            time.sleep(config.rerank_unit_cost)
        return list(candidates)
    query_tokens = set(tokenize(query))
    scored = [
        (chunk_id, _overlap_f1(query_tokens, index.chunks[chunk_id].text))
        for chunk_id, _ in candidates
    ]
    return sorted(scored, key=lambda pair: -pair[1])


def baseline_answer(
    query: str,
    index: ExpertIndex,
    config: BaselineConfig,
    provider,
    context_token_budget: int | None = None,
) -> RoutedResult:
    """Flat retrieve + optional rerank, instrumented like the router.

    centroid_comparisons stays 0 (no routing stage);
    member_comparisons is N, the whole corpus.
    """
    started = time.perf_counter()
    if not query.strip():
        raise EmptyQueryError("query text is empty")
    check_provider(index, provider)
    counters = InstrumentationCounters()

    embed_started = time.perf_counter()
    query_embedding = embed_batch([query], provider)[0]
    counters.embed_latency = time.perf_counter() - embed_started

    candidates = flat_retrieve(query_embedding, index, config.k)
    counters.member_comparisons = index.n
    ranked = rerank(query, candidates, config, index)

    chunks = [
        (chunk_id, score, index.cluster_of(chunk_id)) for chunk_id, score in ranked
    ]
    context = assemble_context(chunks, index, context_token_budget)
    counters.end_to_end_latency = time.perf_counter() - started
    return RoutedResult(
        query_text=query,
        query_embedding=query_embedding,
        selected_clusters=[],
        chunks=chunks,
        context=context,
        counters=counters,
        pipeline=PIPELINE_BASELINE,
    )
