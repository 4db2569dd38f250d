"""FastAPI application exposing ingest, query, stats, and embedding.

The /embed endpoint speaks the same wire protocol the remote embedding
client expects ({"model", "inputs"} in, {"embeddings"} out), so one
service instance can act as another's embedding backend.

Error mapping: invalid input or configuration is 400, a failure while
executing an otherwise valid request is 502, and asking for an index
when none is loaded is 409.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse

from .. import __version__
from ..baseline import PIPELINE_BASELINE, BaselineConfig, baseline_answer
from ..clustering import ClusteringConfig
from ..corpus import ChunkingParams, Document
from ..embedding import DeterministicLocalProvider, provider_from_spec
from ..errors import EmptyQueryError, InputError, RuntimeFailure
from ..index import ExpertIndex, compile_index, load_index, save_index
from ..router import PIPELINE_ROUTED, RouterConfig, answer_query
from .schemas import (
    BuildRequest,
    BuildResponse,
    EmbedRequest,
    EmbedResponse,
    LoadRequest,
    QueryRequest,
    QueryResponse,
    StatsResponse,
)


class _EngineState:
    def __init__(self, index: ExpertIndex | None = None, provider=None):
        self.index = index
        if provider is None and index is not None:
            provider = provider_from_spec(index.provider_spec)
        self.provider = provider

    def require_index(self) -> ExpertIndex:
        if self.index is None:
            raise HTTPException(status_code=409, detail="no index loaded")
        return self.index

    def require_provider(self):
        if self.provider is None:
            raise HTTPException(status_code=409, detail="no provider available")
        return self.provider


def _stats_payload(index: ExpertIndex) -> dict:
    ranked = sorted(index.clusters, key=lambda c: (-c.size, c.cluster_id))
    payload = index.stats.to_dict()
    payload["cluster_size_histogram"] = [
        tuple(pair) for pair in payload["cluster_size_histogram"]
    ]
    payload["clusters"] = [
        {"cluster_id": c.cluster_id, "size": c.size, "tightness": c.tightness}
        for c in ranked
    ]
    return payload


def create_app(index: ExpertIndex | None = None, provider=None) -> FastAPI:
    state = _EngineState(index=index, provider=provider)
    app = FastAPI(title="docexperts", version=__version__)

    @app.exception_handler(EmptyQueryError)
    async def _empty_query(request, exc):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(InputError)
    async def _input_error(request, exc):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(RuntimeFailure)
    async def _runtime_failure(request, exc):
        return JSONResponse(status_code=502, content={"error": str(exc)})

    @app.get("/health")
    def health() -> dict:
        return {
            "status": "ok",
            "version": __version__,
            "index_loaded": state.index is not None,
        }

    @app.post("/index/build", response_model=BuildResponse)
    def build(request: BuildRequest) -> BuildResponse:
        corpus = [Document(doc_id=d.id, text=d.text) for d in request.documents]
        provider = DeterministicLocalProvider(request.dim, seed=request.seed)
        try:
            chunking = ChunkingParams(
                window_size=request.window_size,
                overlap_fraction=request.overlap_fraction,
            )
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        clustering = ClusteringConfig(
            min_cluster_size=request.min_cluster_size,
            min_samples=request.min_samples,
            max_cluster_size=request.max_cluster_size,
            tightness_floor=request.tightness_floor,
            seed=request.seed,
        )
        built, diag = compile_index(corpus, provider, chunking, clustering)
        saved_to = None
        if request.save_path:
            save_index(built, request.save_path)
            saved_to = request.save_path
        state.index = built
        state.provider = provider
        return BuildResponse(
            n_chunks=built.n,
            m_clusters=built.m,
            dim=built.dim,
            mean_tightness=built.stats.mean_tightness,
            noise_absorbed=diag.noise_absorbed,
            density_fallback=diag.density_fallback,
            saved_to=saved_to,
        )

    @app.post("/index/load", response_model=StatsResponse)
    def load(request: LoadRequest) -> StatsResponse:
        loaded = load_index(request.path)
        state.index = loaded
        state.provider = provider_from_spec(loaded.provider_spec)
        return StatsResponse(**_stats_payload(loaded))

    @app.get("/index/stats", response_model=StatsResponse)
    def stats() -> StatsResponse:
        return StatsResponse(**_stats_payload(state.require_index()))

    @app.post("/query", response_model=QueryResponse)
    def query(request: QueryRequest) -> QueryResponse:
        current = state.require_index()
        provider = state.require_provider()
        if request.pipeline == PIPELINE_ROUTED:
            result = answer_query(
                request.text,
                current,
                RouterConfig(
                    m=request.m,
                    p=request.p,
                    context_token_budget=request.context_token_budget,
                ),
                provider,
            )
        elif request.pipeline == PIPELINE_BASELINE:
            result = baseline_answer(
                request.text,
                current,
                BaselineConfig(k=request.k, reranker=request.reranker),
                provider,
                context_token_budget=request.context_token_budget,
            )
        else:
            raise HTTPException(
                status_code=400,
                detail=f"unknown pipeline {request.pipeline!r}",
            )
        return QueryResponse(**result.to_dict())

    @app.post("/embed", response_model=EmbedResponse)
    def embed(request: EmbedRequest) -> EmbedResponse:
        provider = state.require_provider()
        expected = provider.spec.model_name
        if request.model is not None and request.model != expected:
            raise HTTPException(
                status_code=400,
                detail=f"model {request.model!r} not served (expected {expected!r})",
            )
        matrix = provider.embed_batch(list(request.inputs))
        return EmbedResponse(embeddings=[[float(x) for x in row] for row in matrix])

    return app
