"""Cluster-routed document retrieval engine.

Ingestion chunks and embeds a corpus, groups the chunks into clusters
by embedding density, and stores one centroid per cluster. Queries are
routed through the centroids to a handful of clusters and scanned only
there, instead of against every chunk in the store.
"""

__version__ = "0.1.0"

from .baseline import BaselineConfig, baseline_answer, flat_retrieve, rerank
from .bench import (
    BenchReport,
    EvalItem,
    EvalSet,
    SynthCorpus,
    hit_rate,
    load_evalset,
    make_noisy_queries,
    measure_latency,
    run_bench,
    save_evalset,
    synth_corpus,
    synth_preset,
    tune_min_cluster_size,
)
from .clustering import Cluster, ClusteringConfig, kmeans, tightness_of
from .config import EngineConfig, ProviderSettings, build_config, load_config
from .corpus import Chunk, ChunkingParams, Document, chunk_corpus, load_corpus, tokenize
from .density import hdbscan_labels
from .embedding import (
    DeterministicLocalProvider,
    PlantedProvider,
    ProviderSpec,
    RemoteHttpProvider,
    cosine_similarity,
    embed_batch,
    provider_from_spec,
    unit_normalize,
)
from .errors import (
    ChecksumError,
    ConfigError,
    CorpusFormatError,
    DocExpertsError,
    EmptyDocumentError,
    EmptyQueryError,
    EvalSetError,
    EvalSetFormatError,
    IndexFormatError,
    InputError,
    InvariantError,
    ProviderMismatchError,
    ProviderProtocolError,
    ProviderUnavailableError,
    RuntimeFailure,
    VersionMismatchError,
)
from .index import (
    BuildDiagnostics,
    ExpertIndex,
    IndexStats,
    build_index,
    compile_index,
    load_index,
    save_index,
)
from .router import InstrumentationCounters, RoutedResult, RouterConfig, answer_query

__all__ = [
    "__version__",
    "BaselineConfig",
    "baseline_answer",
    "flat_retrieve",
    "rerank",
    "BenchReport",
    "EvalItem",
    "EvalSet",
    "SynthCorpus",
    "hit_rate",
    "load_evalset",
    "make_noisy_queries",
    "measure_latency",
    "run_bench",
    "save_evalset",
    "synth_corpus",
    "synth_preset",
    "tune_min_cluster_size",
    "Cluster",
    "ClusteringConfig",
    "kmeans",
    "tightness_of",
    "EngineConfig",
    "ProviderSettings",
    "build_config",
    "load_config",
    "Chunk",
    "ChunkingParams",
    "Document",
    "chunk_corpus",
    "load_corpus",
    "tokenize",
    "hdbscan_labels",
    "DeterministicLocalProvider",
    "PlantedProvider",
    "ProviderSpec",
    "RemoteHttpProvider",
    "cosine_similarity",
    "embed_batch",
    "provider_from_spec",
    "unit_normalize",
    "ChecksumError",
    "ConfigError",
    "CorpusFormatError",
    "DocExpertsError",
    "EmptyDocumentError",
    "EmptyQueryError",
    "EvalSetError",
    "EvalSetFormatError",
    "IndexFormatError",
    "InputError",
    "InvariantError",
    "ProviderMismatchError",
    "ProviderProtocolError",
    "ProviderUnavailableError",
    "RuntimeFailure",
    "VersionMismatchError",
    "BuildDiagnostics",
    "ExpertIndex",
    "IndexStats",
    "build_index",
    "compile_index",
    "load_index",
    "save_index",
    "InstrumentationCounters",
    "RoutedResult",
    "RouterConfig",
    "answer_query",
]
