"""Benchmark harness: synthetic corpora, eval sets, latency, tuning.

Everything here is deterministic for a given seed so that benchmark
numbers and tuning decisions are reproducible run to run.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .baseline import PIPELINE_BASELINE, BaselineConfig, baseline_answer
from .clustering import ClusteringConfig
from .corpus import ChunkingParams, Document
from .embedding import PlantedProvider
from .errors import ConfigError, DocExpertsError, EvalSetError, EvalSetFormatError
from .index import ExpertIndex, compile_index
from .router import PIPELINE_ROUTED, RoutedResult, RouterConfig, answer_query

logger = logging.getLogger(__name__)

PIPELINES = (PIPELINE_ROUTED, PIPELINE_BASELINE)

# topics x chunks_per_topic for the built-in synthetic presets
SYNTH_TOPICS = 10
SYNTH_DIM = 64
SYNTH_SIGMA = 0.05
SYNTH_PRESETS = {"small": 100, "medium": 200, "large": 500}


# ---------------------------------------------------------------- eval sets


@dataclass(frozen=True)
class EvalItem:
    query: str
    gold_chunk_ids: frozenset[str]


@dataclass
class EvalSet:
    items: list[EvalItem]

    def validate_against(self, index: ExpertIndex) -> None:
        """Every gold id must resolve to a chunk in the index."""
        for i, item in enumerate(self.items):
            missing = sorted(g for g in item.gold_chunk_ids if g not in index.chunks)
            if missing:
                raise EvalSetError(
                    f"eval item {i} ({item.query!r}): gold chunk ids not in "
                    f"index: {', '.join(missing)}"
                )


def load_evalset(path: str | Path) -> EvalSet:
    """Read a JSONL eval set: {"query": str, "gold_chunk_ids": [str, ...]}."""
    path = Path(path)
    if not path.is_file():
        raise EvalSetFormatError(f"eval set file not found: {path}")
    items: list[EvalItem] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise EvalSetFormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(row, dict):
                raise EvalSetFormatError(f"{path}:{lineno}: expected a JSON object")
            if "query" not in row or "gold_chunk_ids" not in row:
                raise EvalSetFormatError(
                    f"{path}:{lineno}: object needs query and gold_chunk_ids"
                )
            query = row["query"]
            gold = row["gold_chunk_ids"]
            if not isinstance(query, str) or not query.strip():
                raise EvalSetFormatError(f"{path}:{lineno}: query must be a non-empty string")
            if (
                not isinstance(gold, list)
                or not gold
                or not all(isinstance(g, str) for g in gold)
            ):
                raise EvalSetFormatError(
                    f"{path}:{lineno}: gold_chunk_ids must be a non-empty list of strings"
                )
            items.append(EvalItem(query=query, gold_chunk_ids=frozenset(gold)))
    if not items:
        raise EvalSetFormatError(f"{path}: eval set is empty")
    return EvalSet(items)


def save_evalset(evalset: EvalSet, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in evalset.items:
            fh.write(
                json.dumps(
                    {"query": item.query, "gold_chunk_ids": sorted(item.gold_chunk_ids)},
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )


# ---------------------------------------------------------- synthetic corpus


@dataclass
class SynthCorpus:
    """A planted-topic corpus plus the provider that knows its vectors."""

    documents: list[Document]
    provider: PlantedProvider
    topic_of: dict[str, int]  # chunk_id -> topic
    label: str = "synthetic"

    @property
    def chunk_ids(self) -> list[str]:
        return sorted(self.topic_of)


def synth_corpus(
    topics: int,
    chunks_per_topic: int,
    dim: int,
    noise_sigma: float,
    seed: int = 0,
) -> SynthCorpus:
    """Plant `topics` orthogonal axis centers and scatter chunks around them.

    Each chunk vector is normalize(center + sigma * gaussian). Every
    document holds exactly one chunk, so chunk ids are "<doc_id>#0".
    """
    if topics < 1:
        raise ConfigError("topics must be >= 1")
    if chunks_per_topic < 1:
        raise ConfigError("chunks_per_topic must be >= 1")
    if dim < topics:
        raise ConfigError(
            f"dim {dim} cannot host {topics} orthogonal topic centers"
        )
    if noise_sigma < 0:
        raise ConfigError("noise_sigma must be >= 0")

    rng = np.random.default_rng(seed)
    provider = PlantedProvider(dim, label=f"synth-{seed}")
    documents: list[Document] = []
    topic_of: dict[str, int] = {}
    for t in range(topics):
        center = np.zeros(dim, dtype=np.float64)
        center[t] = 1.0
        for i in range(chunks_per_topic):
            doc_id = f"t{t:02d}c{i:03d}"
            vec = center + rng.normal(0.0, 1.0, dim) * noise_sigma
            provider.register(doc_id, vec)
            documents.append(Document(doc_id=doc_id, text=doc_id))
            topic_of[f"{doc_id}#0"] = t
    return SynthCorpus(documents=documents, provider=provider, topic_of=topic_of)


def synth_preset(name: str, seed: int = 0) -> SynthCorpus:
    if name not in SYNTH_PRESETS:
        raise ConfigError(
            f"unknown synthetic preset {name!r}; choose from {sorted(SYNTH_PRESETS)}"
        )
    total = SYNTH_PRESETS[name]
    corpus = synth_corpus(
        topics=SYNTH_TOPICS,
        chunks_per_topic=total // SYNTH_TOPICS,
        dim=SYNTH_DIM,
        noise_sigma=SYNTH_SIGMA,
        seed=seed,
    )
    corpus.label = name
    return corpus


def make_noisy_queries(
    synth: SynthCorpus,
    count: int,
    noise_sigma: float = SYNTH_SIGMA,
    seed: int = 1,
) -> EvalSet:
    """Queries are noisy copies of randomly chosen chunks.

    The copied chunk is the gold answer. Query vectors are registered
    with the corpus provider under synthetic query texts.
    """
    if count < 1:
        raise ConfigError("count must be >= 1")
    rng = np.random.default_rng(seed)
    chunk_ids = synth.chunk_ids
    items: list[EvalItem] = []
    for j in range(count):
        source = chunk_ids[int(rng.integers(len(chunk_ids)))]
        # single-chunk documents: chunk text is the doc id
        base = synth.provider.embed_batch([source.split("#")[0]])[0]
        vec = base.astype(np.float64) + rng.normal(0.0, 1.0, base.shape[0]) * noise_sigma
        query_text = f"q{j:04d}"
        synth.provider.register(query_text, vec)
        items.append(EvalItem(query=query_text, gold_chunk_ids=frozenset({source})))
    return EvalSet(items)


# ------------------------------------------------------------- measurement


def run_query(
    pipeline: str,
    query: str,
    index: ExpertIndex,
    provider,
    router_config: RouterConfig,
    baseline_config: BaselineConfig,
) -> RoutedResult:
    if pipeline == PIPELINE_ROUTED:
        return answer_query(query, index, router_config, provider)
    if pipeline == PIPELINE_BASELINE:
        return baseline_answer(
            query,
            index,
            baseline_config,
            provider,
            context_token_budget=router_config.context_token_budget,
        )
    raise ConfigError(f"unknown pipeline {pipeline!r}")


def _replay_run(
    pipeline: str,
    queries: list[str],
    index: ExpertIndex,
    provider,
    router_config: RouterConfig,
    baseline_config: BaselineConfig,
    warmup: int,
    run_idx: int,
) -> list[dict]:
    for query in queries[:warmup]:
        run_query(pipeline, query, index, provider, router_config, baseline_config)
    rows = []
    for qi, query in enumerate(queries):
        result = run_query(
            pipeline, query, index, provider, router_config, baseline_config
        )
        end_to_end = result.counters.end_to_end_latency
        embed = result.counters.embed_latency
        rows.append(
            {
                "run": run_idx,
                "pipeline": pipeline,
                "query_index": qi,
                "query": query,
                "end_to_end_ms": end_to_end * 1e3,
                "embed_ms": embed * 1e3,
                "retrieval_ms": (end_to_end - embed) * 1e3,
                "centroid_comparisons": result.counters.centroid_comparisons,
                "member_comparisons": result.counters.member_comparisons,
                "chunks": [[chunk_id, score] for chunk_id, score, _ in result.chunks],
            }
        )
    return rows


def _latency_stats(rows: list[dict]) -> dict:
    """Per-run mean/p50/p95, averaged across runs; embed tracked apart."""
    runs = sorted({row["run"] for row in rows})
    agg: dict[str, list[float]] = {}
    for run_idx in runs:
        total = np.array(
            [row["end_to_end_ms"] for row in rows if row["run"] == run_idx]
        )
        retrieval = np.array(
            [row["retrieval_ms"] for row in rows if row["run"] == run_idx]
        )
        embed = np.array([row["embed_ms"] for row in rows if row["run"] == run_idx])
        agg.setdefault("mean_ms", []).append(float(total.mean()))
        agg.setdefault("p50_ms", []).append(float(np.percentile(total, 50)))
        agg.setdefault("p95_ms", []).append(float(np.percentile(total, 95)))
        agg.setdefault("retrieval_mean_ms", []).append(float(retrieval.mean()))
        agg.setdefault("retrieval_p50_ms", []).append(float(np.percentile(retrieval, 50)))
        agg.setdefault("retrieval_p95_ms", []).append(float(np.percentile(retrieval, 95)))
        agg.setdefault("embed_mean_ms", []).append(float(embed.mean()))
    return {key: float(np.mean(values)) for key, values in agg.items()}


def measure_latency(
    index: ExpertIndex,
    provider,
    queries: list[str],
    pipelines: tuple[str, ...] = PIPELINES,
    runs: int = 3,
    warmup: int = 5,
    router_config: RouterConfig | None = None,
    baseline_config: BaselineConfig | None = None,
) -> dict[str, dict]:
    """Time each pipeline over the queries: warmup unrecorded, then every
    query timed, repeated `runs` times, per-run stats averaged."""
    if runs < 1:
        raise ConfigError("runs must be >= 1")
    if not queries:
        raise ConfigError("no queries to time")
    rc = router_config or RouterConfig()
    bc = baseline_config or BaselineConfig()
    out = {}
    for pipeline in pipelines:
        rows: list[dict] = []
        for run_idx in range(runs):
            rows.extend(
                _replay_run(pipeline, queries, index, provider, rc, bc, warmup, run_idx)
            )
        out[pipeline] = _latency_stats(rows)
    return out


def _hits_from_rows(rows: list[dict], evalset: EvalSet) -> float:
    """Fraction of eval items whose gold intersects the returned chunks."""
    by_query = {row["query_index"]: row for row in rows if row["run"] == rows[0]["run"]}
    hits = 0
    for qi, item in enumerate(evalset.items):
        returned = {chunk_id for chunk_id, _ in by_query[qi]["chunks"]}
        if item.gold_chunk_ids & returned:
            hits += 1
    return hits / len(evalset.items)


def hit_rate(
    index: ExpertIndex,
    evalset: EvalSet,
    pipeline: str,
    provider,
    router_config: RouterConfig | None = None,
    baseline_config: BaselineConfig | None = None,
) -> float:
    """Fraction of eval items whose gold appears in the pipeline's results.

    Result depth is what the pipeline returns: m*p merged chunks for the
    routed pipeline, k for the baseline.
    """
    if not evalset.items:
        raise EvalSetError("eval set is empty")
    evalset.validate_against(index)
    rc = router_config or RouterConfig()
    bc = baseline_config or BaselineConfig()
    hits = 0
    for item in evalset.items:
        result = run_query(pipeline, item.query, index, provider, rc, bc)
        if item.gold_chunk_ids & {chunk_id for chunk_id, _, _ in result.chunks}:
            hits += 1
    return hits / len(evalset.items)


# ------------------------------------------------------------------ report


@dataclass
class BenchReport:
    corpus_label: str
    n_chunks: int
    m_clusters: int
    dim: int
    runs: int
    mean_tightness: float
    pipelines: dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "corpus_label": self.corpus_label,
            "n_chunks": self.n_chunks,
            "m_clusters": self.m_clusters,
            "dim": self.dim,
            "runs": self.runs,
            "mean_tightness": self.mean_tightness,
            "pipelines": self.pipelines,
        }

    def format_table(self) -> str:
        lines = [
            f"corpus={self.corpus_label}  N={self.n_chunks}  M={self.m_clusters}  "
            f"d={self.dim}  runs={self.runs}  mean_tightness={self.mean_tightness:.4f}",
            f"{'pipeline':<10} {'mean_ms':>9} {'p50_ms':>9} {'p95_ms':>9} "
            f"{'retr_ms':>9} {'embed_ms':>9} {'cmp_ctr':>9} {'cmp_mem':>9} {'hit_rate':>9}",
        ]
        for name, stats in self.pipelines.items():
            lat = stats["latency"]
            rate = stats["hit_rate"]
            lines.append(
                f"{name:<10} {lat['mean_ms']:>9.3f} {lat['p50_ms']:>9.3f} "
                f"{lat['p95_ms']:>9.3f} {lat['retrieval_mean_ms']:>9.3f} "
                f"{lat['embed_mean_ms']:>9.3f} "
                f"{stats['mean_centroid_comparisons']:>9.1f} "
                f"{stats['mean_member_comparisons']:>9.1f} "
                + (f"{rate:>9.3f}" if rate is not None else f"{'-':>9}")
            )
        return "\n".join(lines)


def run_bench(
    index: ExpertIndex,
    provider,
    evalset: EvalSet,
    pipelines: tuple[str, ...] = PIPELINES,
    runs: int = 3,
    warmup: int = 5,
    router_config: RouterConfig | None = None,
    baseline_config: BaselineConfig | None = None,
    corpus_label: str = "corpus",
) -> tuple[BenchReport, list[dict]]:
    """Benchmark the pipelines over an eval set.

    Returns the report plus per-query log rows (one dict per query per
    run per pipeline) from which every reported statistic can be
    recomputed.
    """
    if runs < 1:
        raise ConfigError("runs must be >= 1")
    if not evalset.items:
        raise EvalSetError("eval set is empty")
    evalset.validate_against(index)
    rc = router_config or RouterConfig()
    bc = baseline_config or BaselineConfig()
    queries = [item.query for item in evalset.items]

    log: list[dict] = []
    per_pipeline: dict[str, dict] = {}
    for pipeline in pipelines:
        rows: list[dict] = []
        for run_idx in range(runs):
            rows.extend(
                _replay_run(pipeline, queries, index, provider, rc, bc, warmup, run_idx)
            )
        log.extend(rows)
        per_pipeline[pipeline] = {
            "latency": _latency_stats(rows),
            "mean_centroid_comparisons": float(
                np.mean([row["centroid_comparisons"] for row in rows])
            ),
            "mean_member_comparisons": float(
                np.mean([row["member_comparisons"] for row in rows])
            ),
            "hit_rate": _hits_from_rows(rows, evalset),
        }

    report = BenchReport(
        corpus_label=corpus_label,
        n_chunks=index.n,
        m_clusters=index.m,
        dim=index.dim,
        runs=runs,
        mean_tightness=index.stats.mean_tightness,
        pipelines=per_pipeline,
    )
    return report, log


def write_query_log(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


# ------------------------------------------------------------------ tuning


@dataclass(frozen=True)
class TuneRow:
    min_cluster_size: int
    hit_rate: float | None
    clusters: int | None
    density_fallback: bool | None
    noise_absorbed: int | None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "min_cluster_size": self.min_cluster_size,
            "hit_rate": self.hit_rate,
            "clusters": self.clusters,
            "density_fallback": self.density_fallback,
            "noise_absorbed": self.noise_absorbed,
            "error": self.error,
        }


@dataclass
class TuneResult:
    chosen: int
    rows: list[TuneRow]

    def to_dict(self) -> dict:
        return {"chosen": self.chosen, "rows": [row.to_dict() for row in self.rows]}

    def format_table(self) -> str:
        lines = [
            f"{'min_cluster_size':>16} {'hit_rate':>9} {'clusters':>9} "
            f"{'fallback':>9} {'absorbed':>9}  note"
        ]
        for row in self.rows:
            if row.error is not None:
                lines.append(
                    f"{row.min_cluster_size:>16} {'-':>9} {'-':>9} {'-':>9} {'-':>9}  "
                    f"failed: {row.error}"
                )
                continue
            fallback = "yes" if row.density_fallback else "no"
            lines.append(
                f"{row.min_cluster_size:>16} {row.hit_rate:>9.3f} {row.clusters:>9} "
                f"{fallback:>9} {row.noise_absorbed:>9}"
            )
        lines.append(f"chosen: {self.chosen}")
        return "\n".join(lines)


def tune_min_cluster_size(
    corpus: list[Document],
    provider,
    evalset: EvalSet,
    grid: list[int],
    chunking: ChunkingParams | None = None,
    clustering: ClusteringConfig | None = None,
    router_config: RouterConfig | None = None,
) -> TuneResult:
    """Rebuild the index for each grid value and score routed hit rate.

    Picks the highest hit rate, ties going to the smaller value. Grid
    points whose build or evaluation fails are recorded and skipped.
    max_cluster_size is lifted to stay above the candidate value so the
    sweep can explore sizes past the configured refinement cap.
    """
    if not grid:
        raise ConfigError("grid must not be empty")
    base = clustering or ClusteringConfig()
    rc = router_config or RouterConfig()

    rows: list[TuneRow] = []
    for value in sorted(set(grid)):
        try:
            config = replace(
                base,
                min_cluster_size=value,
                max_cluster_size=max(base.max_cluster_size, value + 1),
            )
            index, diag = compile_index(corpus, provider, chunking, config)
            rate = hit_rate(index, evalset, PIPELINE_ROUTED, provider, router_config=rc)
        except DocExpertsError as exc:
            logger.warning("tune: min_cluster_size=%d failed: %s", value, exc)
            rows.append(
                TuneRow(value, None, None, None, None, error=str(exc))
            )
            continue
        rows.append(
            TuneRow(
                min_cluster_size=value,
                hit_rate=rate,
                clusters=index.m,
                density_fallback=diag.density_fallback,
                noise_absorbed=diag.noise_absorbed,
            )
        )

    scored = [row for row in rows if row.hit_rate is not None]
    if not scored:
        raise ConfigError("every grid point failed to build or evaluate")
    chosen = scored[0].min_cluster_size
    best = scored[0].hit_rate
    for row in scored[1:]:
        # strict improvement only, so ties resolve to the smaller value
        if row.hit_rate > best:
            chosen = row.min_cluster_size
            best = row.hit_rate
    return TuneResult(chosen=chosen, rows=rows)
