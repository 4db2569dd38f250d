"""Command-line interface.

Exit codes: 0 success, 1 a semantically valid request failed while
running (bad query, unreachable provider, eval mismatch), 2 invalid
input or configuration. All errors print a single `error: ...` line to
stderr. Output is deterministic for fixed seeds; nothing prompts.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .baseline import (
    PIPELINE_BASELINE,
    RERANK_FIXED_COST,
    RERANK_LEXICAL,
    RERANK_NONE,
    baseline_answer,
)
from .bench import (
    PIPELINES,
    SYNTH_PRESETS,
    load_evalset,
    make_noisy_queries,
    run_bench,
    synth_preset,
    tune_min_cluster_size,
    write_query_log,
)
from .config import EngineConfig, build_config, config_overrides, load_config
from .corpus import load_corpus
from .embedding import KIND_DETERMINISTIC, KIND_REMOTE, provider_from_spec
from .errors import ConfigError, InputError, RuntimeFailure
from .index import ExpertIndex, compile_index, load_index, save_index
from .router import PIPELINE_ROUTED, RoutedResult, answer_query


class _Parser(argparse.ArgumentParser):
    """argparse, but errors are one line on stderr with exit code 2."""

    def error(self, message):
        self.exit(2, f"error: {message}\n")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="TOML config file")
    p.add_argument("--seed", type=int, help="global seed (clustering, providers)")


def _add_router_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("-m", type=int, help="clusters to route into")
    p.add_argument("-p", type=int, help="chunks scanned per selected cluster")
    p.add_argument("--context-token-budget", type=int, help="cap on context tokens")


def _add_baseline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("-k", type=int, help="baseline top-k")
    p.add_argument(
        "--reranker",
        choices=[RERANK_NONE, RERANK_LEXICAL, RERANK_FIXED_COST],
        help="baseline second stage",
    )
    p.add_argument("--rerank-unit-cost", type=float, help="seconds per reranked chunk")


def _config(args: argparse.Namespace, **sections: dict | None) -> EngineConfig:
    overrides = config_overrides(seed=getattr(args, "seed", None), **sections)
    if getattr(args, "config", None):
        return load_config(args.config, overrides)
    return build_config(None, overrides)


def _router_overrides(args) -> dict:
    return {
        "m": args.m,
        "p": args.p,
        "context_token_budget": args.context_token_budget,
    }


def _baseline_overrides(args) -> dict:
    return {
        "k": args.k,
        "reranker": args.reranker,
        "rerank_unit_cost": args.rerank_unit_cost,
    }


# ---------------------------------------------------------------- commands


def cmd_ingest(args) -> int:
    cfg = _config(
        args,
        chunking={
            "window_size": args.window_size,
            "overlap_fraction": args.overlap_fraction,
        },
        provider={
            "kind": args.provider,
            "dim": args.dim,
            "endpoint": args.endpoint,
            "model_name": args.model_name,
            "batch_size": args.batch_size,
        },
        clustering={
            "min_cluster_size": args.min_cluster_size,
            "min_samples": args.min_samples,
            "max_cluster_size": args.max_cluster_size,
            "tightness_floor": args.tightness_floor,
        },
    )
    corpus = load_corpus(args.corpus)
    provider = cfg.build_provider()
    index, diag = compile_index(corpus, provider, cfg.chunking, cfg.clustering)
    save_index(index, args.index)
    if args.json:
        print(
            json.dumps(
                {
                    "index": str(args.index),
                    "n_chunks": index.n,
                    "m_clusters": index.m,
                    "dim": index.dim,
                    "mean_tightness": index.stats.mean_tightness,
                    "noise_absorbed": diag.noise_absorbed,
                    "density_fallback": diag.density_fallback,
                },
                sort_keys=True,
            )
        )
    else:
        print(
            f"wrote {args.index}: chunks={index.n} clusters={index.m} "
            f"dim={index.dim} mean_tightness={index.stats.mean_tightness:.4f}"
        )
    return 0


def _format_query_footer(result: RoutedResult) -> str:
    if result.selected_clusters:
        selected = ", ".join(
            f"{cid} (score {score:.4f})" for cid, score in result.selected_clusters
        )
    else:
        selected = "(flat scan)"
    counters = result.counters
    return (
        f"-- pipeline={result.pipeline}\n"
        f"-- selected clusters: {selected}\n"
        f"-- comparisons: centroid={counters.centroid_comparisons} "
        f"member={counters.member_comparisons}\n"
        f"-- latency_ms: embed={counters.embed_latency * 1e3:.3f} "
        f"total={counters.end_to_end_latency * 1e3:.3f}"
    )


def cmd_query(args) -> int:
    cfg = _config(
        args,
        router=_router_overrides(args),
        baseline=_baseline_overrides(args),
    )
    index = load_index(args.index)
    provider = provider_from_spec(index.provider_spec)
    if args.pipeline == PIPELINE_BASELINE:
        result = baseline_answer(
            args.text,
            index,
            cfg.baseline,
            provider,
            context_token_budget=cfg.router.context_token_budget,
        )
    else:
        result = answer_query(args.text, index, cfg.router, provider)
    if args.json:
        print(json.dumps(result.to_dict(), sort_keys=True))
    else:
        if result.context:
            print(result.context)
        print(_format_query_footer(result))
    return 0


def cmd_stats(args) -> int:
    index = load_index(args.index)
    ranked = sorted(index.clusters, key=lambda c: (-c.size, c.cluster_id))
    if args.json:
        payload = index.stats.to_dict()
        payload["clusters"] = [
            {"cluster_id": c.cluster_id, "size": c.size, "tightness": c.tightness}
            for c in ranked
        ]
        print(json.dumps(payload, sort_keys=True))
        return 0
    stats = index.stats
    print(
        f"chunks={stats.N} clusters={stats.M} dim={stats.d} "
        f"mean_tightness={stats.mean_tightness:.4f} "
        f"noise_absorbed={stats.noise_absorbed}"
    )
    print(f"{'cluster':>8} {'size':>6} {'tightness':>10}")
    for c in ranked:
        print(f"{c.cluster_id:>8} {c.size:>6} {c.tightness:>10.4f}")
    return 0


def _synthetic_setup(cfg: EngineConfig, preset: str, queries: int):
    synth = synth_preset(preset, seed=cfg.seed)
    evalset = make_noisy_queries(synth, queries, seed=cfg.seed + 1)
    return synth, evalset


def cmd_bench(args) -> int:
    cfg = _config(
        args,
        router=_router_overrides(args),
        baseline=_baseline_overrides(args),
        bench={"runs": args.runs, "warmup": args.warmup},
    )
    if args.synthetic and (args.index or args.evalset):
        raise ConfigError("--synthetic cannot be combined with --index/--evalset")
    if args.synthetic:
        synth, evalset = _synthetic_setup(cfg, args.synthetic, args.queries)
        provider = synth.provider
        index, _ = compile_index(synth.documents, provider, cfg.chunking, cfg.clustering)
        label = args.synthetic
    elif args.index and args.evalset:
        index = load_index(args.index)
        provider = provider_from_spec(index.provider_spec)
        evalset = load_evalset(args.evalset)
        label = Path(args.index).name
    else:
        raise ConfigError("bench needs --synthetic, or both --index and --evalset")

    pipelines = (args.pipeline,) if args.pipeline else PIPELINES
    report, log = run_bench(
        index,
        provider,
        evalset,
        pipelines=pipelines,
        runs=cfg.bench.runs,
        warmup=cfg.bench.warmup,
        router_config=cfg.router,
        baseline_config=cfg.baseline,
        corpus_label=label,
    )
    if args.log:
        write_query_log(log, args.log)
    if args.json:
        print(json.dumps(report.to_dict(), sort_keys=True))
    else:
        print(report.format_table())
    return 0


def _parse_grid(text: str) -> list[int]:
    try:
        values = [int(token) for token in text.split(",") if token.strip()]
    except ValueError:
        raise ConfigError(
            f"grid must be comma-separated integers, got {text!r}"
        ) from None
    if not values:
        raise ConfigError("grid is empty")
    return values


def cmd_tune(args) -> int:
    cfg = _config(args, router=_router_overrides(args))
    grid = _parse_grid(args.grid)
    if args.synthetic and (args.corpus or args.evalset):
        raise ConfigError("--synthetic cannot be combined with --corpus/--evalset")
    if args.synthetic:
        synth, evalset = _synthetic_setup(cfg, args.synthetic, args.queries)
        corpus = synth.documents
        provider = synth.provider
    elif args.corpus and args.evalset:
        corpus = load_corpus(args.corpus)
        provider = cfg.build_provider()
        evalset = load_evalset(args.evalset)
    else:
        raise ConfigError("tune needs --synthetic, or both --corpus and --evalset")

    result = tune_min_cluster_size(
        corpus,
        provider,
        evalset,
        grid,
        chunking=cfg.chunking,
        clustering=cfg.clustering,
        router_config=cfg.router,
    )
    if args.json:
        print(json.dumps(result.to_dict(), sort_keys=True))
    else:
        print(result.format_table())
    return 0


def cmd_serve(args) -> int:
    # imported lazily so the CLI works without the service extras loaded
    import uvicorn

    from .service.app import create_app

    index = load_index(args.index) if args.index else None
    app = create_app(index=index)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="docexperts",
        description="Cluster-routed document retrieval engine.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    ingest = sub.add_parser("ingest", help="build an index from a corpus")
    ingest.add_argument("--corpus", required=True, help="JSONL file or text directory")
    ingest.add_argument("--index", required=True, help="output index path")
    ingest.add_argument("--window-size", type=int)
    ingest.add_argument("--overlap-fraction", type=float)
    ingest.add_argument("--provider", choices=[KIND_DETERMINISTIC, KIND_REMOTE])
    ingest.add_argument("--dim", type=int)
    ingest.add_argument("--endpoint")
    ingest.add_argument("--model-name")
    ingest.add_argument("--batch-size", type=int)
    ingest.add_argument("--min-cluster-size", type=int)
    ingest.add_argument("--min-samples", type=int)
    ingest.add_argument("--max-cluster-size", type=int)
    ingest.add_argument("--tightness-floor", type=float)
    ingest.add_argument("--json", action="store_true")
    _add_config_flags(ingest)
    ingest.set_defaults(func=cmd_ingest)

    query = sub.add_parser("query", help="answer one query against an index")
    query.add_argument("text", help="the query text")
    query.add_argument("--index", required=True)
    query.add_argument(
        "--pipeline", choices=[PIPELINE_ROUTED, PIPELINE_BASELINE],
        default=PIPELINE_ROUTED,
    )
    _add_router_flags(query)
    _add_baseline_flags(query)
    query.add_argument("--json", action="store_true")
    _add_config_flags(query)
    query.set_defaults(func=cmd_query)

    stats = sub.add_parser("stats", help="describe an index")
    stats.add_argument("--index", required=True)
    stats.add_argument("--json", action="store_true")
    stats.set_defaults(func=cmd_stats)

    bench = sub.add_parser("bench", help="compare pipelines over an eval set")
    bench.add_argument("--synthetic", choices=sorted(SYNTH_PRESETS))
    bench.add_argument("--index")
    bench.add_argument("--evalset")
    bench.add_argument("--queries", type=int, default=100, help="synthetic query count")
    bench.add_argument("--runs", type=int)
    bench.add_argument("--warmup", type=int)
    bench.add_argument(
        "--pipeline", choices=[PIPELINE_ROUTED, PIPELINE_BASELINE],
        help="restrict to one pipeline",
    )
    _add_router_flags(bench)
    _add_baseline_flags(bench)
    bench.add_argument("--log", metavar="PATH", help="write per-query JSONL log")
    bench.add_argument("--json", action="store_true")
    _add_config_flags(bench)
    bench.set_defaults(func=cmd_bench)

    tune = sub.add_parser("tune", help="sweep min_cluster_size by hit rate")
    tune.add_argument("--grid", required=True, help="comma-separated sizes, e.g. 5,10,20")
    tune.add_argument("--synthetic", choices=sorted(SYNTH_PRESETS))
    tune.add_argument("--corpus")
    tune.add_argument("--evalset")
    tune.add_argument("--queries", type=int, default=100, help="synthetic query count")
    _add_router_flags(tune)
    tune.add_argument("--json", action="store_true")
    _add_config_flags(tune)
    tune.set_defaults(func=cmd_tune)

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--index", help="index to serve (optional; can build via API)")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
