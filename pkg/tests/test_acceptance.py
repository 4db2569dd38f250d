"""Acceptance gate: ten end-to-end checks, one printed line each.

Run with `pytest tests/test_acceptance.py -s` to see the lines.
"""

import json
import time

import numpy as np
import pytest
from sklearn.cluster import HDBSCAN as SkHDBSCAN

from docexperts.baseline import (
    RERANK_FIXED_COST,
    BaselineConfig,
    baseline_answer,
    flat_retrieve,
)
from docexperts.bench import (
    EvalItem,
    EvalSet,
    make_noisy_queries,
    measure_latency,
    synth_corpus,
    tune_min_cluster_size,
)
from docexperts.cli import main
from docexperts.clustering import kmeans, make_cluster, tightness_of
from docexperts.corpus import Document
from docexperts.density import hdbscan_labels
from docexperts.embedding import embed_batch, unit_normalize
from docexperts.index import build_index
from docexperts.router import RouterConfig, answer_query


def _report(n: int, ok: bool, detail: str) -> None:
    print(f"[acceptance {n:02d}] {'PASS' if ok else 'FAIL'} {detail}", flush=True)
    assert ok, f"acceptance {n:02d}: {detail}"


@pytest.fixture(scope="module")
def planted_topics():
    """The shared 10-topic, 500-chunk planted corpus with oracle gold."""
    synth = synth_corpus(topics=10, chunks_per_topic=50, dim=64, noise_sigma=0.05, seed=0)
    evalset = make_noisy_queries(synth, 200, noise_sigma=0.05, seed=1)
    index = build_index(synth.documents, synth.provider)
    oracle_items = []
    for item in evalset.items:
        qv = embed_batch([item.query], synth.provider)[0]
        nearest = flat_retrieve(qv, index, 1)[0][0]
        oracle_items.append(EvalItem(item.query, frozenset({nearest})))
    return synth, index, EvalSet(oracle_items)


def test_01_centroid_equals_member_mean():
    rng = np.random.default_rng(10)
    start = time.perf_counter()
    worst = 0.0
    for i in range(100):
        size = int(rng.integers(1, 51))
        members = np.stack(
            [unit_normalize(rng.normal(size=64)) for _ in range(size)]
        )
        cluster = make_cluster(i, [f"c#{j}" for j in range(size)], members)
        brute = members.astype(np.float64).mean(axis=0)
        worst = max(worst, float(np.max(np.abs(cluster.centroid - brute))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and elapsed < 1.0
    _report(1, ok, f"centroid vs mean: worst coord delta {worst:.2e}, {elapsed:.2f}s")


def test_02_cosine_and_euclidean_order_identically():
    rng = np.random.default_rng(20)
    start = time.perf_counter()
    mismatches = 0
    for _ in range(1000):
        count = int(rng.integers(2, 21))
        dim = int(rng.integers(2, 33))
        query = unit_normalize(rng.normal(size=dim)).astype(np.float64)
        centroids = np.stack(
            [unit_normalize(rng.normal(size=dim)) for _ in range(count)]
        ).astype(np.float64)
        by_cosine = np.argsort(-(centroids @ query), kind="stable")
        distances = np.linalg.norm(centroids - query, axis=1)
        by_distance = np.argsort(distances, kind="stable")
        if not np.array_equal(by_cosine, by_distance):
            mismatches += 1
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 5.0
    _report(2, ok, f"ordering mismatches {mismatches}/1000, {elapsed:.2f}s")


def test_03_router_finds_the_global_nearest_neighbor():
    start = time.perf_counter()
    synth = synth_corpus(topics=10, chunks_per_topic=50, dim=64, noise_sigma=0.05, seed=0)
    evalset = make_noisy_queries(synth, 200, noise_sigma=0.05, seed=1)
    index = build_index(synth.documents, synth.provider)
    hits = {1: 0, 2: 0}
    for item in evalset.items:
        qv = embed_batch([item.query], synth.provider)[0]
        oracle = flat_retrieve(qv, index, 1)[0][0]
        for m in (1, 2):
            result = answer_query(item.query, index, RouterConfig(m=m, p=5), synth.provider)
            if oracle in {chunk_id for chunk_id, _, _ in result.chunks}:
                hits[m] += 1
    elapsed = time.perf_counter() - start
    rate_m2 = hits[2] / len(evalset.items)
    rate_m1 = hits[1] / len(evalset.items)
    ok = rate_m2 >= 0.95 and rate_m1 >= 0.85 and elapsed < 30.0
    _report(
        3,
        ok,
        f"oracle recall m=2 {rate_m2:.3f} (need 0.95), m=1 {rate_m1:.3f} "
        f"(need 0.85), {elapsed:.1f}s",
    )


def test_04_router_compares_a_fraction_of_the_store(planted_topics):
    synth, index, evalset = planted_topics
    n = index.n
    assert n == 500
    assert index.m >= 10
    budget = 0.3 * n
    worst_router = 0
    baseline_exact = True
    for item in evalset.items:
        routed = answer_query(item.query, index, RouterConfig(m=2, p=5), synth.provider)
        total = (
            routed.counters.centroid_comparisons
            + routed.counters.member_comparisons
        )
        worst_router = max(worst_router, total)
        flat = baseline_answer(item.query, index, BaselineConfig(k=10), synth.provider)
        if flat.counters.member_comparisons != n:
            baseline_exact = False
    ok = worst_router <= budget and baseline_exact
    _report(
        4,
        ok,
        f"router worst per-query comparisons {worst_router} <= {budget:.0f}, "
        f"baseline always exactly {n}",
    )


def test_05_router_is_faster_than_the_reranked_baseline(planted_topics):
    synth, index, evalset = planted_topics
    queries = [item.query for item in evalset.items[:100]]
    stats = measure_latency(
        index,
        synth.provider,
        queries,
        runs=1,
        warmup=5,
        router_config=RouterConfig(m=2, p=5),
        baseline_config=BaselineConfig(
            k=10, reranker=RERANK_FIXED_COST, rerank_unit_cost=0.005
        ),
    )
    router_ms = stats["mode"]["retrieval_mean_ms"]
    baseline_ms = stats["baseline"]["retrieval_mean_ms"]
    ratio = baseline_ms / router_ms if router_ms > 0 else float("inf")
    ok = router_ms < baseline_ms and router_ms < 10.0
    _report(
        5,
        ok,
        f"router {router_ms:.3f} ms < baseline {baseline_ms:.1f} ms at N=500; "
        f"speedup {ratio:.0f}x (reported, not asserted)",
    )


def test_06_density_stage_matches_reference_and_kmeans_never_regresses():
    rng = np.random.default_rng(60)
    blob_a = rng.normal(0, 0.01, (20, 8)) + np.eye(8)[0]
    blob_b = rng.normal(0, 0.01, (20, 8)) + np.eye(8)[1]
    outliers = np.stack([5.0 * np.eye(8)[2], -5.0 * np.eye(8)[3], 5.0 * np.eye(8)[4]])
    points = np.vstack([blob_a, blob_b, outliers])

    ours = hdbscan_labels(points, min_cluster_size=5)
    reference = SkHDBSCAN(min_cluster_size=5, algorithm="brute").fit(points).labels_

    def partition(labels):
        clusters = {}
        noise = set()
        for i, label in enumerate(labels):
            if label == -1:
                noise.add(i)
            else:
                clusters.setdefault(label, set()).add(i)
        return {frozenset(v) for v in clusters.values()}, noise

    ours_clusters, ours_noise = partition(ours)
    ref_clusters, ref_noise = partition(reference)
    match = ours_clusters == ref_clusters and ours_noise == ref_noise
    two_blobs = len(ours_clusters) == 2 and ours_noise == {40, 41, 42}

    monotone = True
    for trial in range(5):
        data = np.random.default_rng(trial).normal(size=(100, 8))
        history = kmeans(data, k=5, seed=trial).inertia_history
        if any(b > a + 1e-9 for a, b in zip(history, history[1:])):
            monotone = False
    ok = match and two_blobs and monotone
    _report(
        6,
        ok,
        f"2 blobs + 3 outliers match reference ({len(ours_clusters)} clusters, "
        f"noise {sorted(ours_noise)}); kmeans inertia monotone over 5 trials",
    )


def test_07_ingest_and_query_are_deterministic(tmp_path, capsys):
    corpus_path = tmp_path / "corpus.jsonl"
    vocab = {
        "net": "packet router switch firewall latency bandwidth ethernet tcp",
        "cook": "flour butter sugar oven bake knead dough yeast",
        "astro": "star galaxy nebula telescope orbit planet comet asteroid",
    }
    with open(corpus_path, "w") as fh:
        for name, words in vocab.items():
            tokens = words.split()
            for i in range(8):
                body = " ".join(w for j, w in enumerate(tokens * 3) if (i + j) % 5)
                fh.write(json.dumps({"id": f"{name}-{i}", "text": body}) + "\n")

    ingest = [
        "ingest", "--corpus", str(corpus_path), "--dim", "64",
        "--min-cluster-size", "3", "--seed", "0",
    ]
    a, b = tmp_path / "a.bin", tmp_path / "b.bin"
    assert main(ingest + ["--index", str(a)]) == 0
    assert main(ingest + ["--index", str(b)]) == 0
    identical_files = a.read_bytes() == b.read_bytes()

    outputs = []
    for _ in range(2):
        capsys.readouterr()
        assert main(["query", "oven dough bake", "--index", str(a), "--json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        payload["counters"].pop("end_to_end_latency")
        payload["counters"].pop("embed_latency")
        outputs.append(payload)
    identical_queries = outputs[0] == outputs[1]

    ok = identical_files and identical_queries
    _report(
        7,
        ok,
        f"repeat ingest byte-identical: {identical_files}; "
        f"repeat query identical minus timing: {identical_queries}",
    )


def test_08_tightness_is_the_mean_pairwise_cosine():
    # three unit vectors with pairwise cosines exactly {0.9, 0.8, 0.7}
    a = np.array([1.0, 0.0, 0.0])
    b = np.array([0.9, np.sqrt(1 - 0.81), 0.0])
    c3 = (0.7 - 0.8 * 0.9) / np.sqrt(1 - 0.81)
    c = np.array([0.8, c3, np.sqrt(1 - 0.64 - c3 * c3)])
    members = np.stack([a, b, c])
    value = tightness_of(members)
    delta = abs(value - 0.8)
    singleton = tightness_of(np.array([[0.0, 1.0, 0.0]]))
    ok = delta <= 1e-9 and singleton == 1.0
    _report(
        8,
        ok,
        f"pairwise {{0.9,0.8,0.7}} -> {value:.12f} (delta {delta:.1e}); "
        f"singleton -> {singleton}",
    )


def test_09_tuning_prefers_the_fine_grained_threshold(planted_topics):
    synth, _, oracle_evalset = planted_topics
    result = tune_min_cluster_size(
        synth.documents, synth.provider, oracle_evalset, [5, 60]
    )
    by_value = {row.min_cluster_size: row for row in result.rows}
    table = result.format_table()
    row_60 = next(
        line for line in table.splitlines() if line.strip().startswith("60")
    )
    ok = (
        result.chosen == 5
        and by_value[60].density_fallback is True
        and "yes" in row_60
    )
    _report(
        9,
        ok,
        f"chosen {result.chosen}; sweep row for 60 marks the single-cluster "
        f"fallback: {by_value[60].density_fallback}",
    )


def test_10_synthetic_presets_have_exact_sizes(capsys):
    sizes = {}
    for preset, expected in (("small", 100), ("medium", 200), ("large", 500)):
        capsys.readouterr()
        code = main(
            [
                "bench", "--synthetic", preset, "--queries", "5",
                "--runs", "1", "--warmup", "0", "--json",
            ]
        )
        assert code == 0
        sizes[preset] = json.loads(capsys.readouterr().out)["n_chunks"]
    ok = sizes == {"small": 100, "medium": 200, "large": 500}
    _report(10, ok, f"preset chunk counts {sizes}")
