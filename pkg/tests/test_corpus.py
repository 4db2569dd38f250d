"""Chunking and corpus loading."""

import json
import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from docexperts.corpus import (
    Chunk,
    ChunkingParams,
    Document,
    chunk_corpus,
    chunk_document,
    chunk_id_for,
    load_corpus,
    tokenize,
)
from docexperts.errors import CorpusFormatError, EmptyDocumentError


def make_doc(n_tokens: int, doc_id: str = "d") -> Document:
    return Document(doc_id=doc_id, text=" ".join(f"w{i}" for i in range(n_tokens)))


class TestTokenize:
    def test_whitespace_runs(self):
        assert tokenize("a  b\nc\t d") == ["a", "b", "c", "d"]

    def test_empty(self):
        assert tokenize("") == []
        assert tokenize("   \n\t") == []

    def test_matches_regex_word_split(self):
        # Independent oracle: maximal non-whitespace runs.
        text = "one  two\tthree\n four"
        assert tokenize(text) == re.findall(r"\S+", text)

    def test_nfc_normalization_unifies_composed_forms(self):
        composed = "café"
        decomposed = "café"
        assert tokenize(composed) == tokenize(decomposed)


class TestChunkingParams:
    def test_defaults(self):
        p = ChunkingParams()
        assert p.window_size == 300
        assert p.overlap_tokens == 45
        assert p.stride == 255

    def test_invalid_window(self):
        with pytest.raises(ValueError):
            ChunkingParams(window_size=0)

    def test_invalid_overlap(self):
        with pytest.raises(ValueError):
            ChunkingParams(overlap_fraction=-0.1)
        with pytest.raises(ValueError):
            ChunkingParams(overlap_fraction=1.0)

    def test_stride_stays_positive_at_extreme_overlap(self):
        p = ChunkingParams(window_size=10, overlap_fraction=0.99)
        assert p.stride == 1


class TestChunkDocument:
    def test_600_token_document_spans(self):
        # Frozen expectation: window 300, 15% overlap -> stride 255.
        chunks = chunk_document(make_doc(600), ChunkingParams())
        assert [c.token_span for c in chunks] == [(0, 300), (255, 555), (510, 600)]
        assert [c.chunk_id for c in chunks] == ["d#0", "d#1", "d#2"]
        assert [c.ordinal for c in chunks] == [0, 1, 2]

    def test_short_document_single_chunk(self):
        chunks = chunk_document(make_doc(100), ChunkingParams())
        assert [c.token_span for c in chunks] == [(0, 100)]

    def test_exact_window_fit(self):
        chunks = chunk_document(make_doc(300), ChunkingParams())
        assert [c.token_span for c in chunks] == [(0, 300)]

    def test_one_past_window(self):
        chunks = chunk_document(make_doc(301), ChunkingParams())
        assert [c.token_span for c in chunks] == [(0, 300), (255, 301)]

    def test_chunk_text_holds_exactly_its_span(self):
        doc = make_doc(600)
        for chunk in chunk_document(doc, ChunkingParams()):
            start, end = chunk.token_span
            tokens = tokenize(chunk.text)
            assert len(tokens) == end - start
            assert tokens[0] == f"w{start}"
            assert tokens[-1] == f"w{end - 1}"

    def test_empty_document_rejected(self):
        with pytest.raises(EmptyDocumentError):
            Document(doc_id="d", text="   ")

    def test_chunk_id_format(self):
        assert chunk_id_for("report.txt", 4) == "report.txt#4"

    @settings(max_examples=60)
    @given(
        n_tokens=st.integers(min_value=1, max_value=2000),
        window=st.integers(min_value=1, max_value=400),
        overlap=st.floats(min_value=0.0, max_value=0.95),
    )
    def test_coverage_and_monotonicity(self, n_tokens, window, overlap):
        params = ChunkingParams(window_size=window, overlap_fraction=overlap)
        chunks = chunk_document(make_doc(n_tokens), params)

        assert chunks[0].token_span[0] == 0
        assert chunks[-1].token_span[1] == n_tokens
        for c in chunks:
            start, end = c.token_span
            assert 1 <= end - start <= window
        for a, b in zip(chunks, chunks[1:]):
            assert b.token_span[0] - a.token_span[0] == params.stride
            # No gaps: next window starts inside or at the end of this one.
            assert b.token_span[0] <= a.token_span[1]

    @given(n_tokens=st.integers(min_value=1, max_value=500))
    def test_deterministic(self, n_tokens):
        doc = make_doc(n_tokens)
        params = ChunkingParams(window_size=50, overlap_fraction=0.2)
        assert chunk_document(doc, params) == chunk_document(doc, params)


class TestChunkCorpus:
    def test_sorted_by_doc_id_then_ordinal(self):
        docs = [make_doc(400, "b"), make_doc(100, "a")]
        chunks = chunk_corpus(docs, ChunkingParams())
        assert [c.chunk_id for c in chunks] == ["a#0", "b#0", "b#1"]


class TestLoadCorpus:
    def test_jsonl_roundtrip(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        rows = [
            {"id": "beta", "text": "second doc"},
            {"id": "alpha", "text": "first doc", "title": "Alpha"},
        ]
        path.write_text("\n".join(json.dumps(r) for r in rows), encoding="utf-8")
        docs = load_corpus(path)
        assert [d.doc_id for d in docs] == ["alpha", "beta"]
        assert docs[0].title == "Alpha"
        assert docs[1].title is None

    def test_jsonl_skips_blank_lines(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"id": "a", "text": "x"}\n\n\n{"id": "b", "text": "y"}\n')
        assert len(load_corpus(path)) == 2

    def test_jsonl_invalid_json_names_line(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"id": "a", "text": "x"}\n{broken\n')
        with pytest.raises(CorpusFormatError, match=r":2:"):
            load_corpus(path)

    def test_jsonl_missing_field(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"id": "a"}\n')
        with pytest.raises(CorpusFormatError, match="missing required field"):
            load_corpus(path)

    def test_jsonl_empty_text_names_line(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"id": "a", "text": "  "}\n')
        with pytest.raises(CorpusFormatError, match=r":1:"):
            load_corpus(path)

    def test_duplicate_doc_id_rejected(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"id": "a", "text": "x"}\n{"id": "a", "text": "y"}\n')
        with pytest.raises(CorpusFormatError, match="'a'"):
            load_corpus(path)

    def test_text_directory(self, tmp_path):
        (tmp_path / "sub").mkdir()
        (tmp_path / "b.txt").write_text("bee")
        (tmp_path / "sub" / "a.txt").write_text("aye")
        docs = load_corpus(tmp_path)
        assert [d.doc_id for d in docs] == ["b.txt", "sub/a.txt"]
        assert docs[0].text == "bee"

    def test_missing_path(self, tmp_path):
        with pytest.raises(CorpusFormatError, match="not found"):
            load_corpus(tmp_path / "nope.jsonl")

    def test_unknown_format(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"id": "a", "text": "x"}\n')
        with pytest.raises(CorpusFormatError, match="unknown corpus format"):
            load_corpus(path, format="parquet")
