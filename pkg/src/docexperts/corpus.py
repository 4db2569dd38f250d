"""Corpus loading and sliding-window chunking.

Documents are split into overlapping token windows; tokens are maximal
runs of non-whitespace after NFC normalization, so chunking is fully
deterministic and needs no model tokenizer.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass
from pathlib import Path

from .errors import CorpusFormatError, EmptyDocumentError


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    title: str | None = None

    def __post_init__(self):
        if not self.doc_id:
            raise CorpusFormatError("document has an empty doc_id")
        if not self.text.strip():
            raise EmptyDocumentError(f"document {self.doc_id!r} has no text")


@dataclass(frozen=True)
class Chunk:
    """A contiguous token window of one document; the retrieval unit."""

    chunk_id: str
    doc_id: str
    ordinal: int
    token_span: tuple[int, int]
    text: str


@dataclass(frozen=True)
class ChunkingParams:
    window_size: int = 300
    overlap_fraction: float = 0.15

    def __post_init__(self):
        if self.window_size < 1:
            raise ValueError("window_size must be >= 1")
        if not 0.0 <= self.overlap_fraction < 1.0:
            raise ValueError("overlap_fraction must be in [0, 1)")

    @property
    def overlap_tokens(self) -> int:
        # Rounding can reach window_size as the fraction nears 1; the stride
        # must stay positive.
        return min(round(self.window_size * self.overlap_fraction), self.window_size - 1)

    @property
    def stride(self) -> int:
        return self.window_size - self.overlap_tokens


def tokenize(text: str) -> list[str]:
    """Split NFC-normalized text on whitespace runs."""
    return unicodedata.normalize("NFC", text).split()


def chunk_id_for(doc_id: str, ordinal: int) -> str:
    return f"{doc_id}#{ordinal}"


def chunk_document(doc: Document, params: ChunkingParams) -> list[Chunk]:
    """Split one document into overlapping token windows.

    Windows start at multiples of the stride; the final window is
    truncated at the document end so every token is covered. A document
    shorter than the window yields exactly one chunk.
    """
    tokens = tokenize(doc.text)
    if not tokens:
        raise EmptyDocumentError(f"document {doc.doc_id!r} has no tokens")
    total = len(tokens)
    window = params.window_size
    stride = params.stride

    chunks: list[Chunk] = []
    start = 0
    ordinal = 0
    while True:
        end = min(start + window, total)
        chunks.append(
            Chunk(
                chunk_id=chunk_id_for(doc.doc_id, ordinal),
                doc_id=doc.doc_id,
                ordinal=ordinal,
                token_span=(start, end),
                text=" ".join(tokens[start:end]),
            )
        )
        if end == total:
            break
        start += stride
        ordinal += 1
    return chunks


def chunk_corpus(docs: list[Document], params: ChunkingParams) -> list[Chunk]:
    """Chunk every document, in sorted doc_id order."""
    chunks: list[Chunk] = []
    for doc in sorted(docs, key=lambda d: d.doc_id):
        chunks.extend(chunk_document(doc, params))
    return chunks


def load_corpus(path: str | Path, format: str | None = None) -> list[Document]:
    """Load documents from a jsonl file or a directory of text files.

    jsonl lines carry ``id`` (required), ``text`` (required) and optional
    ``title``. In a text directory every file becomes one document with
    its relative path as doc_id. Documents come back sorted by doc_id.
    """
    path = Path(path)
    if not path.exists():
        raise CorpusFormatError(f"corpus not found: {path}")
    if format is None:
        format = "text-directory" if path.is_dir() else "jsonl"

    if format == "jsonl":
        docs = _load_jsonl(path)
    elif format == "text-directory":
        docs = _load_text_directory(path)
    else:
        raise CorpusFormatError(f"unknown corpus format: {format!r}")

    seen: dict[str, int] = {}
    for doc in docs:
        if doc.doc_id in seen:
            raise CorpusFormatError(f"duplicate doc_id: {doc.doc_id!r}")
        seen[doc.doc_id] = 1
    return sorted(docs, key=lambda d: d.doc_id)


def _load_jsonl(path: Path) -> list[Document]:
    docs = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
            if not isinstance(record, dict):
                raise CorpusFormatError(f"{path}:{lineno}: expected a JSON object")
            if "id" not in record or "text" not in record:
                raise CorpusFormatError(f"{path}:{lineno}: missing required field 'id' or 'text'")
            try:
                docs.append(
                    Document(
                        doc_id=str(record["id"]),
                        text=str(record["text"]),
                        title=record.get("title"),
                    )
                )
            except EmptyDocumentError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: {exc}") from exc
    return docs


def _load_text_directory(path: Path) -> list[Document]:
    docs = []
    for file in sorted(p for p in path.rglob("*") if p.is_file()):
        rel = file.relative_to(path).as_posix()
        docs.append(Document(doc_id=rel, text=file.read_text(encoding="utf-8")))
    return docs
