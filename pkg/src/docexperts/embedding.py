"""Embedding providers and vector utilities.

All vectors produced here are unit-normalized float32, which makes
cosine similarity a plain dot product and makes max-cosine routing
identical to min-Euclidean routing. Three providers share one
interface: a deterministic hashed bag-of-words embedder (the default,
dependency-free stand-in for a neural model), an HTTP client for a
remote embedding service, and a lookup table of planted vectors used
by the synthetic benchmark corpora.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass
from typing import Mapping

import httpx
import numpy as np

from .corpus import tokenize
from .errors import (
    ConfigError,
    ProviderProtocolError,
    ProviderUnavailableError,
    RuntimeFailure,
)

KIND_DETERMINISTIC = "deterministic-local"
KIND_REMOTE = "remote-http"
KIND_PLANTED = "planted"

NORM_TOLERANCE = 1e-5
_HASHED_BOW_PREFIX = "hashed-bow-"


@dataclass(frozen=True)
class ProviderSpec:
    """Identity and transport settings of an embedding provider.

    The identity triple (kind, dim, model_name) is persisted in the
    index so that query-time symmetry with ingestion can be checked;
    endpoint and batch_size are transport details.
    """

    kind: str
    dim: int
    endpoint: str | None = None
    batch_size: int = 32
    model_name: str | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError("embedding dim must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.kind == KIND_REMOTE and not self.endpoint:
            raise ConfigError("remote-http provider requires an endpoint")

    def identity(self) -> tuple[str, int, str | None]:
        return (self.kind, self.dim, self.model_name)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "dim": self.dim,
            "endpoint": self.endpoint,
            "batch_size": self.batch_size,
            "model_name": self.model_name,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ProviderSpec":
        return cls(
            kind=data["kind"],
            dim=int(data["dim"]),
            endpoint=data.get("endpoint"),
            batch_size=int(data.get("batch_size", 32)),
            model_name=data.get("model_name"),
        )


def unit_normalize(values: np.ndarray) -> np.ndarray:
    """Scale a vector to unit L2 norm, as float32.

    The all-zero vector (e.g. a text whose token contributions cancel)
    maps to the unit vector along axis 0 so ingestion never fails.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1:
        raise ValueError("expected a 1-d vector")
    if not np.all(np.isfinite(values)):
        raise ValueError("vector has non-finite entries")
    norm = float(np.linalg.norm(values))
    if norm == 0.0:
        out = np.zeros(values.shape[0], dtype=np.float32)
        out[0] = 1.0
        return out
    return (values / norm).astype(np.float32)


def is_unit(values: np.ndarray, tolerance: float = NORM_TOLERANCE) -> bool:
    return abs(float(np.linalg.norm(np.asarray(values, dtype=np.float64))) - 1.0) <= tolerance


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two vectors, accumulated in float64."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    denom = float(np.linalg.norm(a)) * float(np.linalg.norm(b))
    if denom == 0.0:
        raise ValueError("cosine undefined for a zero vector")
    return float(np.dot(a, b) / denom)


def _token_site(token: str, seed: int) -> tuple[int, int]:
    """Hash one token to a (coordinate, sign) site, keyed by the seed."""
    key = (seed % 2**64).to_bytes(8, "little")
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=9, key=key).digest()
    coord = int.from_bytes(digest[:8], "little")
    sign = 1 if digest[8] & 1 else -1
    return coord, sign


def deterministic_embed(text: str, dim: int, seed: int = 0) -> np.ndarray:
    """Hashed bag-of-words embedding: deterministic, order-invariant.

    Each token hashes to one coordinate in [0, dim) and a sign; token
    contributions are accumulated as integers (so token order cannot
    perturb the result) and the sum is unit-normalized.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    counts = np.zeros(dim, dtype=np.int64)
    for token in tokenize(text):
        coord, sign = _token_site(token, seed)
        counts[coord % dim] += sign
    return unit_normalize(counts)


class DeterministicLocalProvider:
    """Local hashed bag-of-words embedder."""

    def __init__(self, dim: int, seed: int = 0, batch_size: int = 32):
        self.dim = dim
        self.seed = seed
        self.spec = ProviderSpec(
            kind=KIND_DETERMINISTIC,
            dim=dim,
            batch_size=batch_size,
            model_name=f"{_HASHED_BOW_PREFIX}{seed}",
        )

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        return np.stack([deterministic_embed(t, self.dim, self.seed) for t in texts])


class RemoteHttpProvider:
    """Client for a remote embedding service.

    Wire contract: POST ``{"model": str, "inputs": [str, ...]}`` to the
    endpoint; the response is ``{"embeddings": [[float, ...], ...]}``
    with one vector per input. Requests go out in batches of
    ``batch_size`` and are retried with exponential backoff.
    """

    def __init__(
        self,
        endpoint: str,
        dim: int,
        model_name: str | None = None,
        batch_size: int = 32,
        timeout: float = 30.0,
        retries: int = 3,
        backoff_base: float = 0.5,
        transport: httpx.BaseTransport | None = None,
    ):
        self.spec = ProviderSpec(
            kind=KIND_REMOTE,
            dim=dim,
            endpoint=endpoint,
            batch_size=batch_size,
            model_name=model_name,
        )
        self.timeout = timeout
        self.retries = retries
        self.backoff_base = backoff_base
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def close(self):
        self._client.close()

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        spec = self.spec
        rows: list[np.ndarray] = []
        for batch_index, start in enumerate(range(0, len(texts), spec.batch_size)):
            batch = texts[start : start + spec.batch_size]
            payload = self._post_batch(batch, batch_index)
            vectors = payload.get("embeddings")
            if not isinstance(vectors, list) or len(vectors) != len(batch):
                raise ProviderProtocolError(
                    f"batch {batch_index}: expected {len(batch)} embeddings, "
                    f"got {len(vectors) if isinstance(vectors, list) else type(vectors).__name__}"
                )
            for vec in vectors:
                if len(vec) != spec.dim:
                    raise ProviderProtocolError(
                        f"batch {batch_index}: embedding has dim {len(vec)}, expected {spec.dim}"
                    )
                rows.append(unit_normalize(np.asarray(vec, dtype=np.float64)))
        return np.stack(rows)

    def _post_batch(self, batch: list[str], batch_index: int) -> dict:
        body = {"model": self.spec.model_name or "", "inputs": batch}
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt > 0:
                time.sleep(self.backoff_base * 2 ** (attempt - 1))
            try:
                response = self._client.post(self.spec.endpoint, json=body)
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code == 200:
                try:
                    return response.json()
                except ValueError as exc:
                    raise ProviderProtocolError(
                        f"batch {batch_index}: response is not valid JSON"
                    ) from exc
            if response.status_code >= 500 or response.status_code == 429:
                last_error = RuntimeFailure(f"HTTP {response.status_code}")
                continue
            raise ProviderProtocolError(
                f"batch {batch_index}: provider rejected request with HTTP {response.status_code}"
            )
        raise ProviderUnavailableError(
            f"embedding provider unavailable after {self.retries + 1} attempts "
            f"(batch {batch_index}): {last_error}",
            batch_index=batch_index,
        )


class PlantedProvider:
    """Lookup-table provider for corpora with planted vectors.

    Used by the synthetic benchmark corpora, where chunk and query
    texts are identifiers mapped to pre-constructed vectors.
    """

    def __init__(self, dim: int, label: str):
        self.dim = dim
        self.spec = ProviderSpec(kind=KIND_PLANTED, dim=dim, model_name=label)
        self._table: dict[str, np.ndarray] = {}

    def register(self, text: str, values: np.ndarray) -> np.ndarray:
        vector = unit_normalize(values)
        self._table[text] = vector
        return vector

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        rows = []
        for text in texts:
            if text not in self._table:
                raise RuntimeFailure(f"no planted vector for text {text!r}")
            rows.append(self._table[text])
        return np.stack(rows)


def embed_batch(texts: list[str], provider) -> np.ndarray:
    """Embed texts through a provider; order-preserving, unit rows."""
    if not texts:
        raise ValueError("texts must be non-empty")
    for i, text in enumerate(texts):
        if not text.strip():
            raise ValueError(f"text {i} is empty")
    matrix = provider.embed_batch(list(texts))
    if matrix.shape != (len(texts), provider.spec.dim):
        raise ProviderProtocolError(
            f"provider returned shape {matrix.shape}, expected {(len(texts), provider.spec.dim)}"
        )
    return matrix.astype(np.float32, copy=False)


def provider_from_spec(
    spec: ProviderSpec,
    timeout: float = 30.0,
    retries: int = 3,
    transport: httpx.BaseTransport | None = None,
):
    """Reconstruct a provider instance from its persisted spec."""
    if spec.kind == KIND_DETERMINISTIC:
        seed = 0
        if spec.model_name and spec.model_name.startswith(_HASHED_BOW_PREFIX):
            try:
                seed = int(spec.model_name[len(_HASHED_BOW_PREFIX) :])
            except ValueError:
                raise ConfigError(f"unrecognized deterministic model name: {spec.model_name!r}")
        return DeterministicLocalProvider(spec.dim, seed=seed, batch_size=spec.batch_size)
    if spec.kind == KIND_REMOTE:
        return RemoteHttpProvider(
            endpoint=spec.endpoint,
            dim=spec.dim,
            model_name=spec.model_name,
            batch_size=spec.batch_size,
            timeout=timeout,
            retries=retries,
            transport=transport,
        )
    if spec.kind == KIND_PLANTED:
        raise ConfigError("planted providers exist only in-process and cannot be reconstructed")
    raise ConfigError(f"unknown provider kind: {spec.kind!r}")
