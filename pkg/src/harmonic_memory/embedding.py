"""Embedding providers, cosine similarity, and an exact-scan vector index.

The index counts every similarity evaluation it performs so callers can
compare the candidate work of different retrieval layouts.
"""

from __future__ import annotations

import hashlib
import logging
import os
from collections.abc import Iterable
from typing import Protocol

import httpx
import numpy as np

from .errors import DimensionMismatchError, ProviderError, ValidationError, ZeroVectorError
from .text import canonical, words

logger = logging.getLogger(__name__)

DEFAULT_DIMS = 64


class Embedder(Protocol):
    dims: int

    def embed(self, text: str) -> np.ndarray: ...


class HashEmbedder:
    """Deterministic bag-of-tokens embedder for hermetic runs.

    Each case-folded token is hashed (blake2b, so stable across processes)
    into one of ``dims`` buckets; bucket counts are L2-normalized.
    """

    def __init__(self, dims: int = DEFAULT_DIMS) -> None:
        if dims < 1:
            raise ValidationError("dims must be positive")
        self.dims = dims
        self._cache: dict[str, np.ndarray] = {}

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "big") % self.dims

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise ValidationError("cannot embed empty text")
        hit = self._cache.get(text)
        if hit is not None:
            return hit.copy()
        vec = np.zeros(self.dims, dtype=np.float64)
        toks = [t.casefold() for t in words(text)] or [text.strip().casefold()]
        for tok in toks:
            vec[self._bucket(tok)] += 1.0
        vec /= np.linalg.norm(vec)
        vec.setflags(write=False)
        self._cache[text] = vec
        return vec.copy()


class GaussianEmbedder:
    """Unit vectors drawn from a Gaussian seeded by the canonical text.

    Distinct texts get (almost surely) distinct, untied similarities, which
    keeps synthetic top-k and threshold experiments free of tie ambiguity.
    """

    def __init__(self, dims: int = DEFAULT_DIMS, seed: int = 0) -> None:
        if dims < 1:
            raise ValidationError("dims must be positive")
        self.dims = dims
        self.seed = seed

    def embed(self, text: str) -> np.ndarray:
        key = canonical(text)
        if not key:
            raise ValidationError("cannot embed empty text")
        digest = hashlib.blake2b(f"{self.seed}\0{key}".encode("utf-8"), digest_size=8).digest()
        vec = np.random.default_rng(int.from_bytes(digest, "big")).standard_normal(self.dims)
        return vec / np.linalg.norm(vec)


class HttpEmbedder:
    """Client for an external embedding endpoint.

    Wire format: POST ``{"model": ..., "input": [text]}`` and expect
    ``{"vectors": [[float, ...]]}``.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        dims: int,
        *,
        api_key: str | None = None,
        transport: httpx.BaseTransport | None = None,
        timeout: float = 30.0,
        normalize: bool = True,
    ) -> None:
        self.endpoint = endpoint
        self.model = model
        self.dims = dims
        self.normalize = normalize
        self._api_key = api_key if api_key is not None else os.environ.get("MEMORA_PROVIDER_KEY")
        self._client = httpx.Client(transport=transport, timeout=timeout)

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise ValidationError("cannot embed empty text")
        headers = {"Authorization": f"Bearer {self._api_key}"} if self._api_key else {}
        try:
            resp = self._client.post(
                self.endpoint, json={"model": self.model, "input": [text]}, headers=headers
            )
            resp.raise_for_status()
            vectors = resp.json()["vectors"]
            vec = np.asarray(vectors[0], dtype=np.float64)
        except (httpx.HTTPError, KeyError, IndexError, TypeError, ValueError) as exc:
            raise ProviderError(f"embedding provider failed: {exc}") from exc
        if vec.shape != (self.dims,) or not np.all(np.isfinite(vec)):
            raise ProviderError(f"embedding provider returned malformed vector of shape {vec.shape}")
        if self.normalize:
            norm = np.linalg.norm(vec)
            if norm == 0:
                raise ProviderError("embedding provider returned a zero vector")
            vec = vec / norm
        return vec


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionMismatchError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ZeroVectorError("cosine undefined for a zero vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


class VectorIndex:
    """Exact-scan similarity index keyed by sortable string keys.

    ``comparisons`` grows by exactly the number of stored vectors each time
    the index is scored against a query.
    """

    def __init__(self, dims: int) -> None:
        self.dims = dims
        self._vectors: dict[str, np.ndarray] = {}
        self.comparisons = 0
        self._matrix: np.ndarray | None = None
        self._keys: list[str] = []

    def __len__(self) -> int:
        return len(self._vectors)

    def __contains__(self, key: object) -> bool:
        return key in self._vectors

    def keys(self) -> list[str]:
        return sorted(self._vectors)

    def get(self, key: str) -> np.ndarray:
        return self._vectors[key]

    def add(self, key: str, vector: np.ndarray) -> None:
        vec = np.asarray(vector, dtype=np.float64)
        if vec.shape != (self.dims,):
            raise DimensionMismatchError(f"expected {self.dims} dims, got {vec.shape}")
        if not np.all(np.isfinite(vec)):
            raise ValidationError("vector has non-finite values")
        self._vectors[key] = vec
        self._matrix = None

    def remove(self, key: str) -> None:
        del self._vectors[key]
        self._matrix = None

    def clear(self) -> None:
        self._vectors.clear()
        self._matrix = None

    def _ensure_matrix(self) -> None:
        if self._matrix is None:
            self._keys = sorted(self._vectors)
            if self._keys:
                mat = np.stack([self._vectors[k] for k in self._keys])
                norms = np.linalg.norm(mat, axis=1, keepdims=True)
                if np.any(norms == 0):
                    raise ZeroVectorError("index holds a zero vector")
                self._matrix = mat / norms
            else:
                self._matrix = np.zeros((0, self.dims))

    def score_all(self, query: np.ndarray) -> dict[str, float]:
        """Cosine of ``query`` against every stored vector."""
        q = np.asarray(query, dtype=np.float64)
        if q.shape != (self.dims,):
            raise DimensionMismatchError(f"query has {q.shape}, index has {self.dims} dims")
        qn = np.linalg.norm(q)
        if qn == 0:
            raise ZeroVectorError("query is a zero vector")
        self._ensure_matrix()
        self.comparisons += len(self._keys)
        sims = np.clip(self._matrix @ (q / qn), -1.0, 1.0)
        return dict(zip(self._keys, (float(s) for s in sims)))

    def top_k(self, query: np.ndarray, k: int) -> list[tuple[str, float]]:
        if k < 0:
            raise ValidationError("k must be non-negative")
        scores = self.score_all(query)
        ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
        return ranked[:k]


def top_k(query: np.ndarray, index: VectorIndex, k: int) -> list[tuple[str, float]]:
    """Descending-score top-k; ties go to the smaller key."""
    return index.top_k(query, k)


def build_index(embedder: Embedder, items: Iterable[tuple[str, str]]) -> VectorIndex:
    index = VectorIndex(embedder.dims)
    for key, text in items:
        index.add(key, embedder.embed(text))
    return index

