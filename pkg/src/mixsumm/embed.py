"""Document embeddings through a pluggable encoder.

Documents longer than the encoder's token budget are packed into
sentence-aligned chunks; the document vector is the plain mean of the chunk
vectors.
"""
from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass
from typing import Protocol, Sequence

import httpx
import numpy as np

from .corpus import Document
from .rouge import tokenize


class EncoderError(RuntimeError):
    def __init__(self, message: str, chunk_index: int | None = None):
        self.chunk_index = chunk_index
        prefix = f"chunk {chunk_index}: " if chunk_index is not None else ""
        super().__init__(prefix + message)


class Encoder(Protocol):
    max_tokens: int
    dim: int

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        """Return an array of shape ``(len(texts), dim)``."""


class HashEncoder:
    """Offline bag-of-words encoder: signed token hashing, L2-normalized."""

    def __init__(self, dim: int = 256, seed: int = 0, max_tokens: int = 512):
        if dim < 8:
            raise ValueError("dim must be >= 8")
        self.dim = dim
        self.seed = seed
        self.max_tokens = max_tokens
        self.name = f"hash-{dim}-{seed}"

    def _slot(self, token: str) -> tuple[int, float]:
        h = hashlib.blake2b(f"{self.seed}:{token}".encode(), digest_size=8).digest()
        v = int.from_bytes(h, "little")
        return v % self.dim, 1.0 if (v >> 63) & 1 else -1.0

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim))
        for row, text in enumerate(texts):
            for tok in tokenize(text):
                j, sign = self._slot(tok)
                out[row, j] += sign
            norm = np.linalg.norm(out[row])
            if norm > 0:
                out[row] /= norm
            else:
                out[row, 0] = 1.0
        return out


def hash_encoder(dim: int = 256, seed: int = 0, max_tokens: int = 512) -> HashEncoder:
    return HashEncoder(dim, seed, max_tokens)


@dataclass
class EndpointConfig:
    url: str
    model: str | None = None
    api_key: str | None = None
    dim: int = 768
    max_tokens: int = 512
    timeout: float = 30.0
    batch_size: int = 32
    max_in_flight: int = 4


class RemoteEncoder:
    """Client for an OpenAI-compatible ``/embeddings`` endpoint."""

    def __init__(self, config: EndpointConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        self.dim = config.dim
        self.max_tokens = config.max_tokens
        self.name = f"remote-{config.model or config.url}"
        headers = {"Authorization": f"Bearer {config.api_key}"} if config.api_key else {}
        self._http = httpx.Client(timeout=config.timeout, headers=headers, transport=transport)
        self._slots = threading.BoundedSemaphore(config.max_in_flight)

    def _post(self, batch: list[str]) -> np.ndarray:
        payload: dict = {"input": batch}
        if self.config.model:
            payload["model"] = self.config.model
        with self._slots:
            try:
                resp = self._http.post(self.config.url, json=payload)
            except httpx.HTTPError as exc:
                raise EncoderError(f"transport error: {exc}") from exc
        if not 200 <= resp.status_code < 300:
            raise EncoderError(f"embedding endpoint returned HTTP {resp.status_code}")
        try:
            vecs = [item["embedding"] for item in resp.json()["data"]]
        except (ValueError, KeyError, TypeError) as exc:
            raise EncoderError(f"malformed embedding response: {exc}") from exc
        arr = np.asarray(vecs, dtype=float)
        if arr.shape != (len(batch), self.dim):
            raise EncoderError(f"dimension mismatch: expected {(len(batch), self.dim)}, got {arr.shape}")
        return arr

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        clipped = [" ".join(t.split()[: self.max_tokens]) for t in texts]
        bs = self.config.batch_size
        parts = [self._post(clipped[i:i + bs]) for i in range(0, len(clipped), bs)]
        return np.vstack(parts) if parts else np.zeros((0, self.dim))


def remote_encoder(config: EndpointConfig, transport: httpx.BaseTransport | None = None) -> RemoteEncoder:
    return RemoteEncoder(config, transport)


def chunk_sentences(doc: Document, max_tokens: int) -> list[list[int]]:
    """Greedy sentence-aligned packing; a sentence longer than the budget gets its own chunk."""
    chunks: list[list[int]] = []
    cur: list[int] = []
    used = 0
    for s in doc.sentences:
        n = s.token_count
        if cur and used + n > max_tokens:
            chunks.append(cur)
            cur, used = [], 0
        cur.append(s.index)
        used += n
    if cur:
        chunks.append(cur)
    return chunks


def embed_document(encoder: Encoder, doc: Document) -> np.ndarray:
    if doc.token_count <= encoder.max_tokens:
        texts = [doc.text]
    else:
        texts = [" ".join(doc.sentences[i].text for i in c) for c in chunk_sentences(doc, encoder.max_tokens)]
    rows = []
    for ci, text in enumerate(texts):
        try:
            vec = np.asarray(encoder.encode([text]), dtype=float)[0]
        except EncoderError as exc:
            raise EncoderError(str(exc), ci) from exc
        except Exception as exc:
            raise EncoderError(f"encoder failed: {exc}", ci) from exc
        if vec.shape != (encoder.dim,) or not np.all(np.isfinite(vec)):
            raise EncoderError(f"encoder returned invalid vector of shape {vec.shape}", ci)
        rows.append(vec)
    return np.mean(rows, axis=0)


def embed_documents(encoder: Encoder, docs: Sequence[Document]) -> np.ndarray:
    if not docs:
        return np.zeros((0, encoder.dim))
    return np.vstack([embed_document(encoder, d) for d in docs])
