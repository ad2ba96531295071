"""Deterministic text embedding providers.

The bundled provider hashes character trigrams into fixed-size frequency
vectors, giving offline, reproducible embeddings with meaningful text
similarity. Production deployments swap in an external embedding service
exposing the same interface over HTTP.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np
import requests

_TOKEN_RE = re.compile(r"[a-z0-9_]+")


class EmbeddingError(Exception):
    """Raised when an embedding cannot be produced."""


def _bucket(gram: str, dimension: int) -> int:
    digest = hashlib.sha1(gram.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big") % dimension


def _grams(token: str) -> list[str]:
    padded = f"^{token}$"
    return [padded[i : i + 3] for i in range(len(padded) - 2)]


def trigram_vector(text: str, dimension: int = 256) -> np.ndarray:
    """L2-normalized hashed character-trigram frequency vector."""
    vector = np.zeros(dimension)
    for token in _TOKEN_RE.findall(text.lower()):
        for gram in _grams(token):
            vector[_bucket(gram, dimension)] += 1.0
    norm = float(np.linalg.norm(vector))
    if norm == 0.0:
        raise EmbeddingError(f"text has no embeddable content: {text!r}")
    return vector / norm


class HashedTrigramProvider:
    """Offline test/default provider: 256-d hashed trigram vectors."""

    def __init__(self, dimension: int = 256):
        self.dimension = dimension
        self.name = f"hashed-trigram-{dimension}"

    def embed(self, text: str) -> np.ndarray:
        return trigram_vector(text, self.dimension)


class HashedTrigramTokenEmbedder:
    """Token-level companion to HashedTrigramProvider: one vector per token."""

    def __init__(self, dimension: int = 256):
        self.dimension = dimension
        self.name = f"hashed-trigram-tokens-{dimension}"

    def tokenize(self, text: str) -> list[str]:
        return _TOKEN_RE.findall(text.lower())

    def embed_tokens(self, tokens: list[str]) -> np.ndarray:
        if not tokens:
            return np.zeros((0, self.dimension))
        vectors = np.zeros((len(tokens), self.dimension))
        for i, token in enumerate(tokens):
            for gram in _grams(token):
                vectors[i, _bucket(gram, self.dimension)] += 1.0
        return vectors


class HttpEmbeddingProvider:
    """Client for an external embedding service.

    Contract: POST ``{"texts": [str]}`` to the configured URL, receive
    ``{"vectors": [[float]]}`` with one vector per input text.
    """

    def __init__(self, url: str, dimension: int, timeout_seconds: float = 30.0):
        self.url = url
        self.dimension = dimension
        self.timeout_seconds = timeout_seconds
        self.name = f"http-embedding:{url}"

    def embed(self, text: str) -> np.ndarray:
        try:
            response = requests.post(self.url, json={"texts": [text]}, timeout=self.timeout_seconds)
            response.raise_for_status()
            payload = response.json()
        except requests.RequestException as exc:
            raise EmbeddingError(f"embedding service request failed: {exc}") from exc
        vectors = payload.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != 1:
            raise EmbeddingError("embedding service returned a malformed 'vectors' payload")
        vector = np.asarray(vectors[0], dtype=float)
        if vector.shape != (self.dimension,):
            raise EmbeddingError(
                f"embedding service returned dimension {vector.shape}, expected ({self.dimension},)"
            )
        if not np.isfinite(vector).all():
            raise EmbeddingError("embedding service returned non-finite values")
        return vector
