"""Incident corpus with exact cosine retrieval.

Past incidents are stored with their embedded diagnostic text, gold
diagnosis, and action steps; queries run an exact linear cosine scan (the
corpus is desk-scale, so approximate search buys nothing). The index is
persisted as one JSON file stamped with a provider fingerprint so records
from different embedding spaces can never mix.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np


class RetrievalError(Exception):
    """Raised for index/provider contract violations."""


class EmbeddingProvider(Protocol):
    """Deterministic text -> fixed-dimension vector."""

    name: str
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


def cosine(u: np.ndarray | list[float], v: np.ndarray | list[float]) -> float:
    """Cosine similarity dot(u, v) / (|u| * |v|)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.ndim != 1:
        raise RetrievalError("cosine requires two equal-dimension vectors")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise RetrievalError("cosine is undefined for zero-norm vectors")
    return float(u @ v) / (nu * nv)


@dataclass(frozen=True)
class IncidentRecord:
    """One indexed past incident."""

    id: str
    diagnostic_text: str
    embedding: tuple[float, ...]
    gold_diagnosis: str
    gold_action_steps: tuple[str, ...]
    metadata: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class RetrievalHit:
    record_id: str
    similarity: float


@dataclass(frozen=True)
class RetrievalResult:
    hits: tuple[RetrievalHit, ...]
    n: int

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "hits": [{"record_id": h.record_id, "similarity": h.similarity} for h in self.hits],
        }


def provider_fingerprint(provider: EmbeddingProvider) -> str:
    return f"{provider.name}:{provider.dimension}"


class VectorIndex:
    """In-memory incident index with JSON persistence.

    Concurrent queries are safe; additions require exclusive access
    (single-writer, multi-reader).
    """

    def __init__(self, fingerprint: str, dimension: int):
        self.fingerprint = fingerprint
        self.dimension = dimension
        self.records: list[IncidentRecord] = []

    def __len__(self) -> int:
        return len(self.records)

    @classmethod
    def for_provider(cls, provider: EmbeddingProvider) -> "VectorIndex":
        return cls(fingerprint=provider_fingerprint(provider), dimension=provider.dimension)

    def _check_provider(self, provider: EmbeddingProvider):
        fingerprint = provider_fingerprint(provider)
        if fingerprint != self.fingerprint:
            raise RetrievalError(
                f"provider fingerprint {fingerprint!r} does not match index {self.fingerprint!r}"
            )

    def add(
        self,
        diagnostic_text: str,
        gold_diagnosis: str,
        gold_action_steps: list[str],
        metadata: dict[str, str],
        provider: EmbeddingProvider,
        record_id: str | None = None,
    ) -> str:
        """Embed and append one incident; returns the record id."""
        self._check_provider(provider)
        if not diagnostic_text.strip() or not gold_diagnosis.strip():
            raise RetrievalError("diagnostic text and gold diagnosis must be non-empty")
        if record_id is None:
            record_id = f"inc-{len(self.records):04d}"
        if any(r.id == record_id for r in self.records):
            raise RetrievalError(f"duplicate record id {record_id!r}")
        embedding = np.asarray(provider.embed(diagnostic_text), dtype=float)
        if embedding.shape != (self.dimension,):
            raise RetrievalError(
                f"provider produced dimension {embedding.shape}, index expects ({self.dimension},)"
            )
        self.records.append(
            IncidentRecord(
                id=record_id,
                diagnostic_text=diagnostic_text,
                embedding=tuple(float(x) for x in embedding),
                gold_diagnosis=gold_diagnosis,
                gold_action_steps=tuple(gold_action_steps),
                metadata=dict(metadata),
            )
        )
        return record_id

    def get(self, record_id: str) -> IncidentRecord:
        for record in self.records:
            if record.id == record_id:
                return record
        raise RetrievalError(f"unknown record id {record_id!r}")

    def query(self, diagnostic_text: str, n: int, provider: EmbeddingProvider) -> RetrievalResult:
        """Exact cosine scan; top-n hits sorted by similarity then record id."""
        self._check_provider(provider)
        if not self.records:
            raise RetrievalError("cannot query an empty index")
        if n < 1:
            raise RetrievalError("n must be >= 1")
        query_vec = np.asarray(provider.embed(diagnostic_text), dtype=float)
        scored = [
            RetrievalHit(record_id=r.id, similarity=cosine(query_vec, np.asarray(r.embedding)))
            for r in self.records
        ]
        scored.sort(key=lambda h: (-h.similarity, h.record_id))
        return RetrievalResult(hits=tuple(scored[:n]), n=n)

    def save(self, path: Path | str):
        doc = {
            "provider": self.fingerprint,
            "dimension": self.dimension,
            "records": [
                {
                    "id": r.id,
                    "diagnostic_text": r.diagnostic_text,
                    "embedding": list(r.embedding),
                    "gold_diagnosis": r.gold_diagnosis,
                    "gold_action_steps": list(r.gold_action_steps),
                    "metadata": r.metadata,
                }
                for r in self.records
            ],
        }
        Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path | str) -> "VectorIndex":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise RetrievalError(f"cannot load corpus {path}: {exc}") from exc
        if not isinstance(doc, dict) or "provider" not in doc or "dimension" not in doc:
            raise RetrievalError(f"corpus {path} is missing provider/dimension header")
        index = cls(fingerprint=doc["provider"], dimension=int(doc["dimension"]))
        for i, entry in enumerate(doc.get("records", [])):
            embedding = [float(x) for x in entry["embedding"]]
            if len(embedding) != index.dimension:
                raise RetrievalError(f"corpus record {i} has wrong embedding dimension")
            if not all(math.isfinite(x) for x in embedding):
                raise RetrievalError(f"corpus record {i} has non-finite embedding values")
            index.records.append(
                IncidentRecord(
                    id=entry["id"],
                    diagnostic_text=entry["diagnostic_text"],
                    embedding=tuple(embedding),
                    gold_diagnosis=entry["gold_diagnosis"],
                    gold_action_steps=tuple(entry["gold_action_steps"]),
                    metadata=dict(entry.get("metadata", {})),
                )
            )
        ids = [r.id for r in index.records]
        if len(set(ids)) != len(ids):
            raise RetrievalError(f"corpus {path} contains duplicate record ids")
        return index
