"""Semantic scoring of predicted diagnoses against gold diagnoses.

Two complementary metrics: a token-level greedy-matching score (precision /
recall / F1 over per-token embedding cosines, no IDF weighting or baseline
rescaling) and a whole-sentence embedding cosine. Raw scores are stored at
full precision; rounding happens only in the rendered table.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .embeddings import EmbeddingError
from .retrieval import EmbeddingProvider, cosine


class EvaluationError(Exception):
    """Raised for unusable evaluation inputs."""


class TokenEmbedder(Protocol):
    """Deterministic tokenizer plus per-token vector embedding."""

    def tokenize(self, text: str) -> list[str]: ...

    def embed_tokens(self, tokens: list[str]) -> np.ndarray: ...


@dataclass(frozen=True)
class EvalResult:
    """Scores for one predicted-vs-gold pair."""

    usecase: str
    mode: str
    bertscore_precision: float
    bertscore_recall: float
    bertscore_f1: float
    sbert_cosine: float
    failed: bool = False
    error: str = ""

    def to_dict(self) -> dict:
        return {
            "usecase": self.usecase,
            "mode": self.mode,
            "bertscore_precision": self.bertscore_precision,
            "bertscore_recall": self.bertscore_recall,
            "bertscore_f1": self.bertscore_f1,
            "sbert_cosine": self.sbert_cosine,
            "failed": self.failed,
            "error": self.error,
        }


def _normalized_token_matrix(tokens: list[str], emb: TokenEmbedder) -> np.ndarray:
    vectors = np.asarray(emb.embed_tokens(tokens), dtype=float)
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise EvaluationError("token embedder produced a zero vector")
    return vectors / norms


def bertscore(candidate: str, reference: str, emb: TokenEmbedder) -> tuple[float, float, float]:
    """Greedy token-matching similarity: (precision, recall, f1).

    Precision averages, over candidate tokens, the best cosine against any
    reference token; recall mirrors it from the reference side; f1 is their
    harmonic mean (0 when both vanish).
    """
    cand_tokens = emb.tokenize(candidate)
    ref_tokens = emb.tokenize(reference)
    if not cand_tokens or not ref_tokens:
        raise EvaluationError("both texts must tokenize to at least one token")
    cand = _normalized_token_matrix(cand_tokens, emb)
    ref = _normalized_token_matrix(ref_tokens, emb)
    similarity = cand @ ref.T
    precision = float(similarity.max(axis=1).mean())
    recall = float(similarity.max(axis=0).mean())
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def sentence_cosine(candidate: str, reference: str, provider: EmbeddingProvider) -> float:
    """Cosine similarity of whole-text embeddings."""
    if not candidate.strip() or not reference.strip():
        raise EvaluationError("both texts must be non-empty")
    return cosine(provider.embed(candidate), provider.embed(reference))


@dataclass(frozen=True)
class EvalCase:
    usecase: str
    predicted: str
    gold: str


def run_eval_suite(
    cases: list[EvalCase],
    mode: str,
    emb: TokenEmbedder,
    provider: EmbeddingProvider,
) -> tuple[list[EvalResult], str]:
    """Score every case and render the summary table.

    Per-case failures are recorded on their row; the suite always continues.
    """
    if not cases:
        raise EvaluationError("run_eval_suite requires at least one case")
    if mode not in ("few_shot", "zero_shot"):
        raise EvaluationError(f"unknown mode {mode!r}")
    results = []
    for case in cases:
        try:
            precision, recall, f1 = bertscore(case.predicted, case.gold, emb)
            sbert = sentence_cosine(case.predicted, case.gold, provider)
            results.append(
                EvalResult(
                    usecase=case.usecase,
                    mode=mode,
                    bertscore_precision=precision,
                    bertscore_recall=recall,
                    bertscore_f1=f1,
                    sbert_cosine=sbert,
                )
            )
        except (EvaluationError, EmbeddingError) as exc:
            results.append(
                EvalResult(
                    usecase=case.usecase,
                    mode=mode,
                    bertscore_precision=0.0,
                    bertscore_recall=0.0,
                    bertscore_f1=0.0,
                    sbert_cosine=0.0,
                    failed=True,
                    error=str(exc),
                )
            )
    return results, render_eval_table(results)


EVAL_TABLE_COLUMNS = ("SNo", "Usecase", "F1", "P", "R", "S-Bert Score")


def render_eval_table(results: list[EvalResult]) -> str:
    """Aligned plain-text table; scores are shown rounded to 2 decimals."""
    rows = [EVAL_TABLE_COLUMNS]
    for i, r in enumerate(results, 1):
        if r.failed:
            rows.append((str(i), r.usecase, "--", "--", "--", f"-- [failed: {r.error}]"))
        else:
            rows.append(
                (
                    str(i),
                    r.usecase,
                    f"{r.bertscore_f1:.2f}",
                    f"{r.bertscore_precision:.2f}",
                    f"{r.bertscore_recall:.2f}",
                    f"{r.sbert_cosine:.2f}",
                )
            )
    widths = [max(len(row[col]) for row in rows) for col in range(len(EVAL_TABLE_COLUMNS))]
    lines = [
        "  ".join(cell.ljust(widths[col]) for col, cell in enumerate(row)).rstrip()
        for row in rows
    ]
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines)


def load_eval_cases(raw: bytes | str) -> list[EvalCase]:
    """Parse the eval input JSON: a list of {usecase, predicted, gold} objects."""
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise EvaluationError(f"malformed eval cases JSON: {exc}") from exc
    if not isinstance(doc, list):
        raise EvaluationError("eval cases file must contain a JSON list")
    cases = []
    for i, entry in enumerate(doc):
        if not isinstance(entry, dict) or not {"usecase", "predicted", "gold"} <= set(entry):
            raise EvaluationError(f"case {i} must be an object with usecase/predicted/gold")
        cases.append(
            EvalCase(
                usecase=str(entry["usecase"]),
                predicted=str(entry["predicted"]),
                gold=str(entry["gold"]),
            )
        )
    return cases
