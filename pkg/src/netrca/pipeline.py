"""End-to-end diagnosis pipeline and application configuration.

One pipeline run walks: symptom summary -> statistical ranking -> exemplar
retrieval (few-shot only) -> prompt assembly -> ensemble diagnosis. A
backend outage degrades to a partial result that still carries the
statistical health report. Stage durations are measured with an injectable
timer so replayed runs can be made fully deterministic.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from . import diagnosis as dx
from .embeddings import HashedTrigramProvider, HttpEmbeddingProvider
from .llm import BackendError, GenerationParams, HttpLlmBackend, ReplayBackend, StubBackend
from .retrieval import EmbeddingProvider, RetrievalHit, RetrievalResult, VectorIndex
from .statrca import HealthReport, RankedCause, SeriesRef, StatConfig, analyze
from .topology import TopologySnapshot


class ConfigError(Exception):
    """Raised for malformed application configuration."""


_BACKEND_KINDS = ("stub", "http", "replay")
_PROVIDER_KINDS = ("trigram", "http")


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "stub"
    url: str | None = None
    cassette: str | None = None
    record: bool = False


@dataclass(frozen=True)
class ProviderConfig:
    kind: str = "trigram"
    dimension: int = 256
    url: str | None = None


@dataclass(frozen=True)
class AppConfig:
    store_path: str = "store"
    corpus_path: str = "corpus.json"
    stat: StatConfig = field(default_factory=StatConfig)
    ensemble: dx.EnsembleConfig = field(default_factory=dx.EnsembleConfig)
    backend: BackendConfig = field(default_factory=BackendConfig)
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    bind_address: str = "127.0.0.1:8080"
    retrieval_count: int = 3
    domain_knowledge: str = ""


def _check_keys(doc: dict, allowed: set[str], path: str):
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys at {path}: {', '.join(sorted(unknown))}")


def config_from_dict(doc: dict) -> AppConfig:
    """Build an AppConfig from a parsed JSON document; unknown keys are rejected."""
    _check_keys(
        doc,
        {
            "store_path",
            "corpus_path",
            "stat",
            "ensemble",
            "backend",
            "provider",
            "bind_address",
            "retrieval_count",
            "domain_knowledge",
        },
        "$",
    )
    stat_doc = doc.get("stat", {})
    _check_keys(
        stat_doc,
        {
            "max_lag",
            "significance",
            "anomaly_z_threshold",
            "damping",
            "pagerank_epsilon",
            "pagerank_max_iters",
            "k",
        },
        "$.stat",
    )
    ensemble_doc = doc.get("ensemble", {})
    _check_keys(
        ensemble_doc,
        {"num_agents", "aggregate", "draft_temperature", "aggregator_temperature"},
        "$.ensemble",
    )
    backend_doc = doc.get("backend", {})
    _check_keys(backend_doc, {"kind", "url", "cassette", "record"}, "$.backend")
    provider_doc = doc.get("provider", {})
    _check_keys(provider_doc, {"kind", "dimension", "url"}, "$.provider")

    backend = BackendConfig(**backend_doc)
    if backend.kind not in _BACKEND_KINDS:
        raise ConfigError(f"backend.kind must be one of {_BACKEND_KINDS}, got {backend.kind!r}")
    provider = ProviderConfig(**provider_doc)
    if provider.kind not in _PROVIDER_KINDS:
        raise ConfigError(f"provider.kind must be one of {_PROVIDER_KINDS}, got {provider.kind!r}")

    return AppConfig(
        store_path=doc.get("store_path", "store"),
        corpus_path=doc.get("corpus_path", "corpus.json"),
        stat=StatConfig(**stat_doc),
        ensemble=dx.EnsembleConfig(**ensemble_doc),
        backend=backend,
        provider=provider,
        bind_address=doc.get("bind_address", "127.0.0.1:8080"),
        retrieval_count=int(doc.get("retrieval_count", 3)),
        domain_knowledge=doc.get("domain_knowledge", ""),
    )


def load_config(path: Path | str) -> AppConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config file must contain a JSON object")
    return config_from_dict(doc)


def make_provider(cfg: ProviderConfig) -> EmbeddingProvider:
    if cfg.kind == "trigram":
        return HashedTrigramProvider(cfg.dimension)
    if not cfg.url:
        raise ConfigError("provider.kind 'http' requires provider.url")
    return HttpEmbeddingProvider(cfg.url, cfg.dimension)


def make_backend(cfg: BackendConfig):
    if cfg.kind == "stub":
        return StubBackend()
    if cfg.kind == "http":
        return HttpLlmBackend(cfg.url)
    if not cfg.cassette:
        raise ConfigError("backend.kind 'replay' requires backend.cassette")
    if cfg.record:
        inner = HttpLlmBackend(cfg.url) if cfg.url else StubBackend()
        return ReplayBackend.record(cfg.cassette, inner)
    return ReplayBackend.replay(cfg.cassette)


def build_diagnostic_text(snapshot: TopologySnapshot, summary: str, report: HealthReport) -> str:
    """Canonical incident description used for indexing and retrieval queries."""
    return (
        dx.summarize_topology(snapshot)
        + f"\nApplication symptoms: {summary}\n"
        + "Health report: "
        + json.dumps(report.to_dict(), sort_keys=True)
    )


@dataclass(frozen=True)
class StageTiming:
    stage: str
    seconds: float


@dataclass(frozen=True)
class PipelineResult:
    """Everything one diagnosis run produced, in execution order."""

    health_report: HealthReport
    diagnosis: dx.DiagnosisReport | None
    retrieval_hits: RetrievalResult | None
    timings: tuple[StageTiming, ...]
    mode: str
    partial: bool = False
    error: str = ""
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "partial": self.partial,
            "error": self.error,
            "warnings": list(self.warnings),
            "health_report": self.health_report.to_dict(),
            "diagnosis": self.diagnosis.to_dict() if self.diagnosis else None,
            "retrieval_hits": self.retrieval_hits.to_dict() if self.retrieval_hits else None,
            "timings": [{"stage": t.stage, "seconds": t.seconds} for t in self.timings],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def health_report_from_dict(doc: dict) -> HealthReport:
    return HealthReport(
        ranked_causes=tuple(
            RankedCause(
                rank=int(entry["rank"]),
                ref=SeriesRef(
                    layer=entry["layer"], node_id=entry["node"], metric=entry["metric"]
                ),
                score=float(entry["score"]),
            )
            for entry in doc["ranked_causes"]
        ),
        k=int(doc["k"]),
        status=doc.get("status", "ok"),
    )


def diagnosis_report_from_dict(doc: dict) -> dx.DiagnosisReport:
    return dx.DiagnosisReport(
        symptom=doc["symptom"],
        hypotheses=tuple((h["symptom"], h["hypothesis"]) for h in doc["hypotheses"]),
        action_steps=tuple(
            dx.ActionPlan(layer=p["layer"], node=p["node"], steps=tuple(p["steps"]))
            for p in doc["action_steps"]
        ),
        reasoning_chain=doc["reasoning_chain"],
        raw_model_output=doc["raw_model_output"],
        parse_failed=doc["parse_failed"],
    )


def pipeline_result_from_dict(doc: dict) -> PipelineResult:
    return PipelineResult(
        health_report=health_report_from_dict(doc["health_report"]),
        diagnosis=diagnosis_report_from_dict(doc["diagnosis"]) if doc["diagnosis"] else None,
        retrieval_hits=RetrievalResult(
            hits=tuple(
                RetrievalHit(record_id=h["record_id"], similarity=float(h["similarity"]))
                for h in doc["retrieval_hits"]["hits"]
            ),
            n=int(doc["retrieval_hits"]["n"]),
        )
        if doc["retrieval_hits"]
        else None,
        timings=tuple(
            StageTiming(stage=t["stage"], seconds=float(t["seconds"])) for t in doc["timings"]
        ),
        mode=doc["mode"],
        partial=doc["partial"],
        error=doc["error"],
        warnings=tuple(doc.get("warnings", [])),
    )


def run_pipeline(
    snapshot: TopologySnapshot,
    mode: str,
    backend,
    provider: EmbeddingProvider,
    index: VectorIndex | None = None,
    stat_cfg: StatConfig | None = None,
    ens_cfg: dx.EnsembleConfig | None = None,
    params: GenerationParams | None = None,
    domain_knowledge: str = "",
    retrieval_count: int = 3,
    timer: Callable[[], float] = time.perf_counter,
) -> PipelineResult:
    """Run the full diagnosis workflow over one snapshot.

    In few-shot mode a non-empty incident index is required. A backend
    failure yields a partial result (health report, any retrieval hits, no
    diagnosis) rather than discarding the statistical output.
    """
    if mode not in ("few_shot", "zero_shot"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "few_shot" and (index is None or len(index) == 0):
        raise ValueError("few_shot mode requires a non-empty incident corpus")
    stat_cfg = stat_cfg or StatConfig()
    ens_cfg = ens_cfg or dx.EnsembleConfig()
    params = params or GenerationParams()

    timings: list[StageTiming] = []

    def timed(stage: str, fn):
        start = timer()
        result = fn()
        timings.append(StageTiming(stage=stage, seconds=timer() - start))
        return result

    partial_error = ""
    summary = None
    try:
        summary = timed("summarize", lambda: dx.summarize_symptoms(snapshot, backend, params))
    except BackendError as exc:
        partial_error = f"symptom summary failed: {exc}"

    report = timed("analyze", lambda: analyze(snapshot, stat_cfg))

    hits = None
    exemplars: list[dx.Exemplar] = []
    if summary is not None and mode == "few_shot":
        query_text = build_diagnostic_text(snapshot, summary, report)
        hits = timed("retrieve", lambda: index.query(query_text, retrieval_count, provider))
        for hit in hits.hits:
            record = index.get(hit.record_id)
            exemplars.append(
                dx.Exemplar(
                    diagnostic_text=record.diagnostic_text,
                    gold_diagnosis=record.gold_diagnosis,
                    gold_action_steps=record.gold_action_steps,
                )
            )

    diagnosis_report = None
    warnings: tuple[str, ...] = ()
    if summary is not None:
        bundle = timed(
            "build_prompt",
            lambda: dx.build_prompt(
                snapshot,
                summary,
                report,
                exemplars=exemplars,
                domain_knowledge=domain_knowledge,
                mode=mode,
            ),
        )
        try:
            diagnosis_report = timed(
                "diagnose", lambda: dx.diagnose(bundle, backend, ens_cfg, params)
            )
            warnings = tuple(dx.check_report_layers(diagnosis_report, snapshot))
        except BackendError as exc:
            partial_error = f"diagnosis failed: {exc}"

    return PipelineResult(
        health_report=report,
        diagnosis=diagnosis_report,
        retrieval_hits=hits,
        timings=tuple(timings),
        mode=mode,
        partial=diagnosis_report is None,
        error=partial_error,
        warnings=warnings,
    )


def index_incident(
    index: VectorIndex,
    snapshot: TopologySnapshot,
    gold_diagnosis: str,
    gold_action_steps: list[str],
    provider: EmbeddingProvider,
    backend=None,
    stat_cfg: StatConfig | None = None,
    record_id: str | None = None,
    metadata: dict[str, str] | None = None,
) -> str:
    """Analyze a snapshot and index its diagnostic text as a past incident."""
    backend = backend or StubBackend()
    stat_cfg = stat_cfg or StatConfig()
    summary = dx.summarize_symptoms(snapshot, backend, GenerationParams())
    report = analyze(snapshot, stat_cfg)
    text = build_diagnostic_text(snapshot, summary, report)
    meta = {"topology_id": snapshot.topology_id}
    if metadata:
        meta.update(metadata)
    return index.add(
        diagnostic_text=text,
        gold_diagnosis=gold_diagnosis,
        gold_action_steps=gold_action_steps,
        metadata=meta,
        provider=provider,
        record_id=record_id,
    )
