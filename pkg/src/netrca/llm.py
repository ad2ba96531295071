"""Pluggable text-generation backends.

Three implementations cover the deployment spectrum: an HTTP JSON client for
a real model service, a deterministic stub for offline tests, and a
record/replay backend that pins prompt -> response pairs to disk so full
pipeline runs are reproducible without model access.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import requests

LLM_URL_ENV = "RCA_LLM_URL"
LLM_API_KEY_ENV = "RCA_LLM_API_KEY"

# Sentinels shared between prompt rendering and the template stub.
SUMMARY_PROMPT_MARKER = "Anomalous application-layer metrics:"
TOP_CAUSE_MARKER = "<-- most likely root cause"
DRAFT_HEADER_RE = re.compile(r"^--- Draft (\d+) ---$", re.MULTILINE)


class BackendError(Exception):
    """Raised when a backend cannot produce a completion."""


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.0
    max_output_tokens: int = 1024
    timeout_seconds: float = 30.0

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")
        if self.timeout_seconds <= 0:
            raise ValueError("timeout_seconds must be positive")


class LlmBackend(Protocol):
    def generate(self, prompt: str, params: GenerationParams) -> str: ...


class HttpLlmBackend:
    """JSON-over-HTTP model client.

    Contract: POST ``{"prompt", "temperature", "max_tokens"}`` to the
    configured URL, receive ``{"text": str}``. The URL defaults to
    ``RCA_LLM_URL``; a bearer token is read from ``RCA_LLM_API_KEY``.
    """

    def __init__(self, url: str | None = None, api_key: str | None = None):
        self.url = url or os.environ.get(LLM_URL_ENV)
        if not self.url:
            raise BackendError(f"no backend URL configured (set {LLM_URL_ENV})")
        self.api_key = api_key if api_key is not None else os.environ.get(LLM_API_KEY_ENV)

    def generate(self, prompt: str, params: GenerationParams) -> str:
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "prompt": prompt,
            "temperature": params.temperature,
            "max_tokens": params.max_output_tokens,
        }
        try:
            response = requests.post(
                self.url, json=body, headers=headers, timeout=params.timeout_seconds
            )
            response.raise_for_status()
            payload = response.json()
        except requests.RequestException as exc:
            raise BackendError(f"LLM request failed: {exc}") from exc
        text = payload.get("text")
        if not isinstance(text, str):
            raise BackendError("LLM response is missing a 'text' field")
        return text


class StubBackend:
    """Deterministic offline backend for tests.

    Resolution order per call: a configured ``fixed_response`` wins; else the
    next entry of ``responses`` is consumed; else a template answer is derived
    from markers in the prompt itself. Every call is recorded in ``calls``
    for inspection.
    """

    def __init__(self, fixed_response: str | None = None, responses: list[str] | None = None):
        self.fixed_response = fixed_response
        self.responses = list(responses) if responses else []
        self.calls: list[tuple[str, GenerationParams]] = []
        self._lock = threading.Lock()
        self._next = 0

    def generate(self, prompt: str, params: GenerationParams) -> str:
        with self._lock:
            self.calls.append((prompt, params))
            if self.fixed_response is not None:
                return self.fixed_response
            if self._next < len(self.responses):
                response = self.responses[self._next]
                self._next += 1
                return response
        return self._template_answer(prompt)

    def _template_answer(self, prompt: str) -> str:
        if SUMMARY_PROMPT_MARKER in prompt:
            return self._summary_answer(prompt)
        drafts = split_drafts(prompt)
        if drafts:
            return drafts[0]
        return self._diagnosis_answer(prompt)

    @staticmethod
    def _summary_answer(prompt: str) -> str:
        marker_line = next(
            line for line in prompt.splitlines() if SUMMARY_PROMPT_MARKER in line
        )
        listed = marker_line.split(SUMMARY_PROMPT_MARKER, 1)[1].strip()
        if listed == "none":
            return "No application-layer anomalies detected; all metrics are within normal range."
        return f"Application-layer anomalies detected in: {listed}."

    @staticmethod
    def _diagnosis_answer(prompt: str) -> str:
        top = _top_ranked_row(prompt)
        if top is None:
            layer, node, metric = "unknown", "unknown", "unknown"
        else:
            layer, node, metric = top
        return (
            "Symptom: Degraded application performance.\n"
            f"Root Cause Hypothesis: The root cause is likely the abnormal {metric} "
            f"on the {layer} node {node}, which propagates to the application layer.\n"
            f"Action Steps on {layer} Layer Node {node}:\n"
            f"1. Inspect {metric} on {node} and confirm the deviation window.\n"
            f"2. Remediate the {layer} fault and verify application metrics recover.\n"
            "Reasoning: The ranked health report places this series first, and the "
            "causal direction points from it toward the application symptoms."
        )


def _top_ranked_row(prompt: str) -> tuple[str, str, str] | None:
    for line in prompt.splitlines():
        if TOP_CAUSE_MARKER in line:
            columns = re.split(r"\s{2,}", line.split(TOP_CAUSE_MARKER)[0].strip())
            if len(columns) >= 4:
                return columns[1], columns[2], columns[3]
    return None


def split_drafts(prompt: str) -> list[str]:
    """Extract draft bodies from an aggregation prompt; empty if none."""
    matches = list(DRAFT_HEADER_RE.finditer(prompt))
    if not matches:
        return []
    drafts = []
    for i, match in enumerate(matches):
        start = match.end()
        end = matches[i + 1].start() if i + 1 < len(matches) else len(prompt)
        drafts.append(prompt[start:end].strip())
    return drafts


def prompt_key(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class ReplayBackend:
    """Cassette-backed backend: replays recorded responses keyed by prompt hash.

    In record mode every call is delegated to ``inner`` and the pair is
    persisted immediately; in replay mode an unknown prompt is an error.
    """

    def __init__(self, cassette_path: Path | str, inner: LlmBackend | None = None):
        self.cassette_path = Path(cassette_path)
        self.inner = inner
        self._lock = threading.Lock()
        if self.cassette_path.is_file():
            self._cassette: dict[str, str] = json.loads(
                self.cassette_path.read_text(encoding="utf-8")
            )
        elif inner is None:
            raise BackendError(f"cassette not found: {self.cassette_path}")
        else:
            self._cassette = {}

    @classmethod
    def replay(cls, cassette_path: Path | str) -> "ReplayBackend":
        return cls(cassette_path)

    @classmethod
    def record(cls, cassette_path: Path | str, inner: LlmBackend) -> "ReplayBackend":
        return cls(cassette_path, inner=inner)

    def generate(self, prompt: str, params: GenerationParams) -> str:
        key = prompt_key(prompt)
        with self._lock:
            if key in self._cassette:
                return self._cassette[key]
            if self.inner is None:
                raise BackendError(
                    f"prompt hash {key[:12]}... not present in cassette {self.cassette_path}"
                )
        response = self.inner.generate(prompt, params)
        with self._lock:
            self._cassette[key] = response
            self.cassette_path.parent.mkdir(parents=True, exist_ok=True)
            self.cassette_path.write_text(
                json.dumps(self._cassette, sort_keys=True, indent=2) + "\n", encoding="utf-8"
            )
        return response
