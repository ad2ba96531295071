"""On-demand diagnosis HTTP service.

POST /diagnose takes a snapshot JSON body (query param ``mode``) and returns
a full pipeline result; GET /health reports liveness. Each request parses
its own immutable snapshot, and the corpus/index is shared read-only, so
concurrent requests stay isolated. The service never mutates the store or
corpus.
"""

from __future__ import annotations

import warnings
from pathlib import Path

from fastapi import FastAPI, Query, Request
from fastapi.concurrency import run_in_threadpool
from fastapi.responses import JSONResponse

from .llm import BackendError
from .pipeline import AppConfig, make_backend, make_provider, run_pipeline
from .retrieval import VectorIndex
from .topology import SnapshotError, SnapshotWarning, parse_snapshot


def create_app(
    config: AppConfig | None = None,
    backend=None,
    provider=None,
    index: VectorIndex | None = None,
) -> FastAPI:
    """Build the service; explicit components override config-derived ones."""
    config = config or AppConfig()
    provider = provider or make_provider(config.provider)
    backend = backend or make_backend(config.backend)
    if index is None and Path(config.corpus_path).is_file():
        index = VectorIndex.load(config.corpus_path)

    app = FastAPI(title="netrca", version="0.1.0")

    @app.get("/health")
    def health() -> dict:
        return {
            "status": "ok",
            "corpus_records": len(index) if index is not None else 0,
        }

    @app.post("/diagnose")
    async def diagnose(request: Request, mode: str = Query(default="zero_shot")):
        body = await request.body()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", SnapshotWarning)
                snapshot = parse_snapshot(body)
        except SnapshotError as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        try:
            result = await run_in_threadpool(
                run_pipeline,
                snapshot,
                mode=mode,
                backend=backend,
                provider=provider,
                index=index,
                stat_cfg=config.stat,
                ens_cfg=config.ensemble,
                domain_knowledge=config.domain_knowledge,
                retrieval_count=config.retrieval_count,
            )
        except (ValueError, BackendError) as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        status = 502 if result.partial else 200
        return JSONResponse(result.to_dict(), status_code=status)

    return app
