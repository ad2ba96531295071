"""Command-line entry points: simulate, analyze, diagnose, corpus-add, eval, serve.

Exit codes: 0 success, 1 domain error (bad input data, unreachable backend),
2 usage error (argparse).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import warnings
from pathlib import Path

from . import faultlab
from .evaluation import EvaluationError, load_eval_cases, run_eval_suite
from .embeddings import HashedTrigramTokenEmbedder
from .llm import BackendError
from .pipeline import (
    AppConfig,
    BackendConfig,
    ConfigError,
    load_config,
    make_backend,
    make_provider,
    run_pipeline,
    index_incident,
)
from .retrieval import RetrievalError, VectorIndex
from .statrca import StatConfig, StatError, analyze
from .topology import (
    SnapshotError,
    SnapshotWarning,
    parse_ground_truth,
    parse_snapshot,
    serialize_ground_truth,
    serialize_snapshot,
)


def _load_snapshot(path: str):
    file_path = Path(path)
    if not file_path.is_file():
        raise SnapshotError(f"snapshot file not found: {file_path}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SnapshotWarning)
        return parse_snapshot(file_path.read_bytes())


def _resolve_config(args: argparse.Namespace) -> AppConfig:
    config = load_config(args.config) if getattr(args, "config", None) else AppConfig()
    if getattr(args, "corpus", None):
        config = dataclasses.replace(config, corpus_path=args.corpus)
    backend_kind = getattr(args, "backend", None)
    if backend_kind:
        config = dataclasses.replace(
            config,
            backend=BackendConfig(
                kind=backend_kind,
                url=getattr(args, "backend_url", None) or config.backend.url,
                cassette=getattr(args, "cassette", None) or config.backend.cassette,
                record=bool(getattr(args, "record", False)),
            ),
        )
    elif getattr(args, "cassette", None):
        config = dataclasses.replace(
            config,
            backend=dataclasses.replace(
                config.backend, cassette=args.cassette, record=bool(getattr(args, "record", False))
            ),
        )
    if getattr(args, "k", None):
        config = dataclasses.replace(config, stat=dataclasses.replace(config.stat, k=args.k))
    return config


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        spec = faultlab.get_scenario(args.scenario)
        spec = dataclasses.replace(spec, seed=args.seed, series_length=args.length)
        output = faultlab.generate_scenario(spec)
    except faultlab.ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out_dir = Path(args.out) / output.snapshot.topology_id
    out_dir.mkdir(parents=True, exist_ok=True)
    snap_path = out_dir / f"{spec.name}.json"
    truth_path = out_dir / f"{spec.name}.truth.json"
    snap_path.write_bytes(serialize_snapshot(output.snapshot))
    truth_path.write_bytes(serialize_ground_truth(output.truth))
    print(snap_path)
    print(truth_path)
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    try:
        snapshot = _load_snapshot(args.snapshot)
        cfg = StatConfig(k=args.k, max_lag=args.max_lag, significance=args.significance)
        report = analyze(snapshot, cfg)
    except (SnapshotError, StatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(report.to_dict(), sort_keys=True, indent=2))
    return 0


def cmd_diagnose(args: argparse.Namespace) -> int:
    try:
        snapshot = _load_snapshot(args.snapshot)
        config = _resolve_config(args)
        backend = make_backend(config.backend)
        provider = make_provider(config.provider)
        index = None
        if args.mode == "few_shot":
            corpus_path = Path(config.corpus_path)
            if not corpus_path.is_file():
                raise ConfigError(f"few_shot mode requires a corpus file: {corpus_path}")
            index = VectorIndex.load(corpus_path)
        result = run_pipeline(
            snapshot,
            mode=args.mode,
            backend=backend,
            provider=provider,
            index=index,
            stat_cfg=config.stat,
            ens_cfg=config.ensemble,
            domain_knowledge=config.domain_knowledge,
            retrieval_count=config.retrieval_count,
        )
    except (SnapshotError, StatError, ConfigError, RetrievalError, BackendError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(result.to_json(), end="")
    if result.partial:
        print(f"error: partial result: {result.error}", file=sys.stderr)
        return 1
    return 0


def cmd_corpus_add(args: argparse.Namespace) -> int:
    try:
        snapshot = _load_snapshot(args.snapshot)
        truth_path = Path(args.truth)
        if not truth_path.is_file():
            raise SnapshotError(f"ground-truth file not found: {truth_path}")
        truth = parse_ground_truth(truth_path.read_bytes(), snapshot)
        config = _resolve_config(args)
        provider = make_provider(config.provider)
        corpus_path = Path(config.corpus_path)
        if corpus_path.is_file():
            index = VectorIndex.load(corpus_path)
        else:
            index = VectorIndex.for_provider(provider)
        record_id = index_incident(
            index,
            snapshot,
            gold_diagnosis=truth.gold_diagnosis,
            gold_action_steps=list(truth.gold_action_steps),
            provider=provider,
            stat_cfg=config.stat,
            record_id=truth.scenario_name,
            metadata={"scenario_name": truth.scenario_name},
        )
        index.save(corpus_path)
    except (SnapshotError, StatError, ConfigError, RetrievalError, BackendError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"added {record_id} to {corpus_path} ({len(index)} records)")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    try:
        cases_path = Path(args.cases)
        if not cases_path.is_file():
            raise EvaluationError(f"cases file not found: {cases_path}")
        cases = load_eval_cases(cases_path.read_bytes())
        config = _resolve_config(args)
        provider = make_provider(config.provider)
        embedder = HashedTrigramTokenEmbedder(config.provider.dimension)
        results, table = run_eval_suite(cases, args.mode, embedder, provider)
    except (EvaluationError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(table)
    json_out = Path(args.json_out) if args.json_out else cases_path.with_suffix(".results.json")
    json_out.write_text(
        json.dumps([r.to_dict() for r in results], sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    print(f"results written to {json_out}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    try:
        config = _resolve_config(args)
        if getattr(args, "bind", None):
            config = dataclasses.replace(config, bind_address=args.bind)
        app = create_app(config)
    except (ConfigError, RetrievalError, BackendError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    host, _, port = config.bind_address.partition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8080))
    return 0


def _add_config_flags(parser: argparse.ArgumentParser, with_backend: bool = True):
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--corpus", help="incident corpus path (overrides config)")
    if with_backend:
        parser.add_argument("--backend", choices=("stub", "http", "replay"))
        parser.add_argument("--backend-url", help="LLM service URL for the http backend")
        parser.add_argument("--cassette", help="record/replay cassette path")
        parser.add_argument(
            "--record", action="store_true", help="record into the cassette instead of replaying"
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netrca",
        description="Root-cause analysis over layered network topology snapshots",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a fault scenario snapshot + ground truth")
    p_sim.add_argument("--scenario", required=True)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--length", type=int, default=200, help="series length")
    p_sim.add_argument("--out", default="store")
    p_sim.set_defaults(func=cmd_simulate)

    p_an = sub.add_parser("analyze", help="rank statistical root causes for a snapshot")
    p_an.add_argument("snapshot")
    p_an.add_argument("--k", type=int, default=5)
    p_an.add_argument("--max-lag", type=int, default=3)
    p_an.add_argument("--significance", type=float, default=0.05)
    p_an.set_defaults(func=cmd_analyze)

    p_dx = sub.add_parser("diagnose", help="run the full diagnosis pipeline")
    p_dx.add_argument("snapshot")
    p_dx.add_argument("--mode", choices=("few_shot", "zero_shot"), default="few_shot")
    p_dx.add_argument("--k", type=int)
    _add_config_flags(p_dx)
    p_dx.set_defaults(func=cmd_diagnose)

    p_ca = sub.add_parser("corpus-add", help="index a snapshot + ground truth as a past incident")
    p_ca.add_argument("--snapshot", required=True)
    p_ca.add_argument("--truth", required=True)
    _add_config_flags(p_ca, with_backend=False)
    p_ca.set_defaults(func=cmd_corpus_add)

    p_ev = sub.add_parser("eval", help="score predicted vs gold diagnoses")
    p_ev.add_argument("cases")
    p_ev.add_argument("--mode", choices=("few_shot", "zero_shot"), default="few_shot")
    p_ev.add_argument("--json-out")
    _add_config_flags(p_ev, with_backend=False)
    p_ev.set_defaults(func=cmd_eval)

    p_sv = sub.add_parser("serve", help="run the on-demand diagnosis HTTP service")
    p_sv.add_argument("--bind", help="host:port (default 127.0.0.1:8080)")
    _add_config_flags(p_sv)
    p_sv.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
