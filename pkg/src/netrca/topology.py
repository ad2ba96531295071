"""Layered network-graph data model: snapshot schema, validation, persistence.

A snapshot is a single JSON document capturing one observation window of a
layered topology: layers, nodes with per-metric time series, and edges.
Snapshots are immutable after parsing and safe to share across threads.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path


class SnapshotError(Exception):
    """Base class for snapshot parsing/validation failures."""


class SnapshotParseError(SnapshotError):
    """Raised when the input is not well-formed JSON."""


class SnapshotSchemaError(SnapshotError):
    """Raised when the document shape is wrong; message names the offending path."""


class SnapshotInvariantError(SnapshotError):
    """Raised when a semantic rule is violated; message names the rule."""


class SnapshotWarning(UserWarning):
    """Non-fatal validation findings (e.g. a disconnected topology)."""


@dataclass(frozen=True)
class Layer:
    """One stratum of the topology; rank 0 is the application-most layer."""

    name: str
    rank: int


@dataclass(frozen=True)
class MetricSeries:
    """A single telemetry time series attached to a node.

    ``anomalous`` is tri-state: True/False when the collector marked the
    series, None when no marking exists (downstream analysis may then apply
    its own detector).
    """

    name: str
    unit: str
    interval_seconds: float
    values: tuple[float, ...]
    anomalous: bool | None = None


@dataclass(frozen=True)
class NetNode:
    id: str
    layer: str
    metrics: dict[str, MetricSeries] = field(default_factory=dict)


@dataclass(frozen=True)
class TopologySnapshot:
    """One capture of the full layered graph with aligned metric series."""

    topology_id: str
    timestamp: datetime
    layers: tuple[Layer, ...]
    nodes: tuple[NetNode, ...]
    edges: tuple[tuple[str, str], ...]

    def node(self, node_id: str) -> NetNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def layer_by_rank(self, rank: int) -> Layer:
        for layer in self.layers:
            if layer.rank == rank:
                return layer
        raise KeyError(rank)

    def nodes_in_layer(self, layer_name: str) -> list[NetNode]:
        return [n for n in self.nodes if n.layer == layer_name]

    @property
    def series_length(self) -> int:
        for n in self.nodes:
            for series in n.metrics.values():
                return len(series.values)
        return 0

    def has_series(self, layer: str, node_id: str, metric: str) -> bool:
        for n in self.nodes:
            if n.id == node_id and n.layer == layer and metric in n.metrics:
                return True
        return False


@dataclass(frozen=True)
class GroundTruth:
    """Injected-fault answer key paired with a snapshot."""

    scenario_name: str
    fault_layer: str
    fault_node: str
    fault_metric: str
    gold_diagnosis: str
    gold_action_steps: tuple[str, ...]


def _parse_timestamp(raw: str, path: str) -> datetime:
    if not isinstance(raw, str):
        raise SnapshotSchemaError(f"{path}: expected RFC 3339 string, got {type(raw).__name__}")
    text = raw[:-1] + "+00:00" if raw.endswith("Z") else raw
    try:
        ts = datetime.fromisoformat(text)
    except ValueError as exc:
        raise SnapshotSchemaError(f"{path}: invalid timestamp {raw!r} ({exc})") from exc
    if ts.tzinfo is None:
        raise SnapshotSchemaError(f"{path}: timestamp {raw!r} must carry a UTC offset")
    return ts.astimezone(timezone.utc)


def _format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def _require(doc: dict, key: str, kind: type, path: str):
    if key not in doc:
        raise SnapshotSchemaError(f"{path}.{key}: missing required key")
    value = doc[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SnapshotSchemaError(f"{path}.{key}: expected number, got {type(value).__name__}")
        return float(value)
    if kind is int and isinstance(value, bool):
        raise SnapshotSchemaError(f"{path}.{key}: expected integer, got bool")
    if not isinstance(value, kind):
        raise SnapshotSchemaError(
            f"{path}.{key}: expected {kind.__name__}, got {type(value).__name__}"
        )
    return value


def _parse_series(name: str, doc, path: str) -> MetricSeries:
    if not isinstance(doc, dict):
        raise SnapshotSchemaError(f"{path}: expected object, got {type(doc).__name__}")
    unit = _require(doc, "unit", str, path)
    interval = _require(doc, "interval_seconds", float, path)
    raw_values = _require(doc, "values", list, path)
    if interval <= 0:
        raise SnapshotInvariantError(f"{path}.interval_seconds must be positive, got {interval}")
    values = []
    for i, v in enumerate(raw_values):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise SnapshotSchemaError(f"{path}.values[{i}]: expected number")
        v = float(v)
        if not math.isfinite(v):
            raise SnapshotInvariantError(f"{path}.values[{i}] must be finite, got {v}")
        values.append(v)
    if len(values) < 2:
        raise SnapshotInvariantError(f"{path}.values must have length >= 2, got {len(values)}")
    anomalous = doc.get("anomalous")
    if anomalous is not None and not isinstance(anomalous, bool):
        raise SnapshotSchemaError(f"{path}.anomalous: expected boolean or absent")
    return MetricSeries(
        name=name,
        unit=unit,
        interval_seconds=interval,
        values=tuple(values),
        anomalous=anomalous,
    )


def parse_snapshot(raw: bytes | str) -> TopologySnapshot:
    """Parse and validate a snapshot JSON document.

    Raises SnapshotParseError for malformed JSON, SnapshotSchemaError when the
    document shape is wrong (message names the offending path), and
    SnapshotInvariantError when a semantic rule fails (message names the rule).
    A disconnected edge graph only emits a SnapshotWarning.
    """
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SnapshotParseError(f"input is not UTF-8: {exc}") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SnapshotParseError(f"malformed JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SnapshotSchemaError("$: expected top-level object")

    topology_id = _require(doc, "topology_id", str, "$")
    timestamp = _parse_timestamp(_require(doc, "timestamp", str, "$"), "$.timestamp")

    layers = []
    for i, entry in enumerate(_require(doc, "layers", list, "$")):
        path = f"$.layers[{i}]"
        if not isinstance(entry, dict):
            raise SnapshotSchemaError(f"{path}: expected object")
        layers.append(Layer(name=_require(entry, "name", str, path), rank=_require(entry, "rank", int, path)))
    names = [layer.name for layer in layers]
    if len(set(names)) != len(names):
        raise SnapshotInvariantError("layer names must be unique within a snapshot")
    ranks = sorted(layer.rank for layer in layers)
    if ranks != list(range(len(layers))):
        raise SnapshotInvariantError(
            f"layer ranks must be unique and contiguous from 0, got {ranks}"
        )

    nodes = []
    for i, entry in enumerate(_require(doc, "nodes", list, "$")):
        path = f"$.nodes[{i}]"
        if not isinstance(entry, dict):
            raise SnapshotSchemaError(f"{path}: expected object")
        node_id = _require(entry, "id", str, path)
        layer = _require(entry, "layer", str, path)
        metrics_doc = _require(entry, "metrics", dict, path)
        metrics = {
            name: _parse_series(name, series_doc, f"{path}.metrics[{name!r}]")
            for name, series_doc in metrics_doc.items()
        }
        if not metrics:
            raise SnapshotInvariantError(f"node {node_id!r} must carry at least one metric")
        if layer not in names:
            raise SnapshotInvariantError(f"node {node_id!r} references unknown layer {layer!r}")
        nodes.append(NetNode(id=node_id, layer=layer, metrics=metrics))
    ids = [n.id for n in nodes]
    if len(set(ids)) != len(ids):
        raise SnapshotInvariantError("node ids must be unique within a snapshot")

    lengths = {len(s.values) for n in nodes for s in n.metrics.values()}
    if len(lengths) > 1:
        raise SnapshotInvariantError(
            f"all metric series must share one length, got lengths {sorted(lengths)}"
        )
    intervals = {s.interval_seconds for n in nodes for s in n.metrics.values()}
    if len(intervals) > 1:
        raise SnapshotInvariantError(
            f"all metric series must share one interval_seconds, got {sorted(intervals)}"
        )

    edges = []
    id_set = set(ids)
    for i, entry in enumerate(_require(doc, "edges", list, "$")):
        path = f"$.edges[{i}]"
        if not isinstance(entry, list) or len(entry) != 2 or not all(isinstance(e, str) for e in entry):
            raise SnapshotSchemaError(f"{path}: expected [source, target] string pair")
        source, target = entry
        for endpoint in (source, target):
            if endpoint not in id_set:
                raise SnapshotInvariantError(f"{path} references unknown node id {endpoint!r}")
        if source == target:
            raise SnapshotInvariantError(f"{path}: self-edges are not allowed ({source!r})")
        edges.append((source, target))

    snapshot = TopologySnapshot(
        topology_id=topology_id,
        timestamp=timestamp,
        layers=tuple(layers),
        nodes=tuple(nodes),
        edges=tuple(edges),
    )
    if nodes and not _is_connected(id_set, edges):
        warnings.warn(
            f"snapshot {topology_id!r} is not connected under its declared edges",
            SnapshotWarning,
            stacklevel=2,
        )
    return snapshot


def _is_connected(ids: set[str], edges: list[tuple[str, str]]) -> bool:
    if len(ids) <= 1:
        return True
    adjacency: dict[str, set[str]] = {i: set() for i in ids}
    for a, b in edges:
        adjacency[a].add(b)
        adjacency[b].add(a)
    seen = set()
    stack = [next(iter(ids))]
    while stack:
        current = stack.pop()
        if current in seen:
            continue
        seen.add(current)
        stack.extend(adjacency[current] - seen)
    return seen == ids


def snapshot_to_dict(s: TopologySnapshot) -> dict:
    nodes = []
    for n in s.nodes:
        metrics = {}
        for name in sorted(n.metrics):
            series = n.metrics[name]
            entry: dict = {
                "unit": series.unit,
                "interval_seconds": series.interval_seconds,
                "values": list(series.values),
            }
            if series.anomalous is not None:
                entry["anomalous"] = series.anomalous
            metrics[name] = entry
        nodes.append({"id": n.id, "layer": n.layer, "metrics": metrics})
    return {
        "topology_id": s.topology_id,
        "timestamp": _format_timestamp(s.timestamp),
        "layers": [{"name": layer.name, "rank": layer.rank} for layer in s.layers],
        "nodes": nodes,
        "edges": [list(e) for e in s.edges],
    }


def serialize_snapshot(s: TopologySnapshot) -> bytes:
    """Serialize a snapshot to canonical JSON bytes (stable key order)."""
    return (json.dumps(snapshot_to_dict(s), sort_keys=True, indent=2) + "\n").encode("utf-8")


def parse_ground_truth(raw: bytes | str, snapshot: TopologySnapshot | None = None) -> GroundTruth:
    """Parse a `<snapshot>.truth.json` document, optionally checking it against its snapshot."""
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SnapshotParseError(f"malformed JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SnapshotSchemaError("$: expected top-level object")
    steps = _require(doc, "gold_action_steps", list, "$")
    if not all(isinstance(step, str) for step in steps):
        raise SnapshotSchemaError("$.gold_action_steps: expected list of strings")
    truth = GroundTruth(
        scenario_name=_require(doc, "scenario_name", str, "$"),
        fault_layer=_require(doc, "fault_layer", str, "$"),
        fault_node=_require(doc, "fault_node", str, "$"),
        fault_metric=_require(doc, "fault_metric", str, "$"),
        gold_diagnosis=_require(doc, "gold_diagnosis", str, "$"),
        gold_action_steps=tuple(steps),
    )
    if not truth.gold_diagnosis.strip() or not all(s.strip() for s in truth.gold_action_steps):
        raise SnapshotInvariantError("gold diagnosis and action steps must be non-empty")
    if not truth.gold_action_steps:
        raise SnapshotInvariantError("gold_action_steps must not be empty")
    if snapshot is not None and not snapshot.has_series(
        truth.fault_layer, truth.fault_node, truth.fault_metric
    ):
        raise SnapshotInvariantError(
            "fault target "
            f"({truth.fault_layer}, {truth.fault_node}, {truth.fault_metric}) "
            "does not exist in the paired snapshot"
        )
    return truth


def ground_truth_to_dict(t: GroundTruth) -> dict:
    return {
        "scenario_name": t.scenario_name,
        "fault_layer": t.fault_layer,
        "fault_node": t.fault_node,
        "fault_metric": t.fault_metric,
        "gold_diagnosis": t.gold_diagnosis,
        "gold_action_steps": list(t.gold_action_steps),
    }


def serialize_ground_truth(t: GroundTruth) -> bytes:
    return (json.dumps(ground_truth_to_dict(t), sort_keys=True, indent=2) + "\n").encode("utf-8")


@dataclass(frozen=True)
class StoreEntry:
    snapshot_id: str
    path: Path
    has_truth: bool


@dataclass(frozen=True)
class StoreScan:
    entries: tuple[StoreEntry, ...]
    skipped: tuple[tuple[Path, str], ...]


def store_paths(root: Path, topology_id: str, timestamp: datetime) -> tuple[Path, Path]:
    """Snapshot/truth file locations under the `<root>/<topology_id>/<timestamp>.json` layout."""
    stem = timestamp.astimezone(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    base = root / topology_id
    return base / f"{stem}.json", base / f"{stem}.truth.json"


def write_snapshot(root: Path, s: TopologySnapshot, truth: GroundTruth | None = None) -> list[Path]:
    """Persist a snapshot (and optional ground truth) into the store layout."""
    snap_path, truth_path = store_paths(root, s.topology_id, s.timestamp)
    snap_path.parent.mkdir(parents=True, exist_ok=True)
    snap_path.write_bytes(serialize_snapshot(s))
    written = [snap_path]
    if truth is not None:
        truth_path.write_bytes(serialize_ground_truth(truth))
        written.append(truth_path)
    return written


def validate_store(directory: Path | str) -> StoreScan:
    """Enumerate snapshot/ground-truth pairs under a store directory.

    Unparsable files are skipped and reported in ``skipped`` rather than
    aborting the scan. Raises SnapshotError when the directory itself is
    unreadable.
    """
    root = Path(directory)
    if not root.is_dir():
        raise SnapshotError(f"store directory does not exist: {root}")
    entries: list[StoreEntry] = []
    skipped: list[tuple[Path, str]] = []
    for path in sorted(root.rglob("*.json")):
        if path.name.endswith(".truth.json"):
            continue
        truth_path = path.with_name(path.name[: -len(".json")] + ".truth.json")
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", SnapshotWarning)
                snapshot = parse_snapshot(path.read_bytes())
            has_truth = truth_path.is_file()
            if has_truth:
                parse_ground_truth(truth_path.read_bytes(), snapshot)
        except SnapshotError as exc:
            skipped.append((path, str(exc)))
            continue
        rel = path.relative_to(root)
        snapshot_id = str(rel.with_suffix("")).replace("\\", "/")
        entries.append(StoreEntry(snapshot_id=snapshot_id, path=path, has_truth=has_truth))
    return StoreScan(entries=tuple(entries), skipped=tuple(skipped))
