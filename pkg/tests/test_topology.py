from __future__ import annotations

import json
from datetime import datetime, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netrca import faultlab
from netrca.topology import (
    GroundTruth,
    SnapshotInvariantError,
    SnapshotParseError,
    SnapshotSchemaError,
    SnapshotWarning,
    parse_ground_truth,
    parse_snapshot,
    serialize_ground_truth,
    serialize_snapshot,
    validate_store,
    write_snapshot,
)

MINIMAL = {
    "topology_id": "t1",
    "timestamp": "2025-01-01T00:00:00Z",
    "layers": [{"name": "Application", "rank": 0}],
    "nodes": [
        {
            "id": "app-0",
            "layer": "Application",
            "metrics": {
                "latency": {"unit": "ms", "interval_seconds": 60, "values": [1.0, 2.0, 3.0]}
            },
        }
    ],
    "edges": [],
}


def doc(**overrides) -> dict:
    merged = json.loads(json.dumps(MINIMAL))
    merged.update(overrides)
    return merged


def test_parse_minimal_document():
    snapshot = parse_snapshot(json.dumps(MINIMAL).encode())
    assert snapshot.topology_id == "t1"
    assert snapshot.series_length == 3
    assert snapshot.node("app-0").metrics["latency"].unit == "ms"
    assert snapshot.timestamp == datetime(2025, 1, 1, tzinfo=timezone.utc)


def test_edge_referencing_unknown_node_names_the_edge():
    bad = doc(edges=[["app-0", "ghost"]])
    with pytest.raises(SnapshotInvariantError, match=r"edges\[0\].*ghost"):
        parse_snapshot(json.dumps(bad))


def test_self_edge_rejected():
    bad = doc(edges=[["app-0", "app-0"]])
    with pytest.raises(SnapshotInvariantError, match="self-edge"):
        parse_snapshot(json.dumps(bad))


def test_vista_fixture_has_four_layers_in_order():
    snapshot = parse_snapshot(serialize_snapshot(faultlab.make_vista_topology(seed=0)))
    ordered = [l.name for l in sorted(snapshot.layers, key=lambda l: l.rank)]
    assert ordered == ["Application", "Spokes", "TGW", "Gateways"]


def test_malformed_json_raises_parse_error():
    with pytest.raises(SnapshotParseError, match="malformed JSON"):
        parse_snapshot(b"{not json")


def test_non_utf8_bytes_raise_parse_error():
    with pytest.raises(SnapshotParseError, match="UTF-8"):
        parse_snapshot(b"\xff\xfe\x00")


@pytest.mark.parametrize(
    "mutate, exc, fragment",
    [
        (lambda d: d.pop("layers"), SnapshotSchemaError, "layers"),
        (lambda d: d["nodes"][0].pop("id"), SnapshotSchemaError, "id"),
        (
            lambda d: d["nodes"][0]["metrics"]["latency"].update(values=[1.0]),
            SnapshotInvariantError,
            "length",
        ),
        (
            lambda d: d["nodes"][0]["metrics"]["latency"].update(values=[1.0, float("nan")]),
            SnapshotParseError,  # json module refuses bare NaN? see below
            "",
        ),
    ],
)
def test_schema_and_invariant_errors(mutate, exc, fragment):
    bad = doc()
    mutate(bad)
    if fragment == "":
        # NaN survives json.dumps with allow_nan; make sure our validator catches it
        raw = json.dumps(bad)
        with pytest.raises((SnapshotInvariantError, SnapshotParseError)):
            parse_snapshot(raw)
        return
    with pytest.raises(exc, match=fragment):
        parse_snapshot(json.dumps(bad))


def test_duplicate_layer_ranks_rejected():
    bad = doc(layers=[{"name": "A", "rank": 0}, {"name": "B", "rank": 0}])
    bad["nodes"][0]["layer"] = "A"
    with pytest.raises(SnapshotInvariantError, match="contiguous"):
        parse_snapshot(json.dumps(bad))


def test_mixed_series_lengths_rejected():
    bad = doc()
    bad["nodes"][0]["metrics"]["other"] = {
        "unit": "ms",
        "interval_seconds": 60,
        "values": [1.0, 2.0, 3.0, 4.0],
    }
    with pytest.raises(SnapshotInvariantError, match="length"):
        parse_snapshot(json.dumps(bad))


def test_mixed_intervals_rejected():
    bad = doc()
    bad["nodes"][0]["metrics"]["other"] = {
        "unit": "ms",
        "interval_seconds": 30,
        "values": [1.0, 2.0, 3.0],
    }
    with pytest.raises(SnapshotInvariantError, match="interval_seconds"):
        parse_snapshot(json.dumps(bad))


def test_disconnected_graph_warns_but_parses():
    d = doc()
    d["nodes"].append(
        {
            "id": "app-1",
            "layer": "Application",
            "metrics": {
                "latency": {"unit": "ms", "interval_seconds": 60, "values": [1.0, 2.0, 3.0]}
            },
        }
    )
    with pytest.warns(SnapshotWarning, match="not connected"):
        snapshot = parse_snapshot(json.dumps(d))
    assert len(snapshot.nodes) == 2


def test_roundtrip_identity_and_determinism(scenario_outputs):
    for out in scenario_outputs:
        raw = serialize_snapshot(out.snapshot)
        assert parse_snapshot(raw) == out.snapshot
        assert serialize_snapshot(out.snapshot) == raw


def test_anomalous_flags_preserved_byte_exactly():
    d = doc()
    d["nodes"][0]["metrics"]["latency"]["anomalous"] = True
    snapshot = parse_snapshot(json.dumps(d))
    assert snapshot.node("app-0").metrics["latency"].anomalous is True
    raw = serialize_snapshot(snapshot)
    assert parse_snapshot(raw) == snapshot
    assert serialize_snapshot(parse_snapshot(raw)) == raw


@st.composite
def snapshots(draw):
    n_layers = draw(st.integers(1, 3))
    layers = [{"name": f"L{i}", "rank": i} for i in range(n_layers)]
    length = draw(st.integers(2, 6))
    interval = draw(st.sampled_from([30, 60]))
    n_nodes = draw(st.integers(1, 4))
    nodes = []
    for i in range(n_nodes):
        metric_count = draw(st.integers(1, 2))
        metrics = {}
        for m in range(metric_count):
            values = draw(
                st.lists(
                    st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False, width=32),
                    min_size=length,
                    max_size=length,
                )
            )
            metrics[f"m{m}"] = {
                "unit": "u",
                "interval_seconds": interval,
                "values": values,
                "anomalous": draw(st.sampled_from([True, False, None])),
            }
            if metrics[f"m{m}"]["anomalous"] is None:
                del metrics[f"m{m}"]["anomalous"]
        nodes.append({"id": f"n{i}", "layer": f"L{i % n_layers}", "metrics": metrics})
    edge_pool = [
        [a["id"], b["id"]] for a in nodes for b in nodes if a["id"] < b["id"]
    ]
    edges = draw(st.lists(st.sampled_from(edge_pool), max_size=4) if edge_pool else st.just([]))
    return {
        "topology_id": draw(st.text("abc", min_size=1, max_size=8)),
        "timestamp": "2025-05-05T10:30:00Z",
        "layers": layers,
        "nodes": nodes,
        "edges": edges,
    }


@settings(max_examples=40, deadline=None)
@given(snapshots())
def test_roundtrip_property_on_generated_snapshots(document):
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SnapshotWarning)
        snapshot = parse_snapshot(json.dumps(document))
        assert parse_snapshot(serialize_snapshot(snapshot)) == snapshot
        lengths = {len(s.values) for n in snapshot.nodes for s in n.metrics.values()}
        intervals = {s.interval_seconds for n in snapshot.nodes for s in n.metrics.values()}
        assert len(lengths) == 1
        assert len(intervals) == 1


@settings(max_examples=60, deadline=None)
@given(st.binary(max_size=400))
def test_validation_is_total_on_arbitrary_bytes(raw):
    import warnings

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SnapshotWarning)
            parse_snapshot(raw)
    except (SnapshotParseError, SnapshotSchemaError, SnapshotInvariantError):
        pass


def test_ground_truth_pairing_validates_fault_target(gw_contention):
    raw = serialize_ground_truth(gw_contention.truth)
    truth = parse_ground_truth(raw, gw_contention.snapshot)
    assert truth == gw_contention.truth
    broken = GroundTruth(
        scenario_name="x",
        fault_layer="Gateways",
        fault_node="nope",
        fault_metric="total_cpu_utilization",
        gold_diagnosis="d",
        gold_action_steps=("s",),
    )
    with pytest.raises(SnapshotInvariantError, match="does not exist"):
        parse_ground_truth(serialize_ground_truth(broken), gw_contention.snapshot)


def test_validate_store_empty(tmp_path):
    assert validate_store(tmp_path).entries == ()


def test_validate_store_eight_scenarios_with_truth(tmp_path, scenario_outputs):
    for out in scenario_outputs:
        write_snapshot(tmp_path, out.snapshot, out.truth)
    scan = validate_store(tmp_path)
    assert len(scan.entries) == 8
    assert all(entry.has_truth for entry in scan.entries)
    assert scan.skipped == ()


def test_validate_store_isolates_corrupt_files(tmp_path, scenario_outputs):
    write_snapshot(tmp_path, scenario_outputs[0].snapshot, scenario_outputs[0].truth)
    corrupt = tmp_path / "broken.json"
    corrupt.write_text("{nope")
    scan = validate_store(tmp_path)
    assert len(scan.entries) == 1
    assert len(scan.skipped) == 1
    assert scan.skipped[0][0] == corrupt
