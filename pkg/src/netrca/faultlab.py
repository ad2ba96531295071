"""Synthetic fault-injection lab: two reference topologies, eight scenarios.

Every scenario plants a level-shift fault in one metric series and propagates
it to downstream series through lagged linear couplings with gaussian noise,
yielding snapshots whose causal structure is known exactly. The paired
ground truth carries the scenario's gold diagnosis and action steps, so the
lab doubles as the oracle dataset for the statistical pipeline.

Series are synthesized in deviation space (multiples of ``noise_sigma``) and
mapped onto per-metric baselines with an affine scale, which leaves every
statistic downstream (z-scores, regressions, correlations) unchanged. Idle
series use noise truncated at ``IDLE_CLIP_SIGMAS`` so that chance
fluctuations never cross the default anomaly threshold; only injected
structure can look anomalous.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import datetime, timedelta, timezone

import numpy as np

from .statrca import SeriesRef
from .topology import GroundTruth, Layer, MetricSeries, NetNode, TopologySnapshot

FAULT_STEP_SIGMAS = 5.0
IDLE_CLIP_SIGMAS = 2.0
DEFAULT_INTERVAL_SECONDS = 60.0
_BASE_TIMESTAMP = datetime(2025, 3, 1, tzinfo=timezone.utc)


class ScenarioError(Exception):
    """Raised for unknown scenarios or inconsistent scenario specs."""


@dataclass(frozen=True)
class Coupling:
    """dest_t = gain * source_{t-lag} + baseline + noise."""

    source: SeriesRef
    dest: SeriesRef
    lag: int
    gain: float


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    label: str
    topology: str
    fault_target: SeriesRef
    coupling: tuple[Coupling, ...] = ()
    flagged: tuple[SeriesRef, ...] = ()
    noise_sigma: float = 0.05
    series_length: int = 200
    seed: int = 0


@dataclass(frozen=True)
class ScenarioOutput:
    snapshot: TopologySnapshot
    truth: GroundTruth


@dataclass(frozen=True)
class _MetricSpec:
    name: str
    unit: str
    baseline: float
    scale: float


@dataclass(frozen=True)
class _Blueprint:
    topology_id: str
    layers: tuple[tuple[str, int], ...]
    nodes: tuple[tuple[str, str], ...]
    layer_metrics: dict[str, tuple[_MetricSpec, ...]]
    edges: tuple[tuple[str, str], ...]

    def refs(self) -> list[SeriesRef]:
        return [
            SeriesRef(layer=layer, node_id=node_id, metric=m.name)
            for node_id, layer in self.nodes
            for m in self.layer_metrics[layer]
        ]

    def metric_spec(self, ref: SeriesRef) -> _MetricSpec:
        for m in self.layer_metrics[ref.layer]:
            if m.name == ref.metric:
                return m
        raise ScenarioError(f"blueprint has no metric {ref.metric!r} in layer {ref.layer!r}")


_VISTA = _Blueprint(
    topology_id="vista-hybrid-cloud",
    layers=(("Application", 0), ("Spokes", 1), ("TGW", 2), ("Gateways", 3)),
    nodes=(
        ("Sausalito-spoke-us-east-2", "Application"),
        ("Petaluma-spoke-us-west-1", "Application"),
        ("spoke-us-east-2", "Spokes"),
        ("spoke-us-west-1", "Spokes"),
        ("tgw-us-east-2", "TGW"),
        ("tgw-us-west-1", "TGW"),
        ("VistaDev-aws-us-west-2", "Gateways"),
        ("VistaDev-aws-us-east-1", "Gateways"),
    ),
    layer_metrics={
        "Application": (
            _MetricSpec("applications_time_to_first_data_packet_avg", "ms", 120.0, 25.0),
            _MetricSpec("applications_ack_round_trip_forward_avg", "ms", 35.0, 8.0),
            _MetricSpec("application_bandwidth_mbps", "mbps", 240.0, 50.0),
            _MetricSpec("tcp_retransmission_rate", "ratio", 0.02, 0.015),
        ),
        "Spokes": (
            _MetricSpec("spoke_throughput_mbps", "mbps", 410.0, 70.0),
            _MetricSpec("spoke_active_sessions", "count", 150.0, 25.0),
        ),
        "TGW": (
            _MetricSpec("packet_drop_rate", "ratio", 0.004, 0.012),
            _MetricSpec("attachment_throughput_mbps", "mbps", 880.0, 110.0),
        ),
        "Gateways": (
            _MetricSpec("total_cpu_utilization", "percent", 38.0, 30.0),
            _MetricSpec("packet_loss_rate", "ratio", 0.003, 0.01),
            _MetricSpec("gateway_session_count", "count", 820.0, 90.0),
        ),
    },
    edges=(
        ("Sausalito-spoke-us-east-2", "spoke-us-east-2"),
        ("Petaluma-spoke-us-west-1", "spoke-us-west-1"),
        ("spoke-us-east-2", "tgw-us-east-2"),
        ("spoke-us-west-1", "tgw-us-west-1"),
        ("tgw-us-east-2", "tgw-us-west-1"),
        ("tgw-us-east-2", "VistaDev-aws-us-west-2"),
        ("tgw-us-west-1", "VistaDev-aws-us-east-1"),
        ("VistaDev-aws-us-west-2", "VistaDev-aws-us-east-1"),
    ),
)

_AIML = _Blueprint(
    topology_id="aiml-datacenter",
    layers=(
        ("Application", 0),
        ("GPU", 1),
        ("NICs", 2),
        ("Compute", 3),
        ("NetworkDevices", 4),
    ),
    nodes=(
        ("AIApps-train-0", "Application"),
        ("AIApps-infer-1", "Application"),
        ("gpu-node-0", "GPU"),
        ("gpu-node-1", "GPU"),
        ("nic-0", "NICs"),
        ("nic-1", "NICs"),
        ("compute-0", "Compute"),
        ("compute-1", "Compute"),
        ("switch-leaf-0", "NetworkDevices"),
        ("switch-spine-1", "NetworkDevices"),
    ),
    layer_metrics={
        "Application": (
            _MetricSpec("premature_iteration_completions", "count", 2.0, 8.0),
            _MetricSpec("training_step_time_avg", "s", 1.8, 0.6),
        ),
        "GPU": (
            _MetricSpec("gpu_utilization", "percent", 55.0, 60.0),
            _MetricSpec("gpu_memory_used_pct", "percent", 58.0, 20.0),
        ),
        "NICs": (
            _MetricSpec("ack_timeout_errors", "count", 1.5, 10.0),
            _MetricSpec("cnp_packets_sent", "count", 6.0, 16.0),
        ),
        "Compute": (
            _MetricSpec("compute_cpu_utilization", "percent", 47.0, 24.0),
            _MetricSpec("memory_utilization", "percent", 61.0, 16.0),
        ),
        "NetworkDevices": (
            _MetricSpec("switch_buffer_occupancy", "percent", 32.0, 28.0),
            _MetricSpec("switch_congestion_drops", "count", 1.2, 8.0),
        ),
    },
    edges=(
        ("AIApps-train-0", "gpu-node-0"),
        ("AIApps-infer-1", "gpu-node-1"),
        ("gpu-node-0", "compute-0"),
        ("gpu-node-1", "compute-1"),
        ("compute-0", "nic-0"),
        ("compute-1", "nic-1"),
        ("nic-0", "switch-leaf-0"),
        ("nic-1", "switch-spine-1"),
        ("switch-leaf-0", "switch-spine-1"),
    ),
)

_BLUEPRINTS = {"vista": _VISTA, "aiml": _AIML}


def _ref(layer: str, node_id: str, metric: str) -> SeriesRef:
    return SeriesRef(layer=layer, node_id=node_id, metric=metric)


_APP_TTFDP = _ref("Application", "Sausalito-spoke-us-east-2", "applications_time_to_first_data_packet_avg")
_APP_ACK_RTT = _ref("Application", "Sausalito-spoke-us-east-2", "applications_ack_round_trip_forward_avg")
_APP_BW_EAST = _ref("Application", "Sausalito-spoke-us-east-2", "application_bandwidth_mbps")
_APP_BW_WEST = _ref("Application", "Petaluma-spoke-us-west-1", "application_bandwidth_mbps")
_APP_RETX_EAST = _ref("Application", "Sausalito-spoke-us-east-2", "tcp_retransmission_rate")
_APP_RETX_WEST = _ref("Application", "Petaluma-spoke-us-west-1", "tcp_retransmission_rate")
_TGW_DROPS = _ref("TGW", "tgw-us-east-2", "packet_drop_rate")
_GW_CPU = _ref("Gateways", "VistaDev-aws-us-west-2", "total_cpu_utilization")
_GW_LOSS = _ref("Gateways", "VistaDev-aws-us-west-2", "packet_loss_rate")
_GPU_UTIL_0 = _ref("GPU", "gpu-node-0", "gpu_utilization")
_GPU_UTIL_1 = _ref("GPU", "gpu-node-1", "gpu_utilization")
_APP_PREMATURE = _ref("Application", "AIApps-train-0", "premature_iteration_completions")
_APP_STEP_TIME = _ref("Application", "AIApps-train-0", "training_step_time_avg")
_NIC_ACK = _ref("NICs", "nic-0", "ack_timeout_errors")
_NIC_CNP = _ref("NICs", "nic-0", "cnp_packets_sent")
_SWITCH_DROPS = _ref("NetworkDevices", "switch-leaf-0", "switch_congestion_drops")


_SCENARIOS: tuple[ScenarioSpec, ...] = (
    ScenarioSpec(
        name="high-app-bandwidth",
        label="High App Bandwidth",
        topology="vista",
        fault_target=_APP_BW_EAST,
        coupling=(
            Coupling(_APP_BW_EAST, _APP_BW_WEST, lag=1, gain=0.9),
            Coupling(_APP_BW_EAST, _APP_TTFDP, lag=1, gain=0.85),
        ),
        flagged=(_APP_BW_EAST, _APP_BW_WEST, _APP_TTFDP),
    ),
    ScenarioSpec(
        name="high-app-latency",
        label="High App Latency",
        topology="vista",
        fault_target=_APP_TTFDP,
        coupling=(),
        flagged=(_APP_TTFDP,),
    ),
    ScenarioSpec(
        name="gpu-overutilization",
        label="High GPU Utilization",
        topology="aiml",
        fault_target=_GPU_UTIL_0,
        coupling=(
            Coupling(_GPU_UTIL_0, _GPU_UTIL_1, lag=1, gain=0.9),
            Coupling(_GPU_UTIL_0, _APP_PREMATURE, lag=1, gain=0.9),
        ),
        flagged=(_GPU_UTIL_0, _GPU_UTIL_1, _APP_PREMATURE),
    ),
    ScenarioSpec(
        name="nic-ack-timeout",
        label="Nic ACK Timeout Error",
        topology="aiml",
        fault_target=_NIC_ACK,
        coupling=(
            Coupling(_NIC_ACK, _APP_STEP_TIME, lag=1, gain=0.9),
            Coupling(_NIC_ACK, _APP_PREMATURE, lag=2, gain=0.8),
        ),
        flagged=(_NIC_ACK, _APP_STEP_TIME, _APP_PREMATURE),
    ),
    ScenarioSpec(
        name="tgw-blackhole",
        label="TGW Blackhole",
        topology="vista",
        fault_target=_TGW_DROPS,
        coupling=(
            Coupling(_TGW_DROPS, _APP_RETX_EAST, lag=1, gain=0.9),
            Coupling(_TGW_DROPS, _APP_RETX_WEST, lag=2, gain=0.85),
        ),
        flagged=(_TGW_DROPS, _APP_RETX_EAST, _APP_RETX_WEST),
    ),
    ScenarioSpec(
        name="gateway-packet-loss",
        label="Gateway Packet Loss",
        topology="vista",
        fault_target=_GW_LOSS,
        coupling=(Coupling(_GW_LOSS, _APP_TTFDP, lag=1, gain=0.9),),
        flagged=(_GW_LOSS, _APP_TTFDP),
    ),
    ScenarioSpec(
        name="gateway-resource-contention",
        label="Gateway Resource Contention",
        topology="vista",
        fault_target=_GW_CPU,
        coupling=(
            Coupling(_GW_CPU, _APP_TTFDP, lag=1, gain=0.9),
            Coupling(_GW_CPU, _APP_ACK_RTT, lag=1, gain=0.9),
        ),
        flagged=(_GW_CPU, _APP_TTFDP, _APP_ACK_RTT),
    ),
    ScenarioSpec(
        name="switch-congestion",
        label="Switch Congestion",
        topology="aiml",
        fault_target=_SWITCH_DROPS,
        coupling=(
            Coupling(_SWITCH_DROPS, _NIC_CNP, lag=1, gain=0.9),
            Coupling(_NIC_CNP, _APP_PREMATURE, lag=1, gain=0.9),
            Coupling(_SWITCH_DROPS, _GPU_UTIL_0, lag=1, gain=0.8),
        ),
        flagged=(_SWITCH_DROPS, _NIC_CNP, _APP_PREMATURE, _GPU_UTIL_0),
    ),
)

_GOLD_TEXTS: dict[str, tuple[str, tuple[str, ...]]] = {
    "high-app-bandwidth": (
        "A heavy burst of traffic between the application endpoints "
        "Sausalito-spoke-us-east-2 and Petaluma-spoke-us-west-1 drove "
        "application_bandwidth_mbps far above its normal range on both sides. "
        "The excessive data transfer saturates the path between the endpoints "
        "and inflates the time to first data packet on the sending endpoint.",
        (
            "Identify the process behind the bandwidth burst on "
            "Sausalito-spoke-us-east-2 and throttle or reschedule the transfer.",
            "Apply rate limiting or QoS between the two application endpoints "
            "to protect latency-sensitive traffic.",
            "Confirm application_bandwidth_mbps and "
            "applications_time_to_first_data_packet_avg return to baseline.",
        ),
    ),
    "high-app-latency": (
        "A single application node, Sausalito-spoke-us-east-2, reports "
        "anomalously high applications_time_to_first_data_packet_avg while "
        "every other layer stays healthy. The delay is isolated to that node "
        "rather than the network path, pointing at a local application-level "
        "slowdown.",
        (
            "Inspect the application service on Sausalito-spoke-us-east-2 for "
            "slow request handling, connection pool exhaustion, or a recent deploy.",
            "Check Spokes, TGW, and Gateways metrics to confirm the network "
            "path is not contributing latency.",
            "Restart or scale the affected endpoint and verify the time to "
            "first data packet recovers.",
        ),
    ),
    "gpu-overutilization": (
        "GPU utilization is pinned near saturation across the GPU layer "
        "nodes, starving the training workload of compute headroom. The "
        "AIApps-train-0 application reacts by completing iterations "
        "prematurely, which risks inaccurate or incomplete data processing.",
        (
            "Rebalance or pause lower-priority jobs scheduled on gpu-node-0 "
            "and gpu-node-1 to restore GPU headroom.",
            "Cap per-job GPU utilization or enable MIG partitioning so one "
            "workload cannot saturate the layer.",
            "Re-run the affected training iterations on AIApps-train-0 and "
            "verify premature_iteration_completions subsides.",
        ),
    ),
    "nic-ack-timeout": (
        "Packet acknowledgment timeout errors on nic-0 are delaying worker "
        "communication in the NICs layer. AIApps-train-0 shows stretched "
        "training steps and premature iteration completions as transfers "
        "stall and retry against the timed-out acknowledgments.",
        (
            "Inspect nic-0 for driver faults, firmware regressions, or "
            "negotiated link errors and reseat or replace the NIC if needed.",
            "Verify RoCE/ACK timeout settings and congestion control "
            "configuration on the affected NIC.",
            "Confirm ack_timeout_errors returns to baseline and training step "
            "time normalizes on AIApps-train-0.",
        ),
    ),
    "tgw-blackhole": (
        "A blackholed route on transit gateway tgw-us-east-2 is silently "
        "dropping traffic between the application endpoints. The packet loss "
        "triggers repeated TCP retransmissions on both "
        "Sausalito-spoke-us-east-2 and Petaluma-spoke-us-west-1, degrading "
        "end-to-end throughput.",
        (
            "Inspect the tgw-us-east-2 route tables for blackhole entries and "
            "remove or repair the faulty route.",
            "Fail traffic over to tgw-us-west-1 while the route is repaired.",
            "Verify tcp_retransmission_rate on both application endpoints "
            "drops back to baseline after the route change.",
        ),
    ),
    "gateway-packet-loss": (
        "Packet loss at the Gateways layer node VistaDev-aws-us-west-2 is "
        "forcing retransmissions and delaying connection setup, which extends "
        "the time to first data packet observed at the application layer.",
        (
            "Inspect interface error counters and queue drops on "
            "VistaDev-aws-us-west-2 to localize the loss.",
            "Shift sessions to VistaDev-aws-us-east-1 or replace the faulty "
            "link hardware.",
            "Verify packet_loss_rate and the application time to first data "
            "packet recover after remediation.",
        ),
    ),
    "gateway-resource-contention": (
        "The root cause of the high latency is likely due to the high CPU "
        "utilization on the Gateway node VistaDev-aws-us-west-2. The high CPU "
        "utilization can cause delays in processing packets, leading to "
        "increased acknowledgment round trip times and overall latency.",
        (
            "Reduce the CPU load on the Gateways node VistaDev-aws-us-west-2 "
            "as the high CPU utilization on this node is likely causing "
            "delays in packet processing, leading to increased latency.",
            "Implement load balancing across the Gateways nodes to distribute "
            "the processing load more evenly.",
        ),
    ),
    "switch-congestion": (
        "Fabric congestion at switch-leaf-0 is dropping and marking traffic, "
        "driving congestion notification packets from nic-0 while the GPUs "
        "run at full utilization. The constrained fabric limits application "
        "processing capacity, so AIApps-train-0 completes iterations "
        "prematurely.",
        (
            "Inspect switch-leaf-0 buffer occupancy and ECN/PFC thresholds; "
            "spread traffic across the spine to relieve the congested port.",
            "Throttle or reschedule bulk transfers saturating the fabric "
            "during training windows.",
            "Confirm cnp_packets_sent on nic-0 and "
            "premature_iteration_completions on AIApps-train-0 return to "
            "baseline.",
        ),
    ),
}


def list_scenarios() -> list[ScenarioSpec]:
    """The eight built-in fault scenarios (five vista, three aiml)."""
    return list(_SCENARIOS)


def scenario_names() -> list[str]:
    return [spec.name for spec in _SCENARIOS]


def get_scenario(name: str) -> ScenarioSpec:
    for spec in _SCENARIOS:
        if spec.name == name:
            return spec
    raise ScenarioError(
        f"unknown scenario {name!r}; valid names: {', '.join(scenario_names())}"
    )


def _idle_noise(rng: np.random.Generator, length: int, sigma: float) -> np.ndarray:
    return np.clip(
        rng.normal(0.0, sigma, length), -IDLE_CLIP_SIGMAS * sigma, IDLE_CLIP_SIGMAS * sigma
    )


def _shift(series: np.ndarray, lag: int) -> np.ndarray:
    shifted = np.zeros_like(series)
    shifted[lag:] = series[:-lag]
    return shifted


def _build_snapshot(
    blueprint: _Blueprint,
    devs: dict[SeriesRef, np.ndarray],
    flags: set[SeriesRef],
    timestamp: datetime,
    interval_seconds: float,
) -> TopologySnapshot:
    nodes = []
    for node_id, layer in blueprint.nodes:
        metrics = {}
        for m in blueprint.layer_metrics[layer]:
            ref = SeriesRef(layer=layer, node_id=node_id, metric=m.name)
            values = m.baseline + m.scale * devs[ref]
            metrics[m.name] = MetricSeries(
                name=m.name,
                unit=m.unit,
                interval_seconds=interval_seconds,
                values=tuple(float(v) for v in values),
                anomalous=True if ref in flags else None,
            )
        nodes.append(NetNode(id=node_id, layer=layer, metrics=metrics))
    return TopologySnapshot(
        topology_id=blueprint.topology_id,
        timestamp=timestamp,
        layers=tuple(Layer(name=name, rank=rank) for name, rank in blueprint.layers),
        nodes=tuple(nodes),
        edges=blueprint.edges,
    )


def _make_idle_topology(
    blueprint: _Blueprint, seed: int, series_length: int, noise_sigma: float
) -> TopologySnapshot:
    rng = np.random.default_rng(seed)
    devs = {ref: _idle_noise(rng, series_length, noise_sigma) for ref in blueprint.refs()}
    return _build_snapshot(
        blueprint, devs, set(), _BASE_TIMESTAMP, DEFAULT_INTERVAL_SECONDS
    )


def make_vista_topology(seed: int, series_length: int = 200,
                        noise_sigma: float = 0.05) -> TopologySnapshot:
    """Hybrid/multi-cloud skeleton: Application, Spokes, TGW, Gateways."""
    return _make_idle_topology(_VISTA, seed, series_length, noise_sigma)


def make_aiml_topology(seed: int, series_length: int = 200,
                       noise_sigma: float = 0.05) -> TopologySnapshot:
    """Datacenter AI/ML skeleton: Application, GPU, NICs, Compute, NetworkDevices."""
    return _make_idle_topology(_AIML, seed, series_length, noise_sigma)


def _validate_spec(spec: ScenarioSpec, blueprint: _Blueprint):
    refs = set(blueprint.refs())
    if spec.fault_target not in refs:
        raise ScenarioError(f"fault target {spec.fault_target} not in {spec.topology} topology")
    if spec.series_length < 40:
        raise ScenarioError("series_length must be >= 40 for stable lagged analysis")
    if spec.noise_sigma <= 0:
        raise ScenarioError("noise_sigma must be positive")
    produced = {spec.fault_target}
    for c in spec.coupling:
        if c.source not in refs or c.dest not in refs:
            raise ScenarioError(f"coupling references unknown series: {c}")
        if c.lag < 1 or c.lag > 3:
            raise ScenarioError(f"coupling lag must be in 1..3, got {c.lag}")
        if c.source not in produced:
            raise ScenarioError(
                f"coupling source {c.source} is not reachable from the fault target"
            )
        if c.dest in produced:
            raise ScenarioError(f"coupling dest {c.dest} assigned twice (cycle?)")
        produced.add(c.dest)
    for ref in spec.flagged:
        if ref not in refs:
            raise ScenarioError(f"flagged series {ref} not in topology")


def generate_scenario(spec: ScenarioSpec) -> ScenarioOutput:
    """Synthesize one scenario snapshot plus its ground truth.

    Deterministic: identical (spec, seed) produce byte-identical output.
    """
    if spec.name not in _GOLD_TEXTS:
        raise ScenarioError(
            f"invalid scenario name {spec.name!r}; valid names: {', '.join(scenario_names())}"
        )
    blueprint = _BLUEPRINTS.get(spec.topology)
    if blueprint is None:
        raise ScenarioError(f"unknown topology {spec.topology!r} (expected vista or aiml)")
    _validate_spec(spec, blueprint)

    length = spec.series_length
    sigma = spec.noise_sigma
    rng = np.random.default_rng(spec.seed)
    devs = {ref: _idle_noise(rng, length, sigma) for ref in blueprint.refs()}

    step = np.zeros(length)
    step[length - length // 2 :] = FAULT_STEP_SIGMAS * sigma
    devs[spec.fault_target] = devs[spec.fault_target] + step

    for c in spec.coupling:
        devs[c.dest] = c.gain * _shift(devs[c.source], c.lag) + rng.normal(0.0, sigma, length)

    flags = set(spec.flagged) if spec.flagged else {spec.fault_target} | {
        c.dest for c in spec.coupling if c.dest.layer == blueprint.layers[0][0]
    }
    flags.add(spec.fault_target)
    app_layer = blueprint.layers[0][0]
    if not any(ref.layer == app_layer for ref in flags):
        raise ScenarioError("at least one application-layer series must be flagged")

    index = scenario_names().index(spec.name)
    timestamp = _BASE_TIMESTAMP + timedelta(hours=index)
    snapshot = _build_snapshot(blueprint, devs, flags, timestamp, DEFAULT_INTERVAL_SECONDS)

    diagnosis, steps = _GOLD_TEXTS[spec.name]
    truth = GroundTruth(
        scenario_name=spec.name,
        fault_layer=spec.fault_target.layer,
        fault_node=spec.fault_target.node_id,
        fault_metric=spec.fault_target.metric,
        gold_diagnosis=diagnosis,
        gold_action_steps=steps,
    )
    return ScenarioOutput(snapshot=snapshot, truth=truth)


def generate_all(seed: int = 0) -> list[ScenarioOutput]:
    """All eight scenarios generated with the given seed."""
    return [generate_scenario(replace(spec, seed=seed)) for spec in list_scenarios()]
