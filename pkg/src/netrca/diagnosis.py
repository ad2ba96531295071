"""Prompt assembly, ensemble inference, and structured diagnosis parsing.

The prompt is a fixed-order bundle: role instruction, operator domain
knowledge, topology summary, application symptoms, ranked health report,
retrieved exemplars, a stepwise-reasoning instruction, and the output-format
contract. Assembly is pure, so identical inputs render byte-identical
prompts and recorded sessions replay exactly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

import numpy as np

from .llm import (
    SUMMARY_PROMPT_MARKER,
    TOP_CAUSE_MARKER,
    BackendError,
    GenerationParams,
    LlmBackend,
)
from .statrca import HealthReport
from .topology import TopologySnapshot


class DiagnosisError(Exception):
    """Raised for prompt-construction contract violations."""


ROLE_INSTRUCTION = (
    "You are an experienced on-call network operations engineer. Given a "
    "topology snapshot, application symptoms, and a statistical health "
    "report, identify the most likely root cause of the observed issues and "
    "prescribe concrete remediation steps."
)

CHAIN_OF_THOUGHT_INSTRUCTION = (
    "Think step by step before answering: enumerate each observed symptom, "
    "form and explore alternative hypotheses for its cause across the "
    "topology layers, weigh each hypothesis against the health report and "
    "node connectivity, and only then commit to a conclusion."
)

OUTPUT_FORMAT_INSTRUCTION = (
    "Answer with exactly these labeled sections:\n"
    "Symptom: <one line per observed symptom>\n"
    "Root Cause Hypothesis: <two to three sentences naming the layer, node, "
    "and metric you believe caused each symptom>\n"
    "Action Steps on <Layer> Layer Node <node>: <numbered remediation steps; "
    "repeat the block for every affected node>\n"
    "Reasoning: <summary of your reasoning chain>"
)

AGGREGATOR_INSTRUCTION = (
    "You are given several independent draft diagnoses of the same network "
    "incident. Synthesize them into a single consensus answer: keep the "
    "hypotheses the drafts agree on, discard outliers, and merge the action "
    "steps without duplication."
)


@dataclass(frozen=True)
class EnsembleConfig:
    """Mixture-of-drafts settings: M independent drafts plus one aggregator."""

    num_agents: int = 3
    aggregate: bool = True
    draft_temperature: float = 0.7
    aggregator_temperature: float = 0.0

    def __post_init__(self):
        if self.num_agents < 1:
            raise ValueError("num_agents must be >= 1")


@dataclass(frozen=True)
class Exemplar:
    """One retrieved past incident used for in-context guidance."""

    diagnostic_text: str
    gold_diagnosis: str
    gold_action_steps: tuple[str, ...]


@dataclass(frozen=True)
class PromptBundle:
    """Ordered prompt sections; exemplars are empty in zero-shot mode."""

    role_instruction: str
    domain_knowledge: str
    topology_summary: str
    symptom_description: str
    health_report_rendering: str
    exemplars: tuple[str, ...]
    chain_of_thought_instruction: str
    output_format_instruction: str

    def sections(self) -> list[tuple[str, str]]:
        exemplar_text = "\n\n".join(self.exemplars)
        return [
            ("role", self.role_instruction),
            ("domain_knowledge", self.domain_knowledge),
            ("topology_summary", self.topology_summary),
            ("symptoms", self.symptom_description),
            ("health_report", self.health_report_rendering),
            ("exemplars", exemplar_text),
            ("chain_of_thought", self.chain_of_thought_instruction),
            ("output_format", self.output_format_instruction),
        ]

    def render(self) -> str:
        titles = {
            "role": "Role",
            "domain_knowledge": "Operator Domain Knowledge",
            "topology_summary": "Topology Summary",
            "symptoms": "Application Symptoms",
            "health_report": "System Data Health Report",
            "exemplars": "Past Incident Exemplars",
            "chain_of_thought": "Approach",
            "output_format": "Output Format",
        }
        blocks = [
            f"## {titles[name]}\n{text}" for name, text in self.sections() if text.strip()
        ]
        return "\n\n".join(blocks) + "\n"


def summarize_topology(s: TopologySnapshot) -> str:
    """Deterministic compact rendering of the layered graph."""
    lines = [
        f"Topology {s.topology_id} captured {s.timestamp.isoformat().replace('+00:00', 'Z')}: "
        f"{len(s.layers)} layers, {len(s.nodes)} nodes, {len(s.edges)} links."
    ]
    for layer in sorted(s.layers, key=lambda l: l.rank):
        nodes = s.nodes_in_layer(layer.name)
        metric_names = sorted({name for n in nodes for name in n.metrics})
        lines.append(
            f"- {layer.name} (rank {layer.rank}): nodes "
            + ", ".join(n.id for n in nodes)
            + "; metrics: "
            + ", ".join(metric_names)
        )
    lines.append("Links: " + "; ".join(f"{a} -> {b}" for a, b in s.edges))
    return "\n".join(lines)


def summarize_symptoms(s: TopologySnapshot, backend: LlmBackend,
                       params: GenerationParams | None = None) -> str:
    """One intermediate model call describing rank-0 (application) metrics.

    The prompt names every flagged anomalous application metric explicitly.
    Backend failures propagate as BackendError.
    """
    params = params or GenerationParams()
    try:
        app_layer = s.layer_by_rank(0)
    except KeyError:
        raise DiagnosisError("snapshot has no application layer (rank 0)") from None
    app_nodes = s.nodes_in_layer(app_layer.name)
    if not app_nodes:
        raise DiagnosisError(f"no nodes in application layer {app_layer.name!r}")

    anomalous = []
    stat_lines = []
    for node in app_nodes:
        for name in sorted(node.metrics):
            series = node.metrics[name]
            values = np.asarray(series.values)
            stat_lines.append(
                f"- {node.id}.{name} [{series.unit}]: mean={values.mean():.4f} "
                f"min={values.min():.4f} max={values.max():.4f} last={values[-1]:.4f}"
            )
            if series.anomalous:
                anomalous.append(f"{node.id}.{name}")
    marker = ", ".join(anomalous) if anomalous else "none"
    prompt = (
        f"Summarize the health of the {app_layer.name} layer of topology "
        f"{s.topology_id} in two or three sentences for an on-call engineer. "
        "Highlight anomalies and describe what the affected metrics mean for "
        "application behavior.\n"
        f"{SUMMARY_PROMPT_MARKER} {marker}\n"
        "Metric statistics:\n" + "\n".join(stat_lines)
    )
    text = backend.generate(prompt, params)
    if not text.strip():
        raise BackendError("backend returned an empty symptom summary")
    return text


def render_health_report(report: HealthReport) -> str:
    """Fixed-width table of the top-K ranked causes; rank 1 is marked."""
    if not report.ranked_causes:
        return f"No ranked root-cause candidates ({report.status})."
    rows = [("Rank", "Layer", "Node", "Metric", "Score")]
    for cause in report.ranked_causes[: report.k]:
        rows.append(
            (
                str(cause.rank),
                cause.ref.layer,
                cause.ref.node_id,
                cause.ref.metric,
                f"{cause.score:.6f}",
            )
        )
    widths = [max(len(row[col]) for row in rows) for col in range(5)]
    lines = []
    for i, row in enumerate(rows):
        line = "  ".join(cell.ljust(widths[col]) for col, cell in enumerate(row)).rstrip()
        if i == 1:
            line = f"{line}  {TOP_CAUSE_MARKER}"
        lines.append(line)
    return "\n".join(lines)


def render_exemplar(index: int, exemplar: Exemplar) -> str:
    steps = "\n".join(f"{i}. {step}" for i, step in enumerate(exemplar.gold_action_steps, 1))
    return (
        f"### Exemplar {index}\n"
        f"Diagnostic information:\n{exemplar.diagnostic_text}\n"
        f"Diagnosis:\n{exemplar.gold_diagnosis}\n"
        f"Action steps:\n{steps}"
    )


def build_prompt(
    snapshot: TopologySnapshot,
    summary: str,
    report: HealthReport,
    exemplars: list[Exemplar] | None = None,
    domain_knowledge: str = "",
    mode: str = "zero_shot",
) -> PromptBundle:
    """Assemble the fixed-order prompt bundle for one incident."""
    if mode not in ("few_shot", "zero_shot"):
        raise DiagnosisError(f"unknown mode {mode!r}")
    exemplars = exemplars or []
    if mode == "few_shot" and not exemplars:
        raise DiagnosisError("few_shot mode requires at least one exemplar")
    rendered_exemplars = (
        tuple(render_exemplar(i, e) for i, e in enumerate(exemplars, 1))
        if mode == "few_shot"
        else ()
    )
    return PromptBundle(
        role_instruction=ROLE_INSTRUCTION,
        domain_knowledge=domain_knowledge,
        topology_summary=summarize_topology(snapshot),
        symptom_description=summary,
        health_report_rendering=render_health_report(report),
        exemplars=rendered_exemplars,
        chain_of_thought_instruction=CHAIN_OF_THOUGHT_INSTRUCTION,
        output_format_instruction=OUTPUT_FORMAT_INSTRUCTION,
    )


@dataclass(frozen=True)
class ActionPlan:
    layer: str
    node: str
    steps: tuple[str, ...]


@dataclass(frozen=True)
class DiagnosisReport:
    """Structured model answer; the raw text is always preserved verbatim."""

    symptom: str
    hypotheses: tuple[tuple[str, str], ...]
    action_steps: tuple[ActionPlan, ...]
    reasoning_chain: str
    raw_model_output: str
    parse_failed: bool = False

    def to_dict(self) -> dict:
        return {
            "symptom": self.symptom,
            "hypotheses": [
                {"symptom": symptom, "hypothesis": hypothesis}
                for symptom, hypothesis in self.hypotheses
            ],
            "action_steps": [
                {"layer": plan.layer, "node": plan.node, "steps": list(plan.steps)}
                for plan in self.action_steps
            ],
            "reasoning_chain": self.reasoning_chain,
            "raw_model_output": self.raw_model_output,
            "parse_failed": self.parse_failed,
        }


_HEADER_RE = re.compile(
    r"^\s*(?:#{1,6}\s*)?(?:\*\*)?\s*"
    r"(?P<label>symptom|root\s+cause\s+hypothesis|hypothesis|action\s+steps[^:]*|reasoning)"
    r"\s*(?:\*\*)?\s*:\s*(?:\*\*)?\s*(?P<rest>.*)$",
    re.IGNORECASE,
)
_ACTION_TARGET_RE = re.compile(
    r"action\s+steps\s+on\s+(?P<layer>.+?)\s+layer\s+node\s+(?P<node>.+)", re.IGNORECASE
)
_STEP_PREFIX_RE = re.compile(r"^\s*(?:\d+[.)]\s*|[-*]\s*)")


def parse_report(text: str) -> DiagnosisReport:
    """Extract labeled sections from model output by header matching.

    Tolerates markdown decoration and numbering variance. Unparseable input
    never raises: it yields a report with empty fields, the raw text, and
    ``parse_failed`` set.
    """
    symptoms: list[str] = []
    hypotheses: list[tuple[str, str]] = []
    plans: list[ActionPlan] = []
    reasoning: list[str] = []

    section: str | None = None
    buffer: list[str] = []
    target: tuple[str, str] = ("", "")

    def flush():
        nonlocal buffer
        content = " ".join(part for part in (piece.strip() for piece in buffer) if part).strip()
        if section == "symptom":
            symptoms.append(content)
        elif section == "hypothesis":
            ref = symptoms[-1] if symptoms else ""
            if content:
                hypotheses.append((ref, content))
        elif section == "actions":
            steps = tuple(
                _STEP_PREFIX_RE.sub("", line).strip()
                for line in buffer
                if line.strip()
            )
            if steps:
                plans.append(ActionPlan(layer=target[0], node=target[1], steps=steps))
        elif section == "reasoning":
            if content:
                reasoning.append(content)
        buffer = []

    for line in text.splitlines():
        match = _HEADER_RE.match(line)
        if match:
            flush()
            label = re.sub(r"\s+", " ", match.group("label").strip().lower())
            rest = match.group("rest").strip()
            if label == "symptom":
                section = "symptom"
            elif label in ("root cause hypothesis", "hypothesis"):
                section = "hypothesis"
            elif label.startswith("action steps"):
                section = "actions"
                target_match = _ACTION_TARGET_RE.match(match.group("label").strip())
                if target_match:
                    target = (
                        target_match.group("layer").strip().strip("*"),
                        target_match.group("node").strip().strip("*"),
                    )
                else:
                    target = ("", "")
            else:
                section = "reasoning"
            if rest:
                buffer.append(rest)
        elif section is not None:
            buffer.append(line)
    flush()

    report = DiagnosisReport(
        symptom=symptoms[0] if symptoms else "",
        hypotheses=tuple(hypotheses),
        action_steps=tuple(plans),
        reasoning_chain=" ".join(reasoning),
        raw_model_output=text,
        parse_failed=not hypotheses,
    )
    return report


def render_report(report: DiagnosisReport) -> str:
    """Canonical labeled-section rendering; parse_report inverts it."""
    lines: list[str] = []
    for symptom, hypothesis in report.hypotheses:
        lines.append(f"Symptom: {symptom}")
        lines.append(f"Root Cause Hypothesis: {hypothesis}")
    for plan in report.action_steps:
        lines.append(f"Action Steps on {plan.layer} Layer Node {plan.node}:")
        lines.extend(f"{i}. {step}" for i, step in enumerate(plan.steps, 1))
    if report.reasoning_chain:
        lines.append(f"Reasoning: {report.reasoning_chain}")
    return "\n".join(lines)


def check_report_layers(report: DiagnosisReport, snapshot: TopologySnapshot) -> list[str]:
    """Warnings for action plans that name layers absent from the snapshot."""
    known = {layer.name.lower() for layer in snapshot.layers}
    return [
        f"action plan references unknown layer {plan.layer!r}"
        for plan in report.action_steps
        if plan.layer and plan.layer.lower() not in known
    ]


def build_aggregator_prompt(drafts: list[str]) -> str:
    blocks = [AGGREGATOR_INSTRUCTION, ""]
    for i, draft in enumerate(drafts, 1):
        blocks.append(f"--- Draft {i} ---")
        blocks.append(draft)
        blocks.append("")
    blocks.append(OUTPUT_FORMAT_INSTRUCTION)
    return "\n".join(blocks)


def diagnose(
    bundle: PromptBundle,
    backend: LlmBackend,
    ens: EnsembleConfig | None = None,
    params: GenerationParams | None = None,
) -> DiagnosisReport:
    """Run M independent drafts over the bundle, then one consensus call.

    A failed draft is dropped while at least one survives; if every draft
    fails the backend errors are aggregated and raised. An aggregator
    failure falls back to the first surviving draft.
    """
    ens = ens or EnsembleConfig()
    params = params or GenerationParams()
    rendered = bundle.render()

    draft_params = replace(params, temperature=ens.draft_temperature)
    drafts: list[str] = []
    failures: list[str] = []
    for _ in range(ens.num_agents):
        try:
            drafts.append(backend.generate(rendered, draft_params))
        except BackendError as exc:
            failures.append(str(exc))
    if not drafts:
        raise BackendError(
            f"all {ens.num_agents} draft generations failed: " + "; ".join(failures)
        )

    if ens.aggregate and len(drafts) > 1:
        aggregator_params = replace(params, temperature=ens.aggregator_temperature)
        try:
            final = backend.generate(build_aggregator_prompt(drafts), aggregator_params)
        except BackendError:
            final = drafts[0]
    else:
        final = drafts[0]
    return parse_report(final)
