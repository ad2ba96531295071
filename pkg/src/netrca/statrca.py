"""Statistical root-cause ranking over a topology snapshot.

Pipeline: pick out anomalous metric series, test every ordered pair with a
lagged-regression causality test, weight the surviving edges by absolute
Pearson correlation, then run weighted PageRank on the reversed graph so that
score flows from symptoms back to their causes. The top-K vertices form the
health report.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .topology import TopologySnapshot

logger = logging.getLogger(__name__)

_TIE_EPS = 1e-12


class StatError(Exception):
    """Raised for degenerate inputs or violated analysis preconditions."""


@dataclass(frozen=True)
class StatConfig:
    """Tunables for the statistical pipeline."""

    max_lag: int = 3
    significance: float = 0.05
    anomaly_z_threshold: float = 3.0
    damping: float = 0.85
    pagerank_epsilon: float = 1e-9
    pagerank_max_iters: int = 200
    k: int = 5

    def __post_init__(self):
        if self.max_lag < 1:
            raise StatError("max_lag must be >= 1")
        if not 0.0 < self.significance < 1.0:
            raise StatError("significance must lie in (0, 1)")
        if self.anomaly_z_threshold <= 0:
            raise StatError("anomaly_z_threshold must be positive")
        if not 0.0 < self.damping < 1.0:
            raise StatError("damping must lie in (0, 1)")
        if self.pagerank_epsilon <= 0 or self.pagerank_max_iters < 1:
            raise StatError("pagerank convergence settings must be positive")
        if self.k < 1:
            raise StatError("k must be >= 1")


@dataclass(frozen=True, order=True)
class SeriesRef:
    """Identifies one metric series: (layer, node, metric)."""

    layer: str
    node_id: str
    metric: str


@dataclass(frozen=True)
class CausalEdge:
    cause: SeriesRef
    effect: SeriesRef
    p_value: float
    weight: float


@dataclass(frozen=True)
class CausalGraph:
    vertices: frozenset[SeriesRef]
    edges: tuple[CausalEdge, ...]


@dataclass(frozen=True)
class RankedCause:
    rank: int
    ref: SeriesRef
    score: float


@dataclass(frozen=True)
class HealthReport:
    """Ranked root-cause candidates; equal scores share a rank (competition ranking)."""

    ranked_causes: tuple[RankedCause, ...]
    k: int
    status: str = "ok"

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "ranked_causes": [
                {
                    "rank": c.rank,
                    "layer": c.ref.layer,
                    "node": c.ref.node_id,
                    "metric": c.ref.metric,
                    "score": c.score,
                }
                for c in self.ranked_causes
            ],
            "status": self.status,
        }


def _series_array(s: TopologySnapshot, ref: SeriesRef) -> np.ndarray:
    return np.asarray(s.node(ref.node_id).metrics[ref.metric].values, dtype=float)


def _all_refs(s: TopologySnapshot) -> list[SeriesRef]:
    refs = []
    for node in s.nodes:
        for metric in node.metrics:
            refs.append(SeriesRef(layer=node.layer, node_id=node.id, metric=metric))
    return sorted(refs)


def extract_anomalies(s: TopologySnapshot, cfg: StatConfig | None = None) -> set[SeriesRef]:
    """Collect anomalous series: explicit flags win; unflagged series are
    z-score tested against their own full-window mean/stdev.

    Zero-variance unflagged series are excluded and logged as degenerate.
    """
    cfg = cfg or StatConfig()
    anomalies: set[SeriesRef] = set()
    for ref in _all_refs(s):
        series = s.node(ref.node_id).metrics[ref.metric]
        if series.anomalous is not None:
            if series.anomalous:
                anomalies.add(ref)
            continue
        values = np.asarray(series.values, dtype=float)
        std = float(values.std())
        if std == 0.0:
            logger.info("degenerate series (zero variance), skipped: %s", ref)
            continue
        z_max = float(np.abs((values - values.mean()) / std).max())
        if z_max > cfg.anomaly_z_threshold:
            anomalies.add(ref)
    return anomalies


def _log_beta(a: float, b: float) -> float:
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def _beta_cont_frac(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz scheme)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 1000):
        m2 = 2 * m
        numerator = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + numerator * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + numerator / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        numerator = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + numerator * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + numerator / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            return h
    raise StatError(f"incomplete beta continued fraction failed to converge (a={a}, b={b}, x={x})")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise StatError("beta parameters must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = a * math.log(x) + b * math.log1p(-x) - _log_beta(a, b)
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cont_frac(a, b, x) / a
    return 1.0 - front * _beta_cont_frac(b, a, 1.0 - x) / b


def f_survival(f_stat: float, df1: float, df2: float) -> float:
    """Upper-tail probability P(F > f) for the F(df1, df2) distribution."""
    if df1 <= 0 or df2 <= 0:
        raise StatError("F degrees of freedom must be positive")
    if f_stat <= 0.0:
        return 1.0
    if math.isinf(f_stat):
        return 0.0
    return regularized_incomplete_beta(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f_stat))


def _lag_matrix(series: np.ndarray, max_lag: int) -> np.ndarray:
    """Columns [x_{t-1}, ..., x_{t-L}] for t = L..T-1."""
    t = len(series)
    return np.column_stack([series[max_lag - lag : t - lag] for lag in range(1, max_lag + 1)])


@dataclass(frozen=True)
class GrangerResult:
    causes: bool
    p_value: float
    f_stat: float
    note: str = ""


def granger_test(
    x: np.ndarray | list[float],
    y: np.ndarray | list[float],
    max_lag: int = 3,
    significance: float = 0.05,
) -> GrangerResult:
    """Test whether y's past improves prediction of x beyond x's own past.

    Restricted model regresses x_t on an intercept plus x_{t-1..t-L};
    the unrestricted model adds y_{t-1..t-L}. The statistic is
    F = ((RSS_r - RSS_u) / L) / (RSS_u / (T - 2L - 1)) with a p-value from
    F(L, T - 2L - 1); ``causes`` is p <= significance.

    A singular design matrix yields (causes=False, p=1) with a note instead
    of an error; zero-variance inputs violate the precondition.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise StatError("granger_test requires two equal-length 1-d series")
    t = len(x)
    if t <= 3 * max_lag + 1:
        raise StatError(f"series too short for lag {max_lag}: need T > {3 * max_lag + 1}, got {t}")
    if float(x.std()) == 0.0 or float(y.std()) == 0.0:
        raise StatError("granger_test requires nonzero-variance series")

    target = x[max_lag:]
    n_obs = len(target)
    intercept = np.ones((n_obs, 1))
    restricted = np.hstack([intercept, _lag_matrix(x, max_lag)])
    unrestricted = np.hstack([restricted, _lag_matrix(y, max_lag)])

    rank_u = np.linalg.matrix_rank(unrestricted)
    if rank_u < unrestricted.shape[1]:
        return GrangerResult(causes=False, p_value=1.0, f_stat=0.0, note="singular design matrix")

    rss_r = _residual_sum_of_squares(restricted, target)
    rss_u = _residual_sum_of_squares(unrestricted, target)
    df2 = t - 2 * max_lag - 1
    if rss_u <= 0.0:
        # Perfect unrestricted fit: y's lags explain x exactly.
        return GrangerResult(causes=True, p_value=0.0, f_stat=math.inf, note="perfect fit")
    f_stat = max(0.0, ((rss_r - rss_u) / max_lag) / (rss_u / df2))
    p_value = f_survival(f_stat, max_lag, df2)
    return GrangerResult(causes=p_value <= significance, p_value=p_value, f_stat=f_stat)


def _residual_sum_of_squares(design: np.ndarray, target: np.ndarray) -> float:
    coef, _, _, _ = np.linalg.lstsq(design, target, rcond=None)
    residuals = target - design @ coef
    return float(residuals @ residuals)


def pearson(x: np.ndarray | list[float], y: np.ndarray | list[float]) -> float:
    """Product-moment correlation of two equal-length series."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise StatError("pearson requires two equal-length 1-d series")
    dx = x - x.mean()
    dy = y - y.mean()
    norm = math.sqrt(float(dx @ dx)) * math.sqrt(float(dy @ dy))
    if norm == 0.0:
        raise StatError("pearson is undefined for zero-variance series")
    return float(dx @ dy) / norm


def build_causal_graph(
    s: TopologySnapshot,
    anomalies: set[SeriesRef],
    cfg: StatConfig | None = None,
) -> CausalGraph:
    """Directed cause->effect graph over anomalous series.

    For every ordered pair (a, b) the edge a->b is added when a's past
    significantly improves prediction of b; its weight is |pearson(a, b)|.
    Both directions may coexist. Degenerate (zero-variance) series stay in
    the vertex set but are skipped for testing.
    """
    cfg = cfg or StatConfig()
    if not anomalies:
        raise StatError("build_causal_graph requires at least one anomalous series")
    if s.series_length <= 3 * cfg.max_lag + 1:
        raise StatError(
            f"series length {s.series_length} too short for max_lag {cfg.max_lag}"
        )
    ordered = sorted(anomalies)
    arrays = {ref: _series_array(s, ref) for ref in ordered}
    testable = []
    for ref in ordered:
        if float(arrays[ref].std()) == 0.0:
            logger.info("degenerate series skipped in causal graph: %s", ref)
        else:
            testable.append(ref)

    edges: list[CausalEdge] = []
    for cause in testable:
        for effect in testable:
            if cause == effect:
                continue
            result = granger_test(
                arrays[effect], arrays[cause], max_lag=cfg.max_lag, significance=cfg.significance
            )
            if result.causes:
                weight = abs(pearson(arrays[cause], arrays[effect]))
                edges.append(
                    CausalEdge(cause=cause, effect=effect, p_value=result.p_value, weight=weight)
                )
    return CausalGraph(vertices=frozenset(ordered), edges=tuple(edges))


def _pagerank_scores(g: CausalGraph, cfg: StatConfig) -> dict[SeriesRef, float]:
    """Weighted PageRank on the reversed graph (effect -> cause)."""
    vertices = sorted(g.vertices)
    index = {ref: i for i, ref in enumerate(vertices)}
    n = len(vertices)
    out_weights = np.zeros(n)
    reversed_edges: list[tuple[int, int, float]] = []
    for edge in g.edges:
        source = index[edge.effect]
        target = index[edge.cause]
        reversed_edges.append((source, target, edge.weight))
        out_weights[source] += edge.weight

    scores = np.full(n, 1.0 / n)
    teleport = np.full(n, 1.0 / n)
    for _ in range(cfg.pagerank_max_iters):
        flow = np.zeros(n)
        dangling_mass = float(scores[out_weights == 0.0].sum())
        for source, target, weight in reversed_edges:
            if out_weights[source] > 0.0:
                flow[target] += scores[source] * weight / out_weights[source]
        flow += dangling_mass / n
        updated = (1.0 - cfg.damping) * teleport + cfg.damping * flow
        updated /= updated.sum()
        if float(np.abs(updated - scores).sum()) < cfg.pagerank_epsilon:
            scores = updated
            break
        scores = updated
    return {ref: float(scores[index[ref]]) for ref in vertices}


def pagerank_rank(g: CausalGraph, cfg: StatConfig | None = None) -> HealthReport:
    """Rank root-cause candidates by reversed-graph PageRank score.

    Equal scores share a rank (competition ranking: 1, 2, 2, 4); the report
    holds every entry ranked <= k, so boundary ties may extend it past k.
    """
    cfg = cfg or StatConfig()
    if not g.vertices:
        raise StatError("pagerank_rank requires a graph with at least one vertex")
    scores = _pagerank_scores(g, cfg)
    ordered = sorted(scores.items(), key=lambda item: (-item[1], item[0]))

    ranked: list[RankedCause] = []
    rank = 0
    previous_score: float | None = None
    for position, (ref, score) in enumerate(ordered, start=1):
        if previous_score is None or previous_score - score > _TIE_EPS:
            rank = position
            previous_score = score
        if rank > cfg.k:
            break
        ranked.append(RankedCause(rank=rank, ref=ref, score=score))
    return HealthReport(ranked_causes=tuple(ranked), k=cfg.k)


def analyze(s: TopologySnapshot, cfg: StatConfig | None = None) -> HealthReport:
    """Full pipeline: anomalies -> causal graph -> ranked health report.

    Pure function of (snapshot, config); a snapshot without anomalies yields
    an empty report with an explanatory status.
    """
    cfg = cfg or StatConfig()
    anomalies = extract_anomalies(s, cfg)
    if not anomalies:
        return HealthReport(ranked_causes=(), k=cfg.k, status="no anomalous series detected")
    graph = build_causal_graph(s, anomalies, cfg)
    return pagerank_rank(graph, cfg)
