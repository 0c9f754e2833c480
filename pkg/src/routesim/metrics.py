"""Objective metrics, per-request latency decomposition, scalarization, and
the cross-router composite score.

All averages use ``math.fsum`` so 500-element means are reproducible across
platforms. Quality, cost, and response time are all minimized; reported
summaries flip quality to "higher is better".
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from .domain import InferenceRequest, NodeSpec

SUMMARY_CSV_HEADER = ("router", "avg_quality", "avg_response_time", "avg_cost", "overall")


def _mean(values: Sequence[float], what: str) -> float:
    if len(values) == 0:
        raise ValueError(f"{what}: at least one value is required")
    return math.fsum(values) / len(values)


def response_quality_metric(qualities: Sequence[float]) -> float:
    """Mean quality shortfall: the complement of the average quality score."""
    for q in qualities:
        if not 0.0 <= q <= 1.0:
            raise ValueError(f"quality score {q} out of [0, 1]")
    return 1.0 - _mean(qualities, "response_quality_metric")


def request_cost(total_tokens: float, price_per_million_tokens: float) -> float:
    """Dollar cost of one request at the assigned model's token price."""
    return total_tokens / 1e6 * price_per_million_tokens


def inference_cost_metric(per_request: Sequence[tuple[float, float]]) -> float:
    """Mean per-request cost from (total_tokens, price_per_million) pairs."""
    for tokens, price in per_request:
        if tokens < 0 or price < 0:
            raise ValueError("tokens and prices must be >= 0")
    costs = [request_cost(tokens, price) for tokens, price in per_request]
    return _mean(costs, "inference_cost_metric")


@dataclass(frozen=True)
class RtBreakdown:
    """End-to-end latency of one request, split into its four phases.

    ``total`` is always computed as uplink + queue_wait + infer + downlink in
    that exact order, so the decomposition identity holds bit-for-bit.
    """

    uplink: float
    infer: float
    queue_wait: float
    downlink: float
    total: float

    @classmethod
    def build(cls, uplink: float, infer: float, queue_wait: float, downlink: float) -> "RtBreakdown":
        return cls(
            uplink=uplink,
            infer=infer,
            queue_wait=queue_wait,
            downlink=downlink,
            total=uplink + queue_wait + infer + downlink,
        )


def response_time_i(
    request: InferenceRequest,
    node: NodeSpec,
    t_infer: float,
    queue_wait: float = 0.0,
) -> RtBreakdown:
    """Latency decomposition for one request served on one node."""
    if node.bandwidth_to_node <= 0 or node.bandwidth_from_node <= 0:
        raise ValueError(f"node {node.id!r}: bandwidths must be > 0")
    uplink = request.query_size_bytes / node.bandwidth_to_node + node.latency_to_node
    downlink = request.response_size_bytes / node.bandwidth_from_node + node.latency_from_node
    return RtBreakdown.build(uplink=uplink, infer=t_infer, queue_wait=queue_wait, downlink=downlink)


def response_time_metric(breakdowns: Sequence["RtBreakdown | float"]) -> float:
    """Mean end-to-end latency over a trace."""
    totals = [b.total if isinstance(b, RtBreakdown) else float(b) for b in breakdowns]
    return _mean(totals, "response_time_metric")


WEIGHT_SUM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Weights:
    w_quality: float
    w_cost: float
    w_time: float

    def __post_init__(self) -> None:
        for name in ("w_quality", "w_cost", "w_time"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} out of [0, 1]")
        total = self.w_quality + self.w_cost + self.w_time
        if abs(total - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise ValueError(f"weights sum to {total}, expected 1")

    @classmethod
    def equal(cls) -> "Weights":
        return cls(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)


@dataclass(frozen=True)
class ObjectiveVector:
    """One point in (quality shortfall, cost, response time) space; all three
    minimized."""

    rq: float
    cost: float
    rt: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.rq, self.cost, self.rt)


def scalarize(objectives: ObjectiveVector, weights: Weights) -> float:
    """Weighted sum of pre-normalized objectives; lower is better."""
    return (
        weights.w_quality * objectives.rq
        + weights.w_cost * objectives.cost
        + weights.w_time * objectives.rt
    )


@dataclass(frozen=True)
class RouterSummary:
    """Table row for one router: averages over a trace plus the composite
    score (unset until the router is normalized against its peers)."""

    router_name: str
    avg_quality: float
    avg_response_time: float
    avg_cost: float
    overall: float | None = None


def _normalize_column(values: Sequence[float], *, ascending: bool) -> list[float]:
    lo, hi = min(values), max(values)
    if hi == lo:
        # A non-discriminating metric should not penalize anyone.
        return [1.0 for _ in values]
    if ascending:
        return [(v - lo) / (hi - lo) for v in values]
    return [(hi - v) / (hi - lo) for v in values]


def overall_scores(summaries: Sequence[RouterSummary]) -> list[RouterSummary]:
    """Fill ``overall`` on each summary: the mean of min-max-normalized
    quality (higher better), response time, and cost (lower better)."""
    if len(summaries) < 2:
        raise ValueError("overall_scores requires at least two routers")
    q_norm = _normalize_column([s.avg_quality for s in summaries], ascending=True)
    t_norm = _normalize_column([s.avg_response_time for s in summaries], ascending=False)
    c_norm = _normalize_column([s.avg_cost for s in summaries], ascending=False)
    return [
        replace(s, overall=(q + t + c) / 3.0)
        for s, q, t, c in zip(summaries, q_norm, t_norm, c_norm)
    ]


def format_float(value: float) -> str:
    """Render a float with 17 significant digits (exact round trip)."""
    return format(value, ".17g")


def write_summary_csv(summaries: Iterable[RouterSummary], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(SUMMARY_CSV_HEADER)
        for s in summaries:
            writer.writerow(
                [
                    s.router_name,
                    format_float(s.avg_quality),
                    format_float(s.avg_response_time),
                    format_float(s.avg_cost),
                    "" if s.overall is None else format_float(s.overall),
                ]
            )


def read_summary_csv(path: str | Path) -> list[RouterSummary]:
    summaries = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        for row in reader:
            summaries.append(
                RouterSummary(
                    router_name=row["router"],
                    avg_quality=float(row["avg_quality"]),
                    avg_response_time=float(row["avg_response_time"]),
                    avg_cost=float(row["avg_cost"]),
                    overall=float(row["overall"]) if row.get("overall") else None,
                )
            )
    return summaries
