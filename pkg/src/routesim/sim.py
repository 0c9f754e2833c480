"""Deterministic discrete-event simulator of the cloud-edge serving system.

Time is purely logical. Each request flows admission -> routing decision
(with a load snapshot) -> uplink transfer -> per-node FIFO queue with a fixed
number of parallel servers -> inference -> downlink transfer. A closed-loop
admission window keeps at most ``concurrency`` requests in flight; every
completion admits the next waiting request.

All stochastic outcomes (response quality, classifier draws held by the
router) are keyed by ids rather than drawn sequentially, so the trace for a
given (config, seed) is byte-identical regardless of event interleaving.
"""

from __future__ import annotations

import heapq
import json
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .domain import (
    ConfigError,
    InferenceRequest,
    ModelSpec,
    NodeSpec,
    RequestCategory,
    Topology,
)
from .metrics import (
    RouterSummary,
    RtBreakdown,
    format_float,
    request_cost,
    response_time_metric,
)
from .routers import Reason, SystemState, stable_hash


class SimulationError(RuntimeError):
    """A request could not be served; the run is aborted."""


class EventKind(Enum):
    ARRIVAL = "arrival"
    UPLINK_DONE = "uplink_done"
    INFERENCE_START = "inference_start"
    INFERENCE_DONE = "inference_done"
    DOWNLINK_DONE = "downlink_done"


@dataclass(frozen=True, order=True)
class Event:
    time: float
    sequence: int
    kind: EventKind = field(compare=False)
    request_id: int = field(compare=False)
    node_id: str = field(compare=False, default="")


def infer_time(request: InferenceRequest, model: ModelSpec, node: NodeSpec) -> float:
    """Service time: fixed overhead plus prefill and decode phases, scaled by
    the node's speed multiplier."""
    prefill = request.prompt_tokens / (model.prefill_rate * node.speed_multiplier)
    decode = request.expected_response_tokens / (model.decode_rate * node.speed_multiplier)
    return model.base_overhead + prefill + decode


class QualityOracle:
    """Seeded stand-in for dataset-specific response scoring.

    Scores follow a Beta distribution with the model's per-category mean and
    spread (spread 0 means the mean, exactly). Deterministic per
    (seed, request id, model id); draws are cached.
    """

    def __init__(self, topology: Topology, seed: int) -> None:
        self.topology = topology
        self.seed = seed
        self._cache: dict[tuple[int, str], float] = {}

    def score(self, request: InferenceRequest, model: ModelSpec) -> float:
        key = (request.id, model.id)
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        profile = model.quality_profile.get(request.category)
        if profile is None:
            raise ConfigError(
                f"model {model.id!r}: no quality profile for {request.category.value!r}"
            )
        mean, spread = profile.mean, profile.spread
        if spread <= 0.0 or mean <= 0.0 or mean >= 1.0:
            value = mean
        else:
            variance = min(spread * spread, 0.95 * mean * (1.0 - mean))
            concentration = mean * (1.0 - mean) / variance - 1.0
            rng = np.random.default_rng(
                np.random.SeedSequence((self.seed, request.id, stable_hash(model.id)))
            )
            value = float(rng.beta(mean * concentration, (1.0 - mean) * concentration))
        self._cache[key] = value
        return value


@dataclass(frozen=True)
class SimConfig:
    topology: Topology
    requests: Sequence[InferenceRequest]
    concurrency: int = 1
    seed: int = 0

    def validate(self) -> None:
        if self.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")
        if not self.requests:
            raise ConfigError("at least one request is required")


@dataclass(frozen=True)
class TraceRecord:
    """One logged request, in trace column order."""

    dataset: RequestCategory
    global_index: int
    assigned_model: str
    node_id: str
    quality: float
    rt: RtBreakdown
    inference_time: float
    cost: float
    reason: Reason


@dataclass(frozen=True)
class LifecycleTimes:
    request_id: int
    admitted: float
    reached_node: float
    started: float
    finished_inference: float
    completed: float


@dataclass
class SimulationResult:
    router_name: str
    records: list[TraceRecord]
    summary: RouterSummary
    overflow_count: int
    makespan: float
    timings: list[LifecycleTimes]


class _NodeState:
    __slots__ = ("spec", "in_flight", "queue")

    def __init__(self, spec: NodeSpec) -> None:
        self.spec = spec
        self.in_flight = 0
        self.queue: deque[tuple[int, float]] = deque()


class _RequestState:
    __slots__ = (
        "request", "node_id", "model_id", "reason", "uplink", "queue_wait",
        "t_infer", "admitted", "reached_node", "started", "finished_inference",
    )

    def __init__(self, request: InferenceRequest) -> None:
        self.request = request
        self.node_id = ""
        self.model_id = ""
        self.reason = Reason.BASELINE
        self.uplink = 0.0
        self.queue_wait = 0.0
        self.t_infer = 0.0
        self.admitted = 0.0
        self.reached_node = 0.0
        self.started = 0.0
        self.finished_inference = 0.0


class Simulation:
    """Single-threaded event loop over a total (time, sequence) order."""

    def __init__(self, config: SimConfig, router, router_name: str | None = None) -> None:
        config.validate()
        self.config = config
        self.router = router
        self.router_name = router_name or getattr(router, "name", "router")
        self.topology = config.topology
        self.oracle = QualityOracle(config.topology, config.seed)
        self._space = set(config.topology.solution_space())
        self._fallback = config.topology.cloud_fallback()
        self._nodes = {n.id: _NodeState(n) for n in config.topology.nodes}
        self._requests = {r.id: _RequestState(r) for r in config.requests}
        self._order = sorted(config.requests, key=lambda r: (r.arrival_time, r.id))
        self._next_admission = 0
        self._in_flight_total = 0
        self._events: list[Event] = []
        self._sequence = 0
        self._clock = 0.0
        self.overflow_count = 0
        self.records: list[TraceRecord] = []
        self.timings: list[LifecycleTimes] = []
        for request in self._order:
            self._push(request.arrival_time, EventKind.ARRIVAL, request.id)

    # -- event plumbing ----------------------------------------------------

    def _push(self, time: float, kind: EventKind, request_id: int, node_id: str = "") -> None:
        heapq.heappush(self._events, Event(time, self._sequence, kind, request_id, node_id))
        self._sequence += 1

    def snapshot(self) -> SystemState:
        return SystemState(
            queue_lengths={nid: len(ns.queue) for nid, ns in self._nodes.items()},
            in_flight={nid: ns.in_flight for nid, ns in self._nodes.items()},
        )

    # -- lifecycle ---------------------------------------------------------

    def _admit_ready(self, now: float) -> None:
        while (
            self._next_admission < len(self._order)
            and self._in_flight_total < self.config.concurrency
            and self._order[self._next_admission].arrival_time <= now
        ):
            request = self._order[self._next_admission]
            self._next_admission += 1
            self._in_flight_total += 1
            state = self._requests[request.id]
            decision = self.router.route(request, self.snapshot())
            if (decision.node_id, decision.model_id) not in self._space:
                raise SimulationError(
                    f"request {request.id}: decision ({decision.node_id}, "
                    f"{decision.model_id}) is not a valid deployment pair"
                )
            state.node_id = decision.node_id
            state.model_id = decision.model_id
            state.reason = decision.reason
            state.admitted = now
            node = self._nodes[decision.node_id].spec
            uplink = request.query_size_bytes / node.bandwidth_to_node + node.latency_to_node
            state.uplink = uplink
            self._push(now + uplink, EventKind.UPLINK_DONE, request.id, node.id)

    def _start_inference(self, state: _RequestState, now: float) -> None:
        node_state = self._nodes[state.node_id]
        node_state.in_flight += 1
        model = self.topology.model(state.model_id)
        state.started = now
        state.queue_wait = now - state.reached_node
        state.t_infer = infer_time(state.request, model, node_state.spec)
        self._push(now + state.t_infer, EventKind.INFERENCE_DONE, state.request.id, state.node_id)

    def _on_uplink_done(self, state: _RequestState, now: float) -> None:
        state.reached_node = now
        node_state = self._nodes[state.node_id]
        if node_state.in_flight < node_state.spec.max_concurrent:
            self._start_inference(state, now)
        elif len(node_state.queue) < node_state.spec.queue_limit:
            node_state.queue.append((state.request.id, now))
        elif state.node_id == self._fallback[0]:
            # Nowhere left to shed load; the fallback node absorbs the
            # excess so every request is served exactly once.
            self.overflow_count += 1
            node_state.queue.append((state.request.id, now))
        else:
            self.overflow_count += 1
            state.node_id, state.model_id = self._fallback
            node = self._nodes[state.node_id].spec
            extra = state.request.query_size_bytes / node.bandwidth_to_node + node.latency_to_node
            state.uplink += extra
            self._push(now + extra, EventKind.UPLINK_DONE, state.request.id, node.id)

    def _on_inference_done(self, state: _RequestState, now: float) -> None:
        node_state = self._nodes[state.node_id]
        node_state.in_flight -= 1
        state.finished_inference = now
        if node_state.queue:
            next_id, _enqueued = node_state.queue.popleft()
            self._start_inference(self._requests[next_id], now)
        node = node_state.spec
        downlink = (
            state.request.response_size_bytes / node.bandwidth_from_node
            + node.latency_from_node
        )
        self._push(now + downlink, EventKind.DOWNLINK_DONE, state.request.id, node.id)

    def _on_downlink_done(self, state: _RequestState, now: float) -> None:
        request = state.request
        node = self._nodes[state.node_id].spec
        model = self.topology.model(state.model_id)
        downlink = (
            request.response_size_bytes / node.bandwidth_from_node + node.latency_from_node
        )
        breakdown = RtBreakdown.build(
            uplink=state.uplink,
            infer=state.t_infer,
            queue_wait=state.queue_wait,
            downlink=downlink,
        )
        self.records.append(
            TraceRecord(
                dataset=request.category,
                global_index=request.id,
                assigned_model=state.model_id,
                node_id=state.node_id,
                quality=self.oracle.score(request, model),
                rt=breakdown,
                inference_time=state.t_infer,
                cost=request_cost(request.total_tokens, model.price_per_million_tokens),
                reason=state.reason,
            )
        )
        self.timings.append(
            LifecycleTimes(
                request_id=request.id,
                admitted=state.admitted,
                reached_node=state.reached_node,
                started=state.started,
                finished_inference=state.finished_inference,
                completed=now,
            )
        )
        self._in_flight_total -= 1
        self._admit_ready(now)

    def step(self) -> bool:
        """Process one event; False when the simulation has drained."""
        if not self._events:
            return False
        event = heapq.heappop(self._events)
        self._clock = event.time
        if event.kind is EventKind.ARRIVAL:
            self._admit_ready(event.time)
        elif event.kind is EventKind.UPLINK_DONE:
            self._on_uplink_done(self._requests[event.request_id], event.time)
        elif event.kind is EventKind.INFERENCE_DONE:
            self._on_inference_done(self._requests[event.request_id], event.time)
        elif event.kind is EventKind.DOWNLINK_DONE:
            self._on_downlink_done(self._requests[event.request_id], event.time)
        return True

    def run(self) -> SimulationResult:
        while self.step():
            pass
        if len(self.records) != len(self.config.requests):
            raise SimulationError(
                f"{len(self.records)} of {len(self.config.requests)} requests completed"
            )
        return SimulationResult(
            router_name=self.router_name,
            records=self.records,
            summary=summarize_records(self.router_name, self.records),
            overflow_count=self.overflow_count,
            makespan=self._clock,
            timings=self.timings,
        )


def snapshot_state(simulation: Simulation) -> SystemState:
    return simulation.snapshot()


def run_simulation(config: SimConfig, router, router_name: str | None = None) -> SimulationResult:
    return Simulation(config, router, router_name).run()


def summarize_records(router_name: str, records: Sequence[TraceRecord]) -> RouterSummary:
    if not records:
        raise ValueError("cannot summarize an empty trace")
    return RouterSummary(
        router_name=router_name,
        avg_quality=math.fsum(r.quality for r in records) / len(records),
        avg_response_time=response_time_metric([r.rt for r in records]),
        avg_cost=math.fsum(r.cost for r in records) / len(records),
    )


def quality_by_category(records: Sequence[TraceRecord]) -> dict[RequestCategory, float]:
    grouped: dict[RequestCategory, list[float]] = {}
    for record in records:
        grouped.setdefault(record.dataset, []).append(record.quality)
    return {
        category: math.fsum(values) / len(values)
        for category, values in grouped.items()
    }


# ---------------------------------------------------------------------------
# Trace files: one JSON object per line, numbers at 17 significant digits.
# ---------------------------------------------------------------------------

_TRACE_TEMPLATE = (
    '{{"dataset":{dataset},"global_index":{index},"assigned_model":{model},'
    '"node_id":{node},"quality":{quality},"response_time":{total},'
    '"uplink":{uplink},"queue_wait":{wait},"inference_time":{infer},'
    '"downlink":{downlink},"cost":{cost},"reason":{reason}}}'
)


def trace_line(record: TraceRecord) -> str:
    return _TRACE_TEMPLATE.format(
        dataset=json.dumps(record.dataset.value),
        index=record.global_index,
        model=json.dumps(record.assigned_model),
        node=json.dumps(record.node_id),
        quality=format_float(record.quality),
        total=format_float(record.rt.total),
        uplink=format_float(record.rt.uplink),
        wait=format_float(record.rt.queue_wait),
        infer=format_float(record.rt.infer),
        downlink=format_float(record.rt.downlink),
        cost=format_float(record.cost),
        reason=json.dumps(record.reason.value),
    )


def write_trace(records: Sequence[TraceRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(trace_line(record) + "\n")


def read_trace(path: str | Path) -> list[TraceRecord]:
    records = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            doc: dict[str, Any] = json.loads(line)
            records.append(
                TraceRecord(
                    dataset=RequestCategory(doc["dataset"]),
                    global_index=int(doc["global_index"]),
                    assigned_model=doc["assigned_model"],
                    node_id=doc["node_id"],
                    quality=float(doc["quality"]),
                    rt=RtBreakdown.build(
                        uplink=float(doc["uplink"]),
                        infer=float(doc["inference_time"]),
                        queue_wait=float(doc["queue_wait"]),
                        downlink=float(doc["downlink"]),
                    ),
                    inference_time=float(doc["inference_time"]),
                    cost=float(doc["cost"]),
                    reason=Reason(doc["reason"]),
                )
            )
    return records
