"""Core data model: requests, nodes, models, topologies, and synthetic workloads.

Everything here is a plain value type. Workload generation is a pure function
of its spec (including the seed), so two calls with the same spec produce
byte-identical request lists.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Raised when a config document or spec fails validation."""


class RequestCategory(str, Enum):
    CODE = "code"
    MATH = "math"
    READING = "reading"
    COMMONSENSE = "commonsense"
    # Classifier-only label; never appears in generated workloads.
    GENERAL = "general"


#: Categories that real requests can carry (GENERAL excluded).
DATASET_CATEGORIES: tuple[RequestCategory, ...] = (
    RequestCategory.CODE,
    RequestCategory.MATH,
    RequestCategory.READING,
    RequestCategory.COMMONSENSE,
)

#: Fixed cycling order for round-robin workloads.
ROUND_ROBIN_ORDER: tuple[RequestCategory, ...] = (
    RequestCategory.CODE,
    RequestCategory.MATH,
    RequestCategory.COMMONSENSE,
    RequestCategory.READING,
)


class ModelKind(str, Enum):
    INSTRUCT = "instruct"
    CODER = "coder"
    MATH = "math"
    LARGE = "large"


class NodeTier(str, Enum):
    CLOUD = "cloud"
    EDGE = "edge"


@dataclass(frozen=True)
class InferenceRequest:
    """One inference request with everything needed to cost and time it."""

    id: int
    category: RequestCategory
    prompt_tokens: int
    expected_response_tokens: int
    query_size_bytes: int
    response_size_bytes: int
    sentence_count: int
    has_output_constraint: bool
    arrival_time: float

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.expected_response_tokens


@dataclass(frozen=True)
class QualityProfile:
    """Per-category quality distribution of a model: mean in [0, 1], spread
    is the target standard deviation (0 means deterministic)."""

    mean: float
    spread: float = 0.0


@dataclass(frozen=True)
class ModelSpec:
    id: str
    kind: ModelKind
    price_per_million_tokens: float
    quality_profile: Mapping[RequestCategory, QualityProfile]
    prefill_rate: float
    decode_rate: float
    base_overhead: float = 0.0

    def validate(self) -> None:
        if self.price_per_million_tokens <= 0:
            raise ConfigError(f"model {self.id!r}: price_per_million_tokens must be > 0")
        if self.prefill_rate <= 0 or self.decode_rate <= 0:
            raise ConfigError(f"model {self.id!r}: prefill_rate and decode_rate must be > 0")
        if self.base_overhead < 0:
            raise ConfigError(f"model {self.id!r}: base_overhead must be >= 0")
        for category in DATASET_CATEGORIES:
            if category not in self.quality_profile:
                raise ConfigError(
                    f"model {self.id!r}: quality_profile missing entry for {category.value!r}"
                )
        for category, profile in self.quality_profile.items():
            if not 0.0 <= profile.mean <= 1.0:
                raise ConfigError(
                    f"model {self.id!r}: quality mean for {category.value!r} out of [0, 1]"
                )
            if profile.spread < 0:
                raise ConfigError(
                    f"model {self.id!r}: quality spread for {category.value!r} must be >= 0"
                )


@dataclass(frozen=True)
class NodeSpec:
    id: str
    tier: NodeTier
    bandwidth_to_node: float
    bandwidth_from_node: float
    latency_to_node: float
    latency_from_node: float
    max_concurrent: int
    queue_limit: int
    deployed_models: tuple[str, ...]
    speed_multiplier: float = 1.0

    def validate(self) -> None:
        if self.bandwidth_to_node <= 0 or self.bandwidth_from_node <= 0:
            raise ConfigError(f"node {self.id!r}: bandwidths must be > 0")
        if self.latency_to_node < 0 or self.latency_from_node < 0:
            raise ConfigError(f"node {self.id!r}: latencies must be >= 0")
        if self.max_concurrent < 1:
            raise ConfigError(f"node {self.id!r}: max_concurrent must be >= 1")
        if self.queue_limit < 0:
            raise ConfigError(f"node {self.id!r}: queue_limit must be >= 0")
        if not self.deployed_models:
            raise ConfigError(f"node {self.id!r}: deployed_models must be nonempty")
        if self.speed_multiplier <= 0:
            raise ConfigError(f"node {self.id!r}: speed_multiplier must be > 0")


@dataclass(frozen=True)
class Topology:
    """The node/model universe a router can choose from.

    The valid pairs (node, model with the model deployed on that node) form
    the solution space; it must contain at least one cloud pair so that the
    cloud fallback always exists.
    """

    nodes: tuple[NodeSpec, ...]
    models: tuple[ModelSpec, ...]

    def validate(self) -> None:
        if not self.nodes:
            raise ConfigError("topology: nodes must be nonempty")
        if not self.models:
            raise ConfigError("topology: models must be nonempty")
        seen_nodes: set[str] = set()
        for i, node in enumerate(self.nodes):
            if node.id in seen_nodes:
                raise ConfigError(f"nodes[{i}]: duplicate node id {node.id!r}")
            seen_nodes.add(node.id)
            node.validate()
        seen_models: set[str] = set()
        for i, model in enumerate(self.models):
            if model.id in seen_models:
                raise ConfigError(f"models[{i}]: duplicate model id {model.id!r}")
            seen_models.add(model.id)
            model.validate()
        for i, node in enumerate(self.nodes):
            for model_id in node.deployed_models:
                if model_id not in seen_models:
                    raise ConfigError(
                        f"nodes[{i}].deployed_models: unknown model id {model_id!r}"
                    )
        if not self.cloud_nodes():
            raise ConfigError("topology: at least one cloud node is required")

    def model(self, model_id: str) -> ModelSpec:
        for m in self.models:
            if m.id == model_id:
                return m
        raise KeyError(model_id)

    def node(self, node_id: str) -> NodeSpec:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def cloud_nodes(self) -> tuple[NodeSpec, ...]:
        return tuple(n for n in self.nodes if n.tier is NodeTier.CLOUD)

    def edge_nodes(self) -> tuple[NodeSpec, ...]:
        return tuple(n for n in self.nodes if n.tier is NodeTier.EDGE)

    def solution_space(self) -> tuple[tuple[str, str], ...]:
        """All valid (node_id, model_id) pairs, in declared order."""
        return tuple(
            (node.id, model_id) for node in self.nodes for model_id in node.deployed_models
        )

    def cloud_fallback(self) -> tuple[str, str]:
        """First cloud node hosting a large-kind model, with that model."""
        for node in self.cloud_nodes():
            for model_id in node.deployed_models:
                if self.model(model_id).kind is ModelKind.LARGE:
                    return node.id, model_id
        raise ConfigError("topology: no cloud node hosts a model of kind 'large'")


class Ordering(str, Enum):
    ROUND_ROBIN = "round_robin"
    SHUFFLED = "shuffled"


class ArrivalMode(str, Enum):
    CLOSED_LOOP = "closed_loop"
    OPEN = "open"


@dataclass(frozen=True)
class ArrivalProcess:
    mode: ArrivalMode = ArrivalMode.CLOSED_LOOP
    concurrency: int = 1
    rate: float = 1.0

    def validate(self) -> None:
        if self.mode is ArrivalMode.CLOSED_LOOP and self.concurrency < 1:
            raise ConfigError("arrival.concurrency must be >= 1")
        if self.mode is ArrivalMode.OPEN and self.rate <= 0:
            raise ConfigError("arrival.rate must be > 0")


@dataclass(frozen=True)
class TokenProfile:
    """Lognormal token-length parameters plus prompt-shape knobs for one
    category. Medians/sigmas are stand-ins, not measured statistics; override
    them in the workload document when better numbers are available."""

    prompt_median: float
    prompt_sigma: float
    response_median: float
    response_sigma: float
    tokens_per_sentence: float
    constraint_probability: float

    def validate(self, category: str) -> None:
        for name in ("prompt_median", "response_median", "tokens_per_sentence"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"token_profiles.{category}.{name} must be > 0")
        for name in ("prompt_sigma", "response_sigma"):
            if getattr(self, name) < 0:
                raise ConfigError(f"token_profiles.{category}.{name} must be >= 0")
        if not 0.0 <= self.constraint_probability <= 1.0:
            raise ConfigError(
                f"token_profiles.{category}.constraint_probability out of [0, 1]"
            )


def default_token_profiles() -> dict[RequestCategory, TokenProfile]:
    """Ordinally realistic defaults: reading has long contexts and short
    answers, math has long worked answers, commonsense is short in and out."""
    return {
        RequestCategory.CODE: TokenProfile(150, 0.25, 200, 0.35, 18, 0.60),
        RequestCategory.MATH: TokenProfile(120, 0.25, 250, 0.35, 6, 0.30),
        RequestCategory.READING: TokenProfile(300, 0.25, 30, 0.35, 15, 0.15),
        RequestCategory.COMMONSENSE: TokenProfile(200, 0.25, 5, 0.35, 50, 0.05),
    }


DEFAULT_BYTES_PER_TOKEN = 4


@dataclass(frozen=True)
class WorkloadSpec:
    total_requests: int
    per_category_counts: Mapping[RequestCategory, int]
    ordering: Ordering = Ordering.ROUND_ROBIN
    arrival: ArrivalProcess = ArrivalProcess()
    token_profiles: Mapping[RequestCategory, TokenProfile] = field(
        default_factory=default_token_profiles
    )
    bytes_per_token: int = DEFAULT_BYTES_PER_TOKEN
    seed: int = 0

    def validate(self) -> None:
        if self.total_requests < 1:
            raise ConfigError("total_requests must be >= 1")
        for category in self.per_category_counts:
            if category is RequestCategory.GENERAL:
                raise ConfigError("per_category_counts: 'general' is not a workload category")
            if self.per_category_counts[category] < 0:
                raise ConfigError(f"per_category_counts.{category.value} must be >= 0")
        total = sum(self.per_category_counts.values())
        if total != self.total_requests:
            raise ConfigError(
                f"per_category_counts sum to {total}, expected total_requests={self.total_requests}"
            )
        if self.bytes_per_token < 1:
            raise ConfigError("bytes_per_token must be >= 1")
        self.arrival.validate()
        for category, counts in self.per_category_counts.items():
            if counts > 0 and category not in self.token_profiles:
                raise ConfigError(f"token_profiles missing entry for {category.value!r}")
        for category, profile in self.token_profiles.items():
            profile.validate(category.value)


def _category_sequence(spec: WorkloadSpec, rng: np.random.Generator) -> list[RequestCategory]:
    remaining = {c: spec.per_category_counts.get(c, 0) for c in DATASET_CATEGORIES}
    if spec.ordering is Ordering.ROUND_ROBIN:
        sequence: list[RequestCategory] = []
        while len(sequence) < spec.total_requests:
            progressed = False
            for category in ROUND_ROBIN_ORDER:
                if remaining[category] > 0:
                    sequence.append(category)
                    remaining[category] -= 1
                    progressed = True
            if not progressed:
                break
        return sequence
    sequence = [c for c in DATASET_CATEGORIES for _ in range(remaining[c])]
    rng.shuffle(sequence)
    return sequence


def generate_workload(spec: WorkloadSpec) -> list[InferenceRequest]:
    """Generate the ordered request list for a workload spec.

    Ids are 0..total-1 in emission order; all randomness comes from
    ``spec.seed``.
    """
    spec.validate()
    rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 0x776C)))
    sequence = _category_sequence(spec, rng)
    requests: list[InferenceRequest] = []
    clock = 0.0
    for rid, category in enumerate(sequence):
        profile = spec.token_profiles[category]
        prompt = max(1, int(round(rng.lognormal(math.log(profile.prompt_median), profile.prompt_sigma))))
        response = max(0, int(round(rng.lognormal(math.log(profile.response_median), profile.response_sigma))))
        sentences = max(1, int(round(prompt / profile.tokens_per_sentence)))
        constrained = bool(rng.random() < profile.constraint_probability)
        if spec.arrival.mode is ArrivalMode.OPEN:
            clock += float(rng.exponential(1.0 / spec.arrival.rate))
            arrival = clock
        else:
            arrival = 0.0
        requests.append(
            InferenceRequest(
                id=rid,
                category=category,
                prompt_tokens=prompt,
                expected_response_tokens=response,
                query_size_bytes=prompt * spec.bytes_per_token,
                response_size_bytes=response * spec.bytes_per_token,
                sentence_count=sentences,
                has_output_constraint=constrained,
                arrival_time=arrival,
            )
        )
    return requests


# ---------------------------------------------------------------------------
# Document (de)serialization. Documents are JSON-compatible trees carrying a
# top-level schema_version.
# ---------------------------------------------------------------------------


def _require(doc: Mapping[str, Any], key: str, context: str) -> Any:
    if key not in doc:
        raise ConfigError(f"{context}: missing required field {key!r}")
    return doc[key]


def _check_schema_version(doc: Mapping[str, Any], context: str) -> None:
    version = _require(doc, "schema_version", context)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{context}: unsupported schema_version {version!r}")


def topology_from_document(doc: Mapping[str, Any]) -> Topology:
    _check_schema_version(doc, "topology")
    models = []
    for i, entry in enumerate(_require(doc, "models", "topology")):
        context = f"models[{i}]"
        try:
            kind = ModelKind(_require(entry, "kind", context))
        except ValueError as exc:
            raise ConfigError(f"{context}.kind: {exc}") from None
        profile_doc = _require(entry, "quality_profile", context)
        profile = {}
        for key, value in profile_doc.items():
            try:
                category = RequestCategory(key)
            except ValueError:
                raise ConfigError(f"{context}.quality_profile: unknown category {key!r}") from None
            profile[category] = QualityProfile(
                mean=float(value["mean"]), spread=float(value.get("spread", 0.0))
            )
        models.append(
            ModelSpec(
                id=str(_require(entry, "id", context)),
                kind=kind,
                price_per_million_tokens=float(_require(entry, "price_per_million_tokens", context)),
                quality_profile=profile,
                prefill_rate=float(_require(entry, "prefill_rate", context)),
                decode_rate=float(_require(entry, "decode_rate", context)),
                base_overhead=float(entry.get("base_overhead", 0.0)),
            )
        )
    nodes = []
    for i, entry in enumerate(_require(doc, "nodes", "topology")):
        context = f"nodes[{i}]"
        try:
            tier = NodeTier(_require(entry, "tier", context))
        except ValueError as exc:
            raise ConfigError(f"{context}.tier: {exc}") from None
        nodes.append(
            NodeSpec(
                id=str(_require(entry, "id", context)),
                tier=tier,
                bandwidth_to_node=float(_require(entry, "bandwidth_to_node", context)),
                bandwidth_from_node=float(_require(entry, "bandwidth_from_node", context)),
                latency_to_node=float(_require(entry, "latency_to_node", context)),
                latency_from_node=float(_require(entry, "latency_from_node", context)),
                max_concurrent=int(_require(entry, "max_concurrent", context)),
                queue_limit=int(_require(entry, "queue_limit", context)),
                deployed_models=tuple(_require(entry, "deployed_models", context)),
                speed_multiplier=float(entry.get("speed_multiplier", 1.0)),
            )
        )
    topology = Topology(nodes=tuple(nodes), models=tuple(models))
    topology.validate()
    return topology


def topology_to_document(topology: Topology) -> dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "models": [
            {
                "id": m.id,
                "kind": m.kind.value,
                "price_per_million_tokens": m.price_per_million_tokens,
                "quality_profile": {
                    c.value: {"mean": p.mean, "spread": p.spread}
                    for c, p in m.quality_profile.items()
                },
                "prefill_rate": m.prefill_rate,
                "decode_rate": m.decode_rate,
                "base_overhead": m.base_overhead,
            }
            for m in topology.models
        ],
        "nodes": [
            {
                "id": n.id,
                "tier": n.tier.value,
                "bandwidth_to_node": n.bandwidth_to_node,
                "bandwidth_from_node": n.bandwidth_from_node,
                "latency_to_node": n.latency_to_node,
                "latency_from_node": n.latency_from_node,
                "max_concurrent": n.max_concurrent,
                "queue_limit": n.queue_limit,
                "deployed_models": list(n.deployed_models),
                "speed_multiplier": n.speed_multiplier,
            }
            for n in topology.nodes
        ],
    }


def workload_from_document(doc: Mapping[str, Any]) -> WorkloadSpec:
    _check_schema_version(doc, "workload")
    counts = {}
    for key, value in _require(doc, "per_category_counts", "workload").items():
        try:
            counts[RequestCategory(key)] = int(value)
        except ValueError:
            raise ConfigError(f"per_category_counts: unknown category {key!r}") from None
    try:
        ordering = Ordering(doc.get("ordering", "round_robin"))
    except ValueError as exc:
        raise ConfigError(f"workload.ordering: {exc}") from None
    arrival_doc = doc.get("arrival", {})
    try:
        mode = ArrivalMode(arrival_doc.get("mode", "closed_loop"))
    except ValueError as exc:
        raise ConfigError(f"workload.arrival.mode: {exc}") from None
    arrival = ArrivalProcess(
        mode=mode,
        concurrency=int(arrival_doc.get("concurrency", 1)),
        rate=float(arrival_doc.get("rate", 1.0)),
    )
    profiles = default_token_profiles()
    for key, value in doc.get("token_profiles", {}).items():
        try:
            category = RequestCategory(key)
        except ValueError:
            raise ConfigError(f"token_profiles: unknown category {key!r}") from None
        base = profiles.get(category)
        profiles[category] = TokenProfile(
            prompt_median=float(value.get("prompt_median", base.prompt_median if base else 100)),
            prompt_sigma=float(value.get("prompt_sigma", base.prompt_sigma if base else 0.25)),
            response_median=float(value.get("response_median", base.response_median if base else 100)),
            response_sigma=float(value.get("response_sigma", base.response_sigma if base else 0.35)),
            tokens_per_sentence=float(value.get("tokens_per_sentence", base.tokens_per_sentence if base else 16)),
            constraint_probability=float(value.get("constraint_probability", base.constraint_probability if base else 0.1)),
        )
    spec = WorkloadSpec(
        total_requests=int(_require(doc, "total_requests", "workload")),
        per_category_counts=counts,
        ordering=ordering,
        arrival=arrival,
        token_profiles=profiles,
        bytes_per_token=int(doc.get("bytes_per_token", DEFAULT_BYTES_PER_TOKEN)),
        seed=int(doc.get("seed", 0)),
    )
    spec.validate()
    return spec


def workload_to_document(spec: WorkloadSpec) -> dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "total_requests": spec.total_requests,
        "per_category_counts": {c.value: n for c, n in spec.per_category_counts.items()},
        "ordering": spec.ordering.value,
        "arrival": {
            "mode": spec.arrival.mode.value,
            "concurrency": spec.arrival.concurrency,
            "rate": spec.arrival.rate,
        },
        "token_profiles": {
            c.value: {
                "prompt_median": p.prompt_median,
                "prompt_sigma": p.prompt_sigma,
                "response_median": p.response_median,
                "response_sigma": p.response_sigma,
                "tokens_per_sentence": p.tokens_per_sentence,
                "constraint_probability": p.constraint_probability,
            }
            for c, p in spec.token_profiles.items()
        },
        "bytes_per_token": spec.bytes_per_token,
        "seed": spec.seed,
    }


def load_topology(path: str | Path) -> Topology:
    with open(path, encoding="utf-8") as handle:
        return topology_from_document(json.load(handle))


def save_topology(topology: Topology, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(topology_to_document(topology), indent=2) + "\n", encoding="utf-8"
    )


def load_workload_spec(path: str | Path) -> WorkloadSpec:
    with open(path, encoding="utf-8") as handle:
        return workload_from_document(json.load(handle))


def save_workload_spec(spec: WorkloadSpec, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(workload_to_document(spec), indent=2) + "\n", encoding="utf-8"
    )
