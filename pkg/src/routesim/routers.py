"""Runtime routing: prompt feature extraction, the threshold-rule router,
the fixed-assignment router, and the four reference baselines.

Routers are immutable after construction. ``route`` takes the request plus a
point-in-time system state snapshot and returns a decision whose (node,
model) pair is always drawn from the topology's valid solution space. Every
random choice (classifier draws, the random baseline) is keyed by
(seed, request id), so a decision never depends on call order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .domain import (
    SCHEMA_VERSION,
    ConfigError,
    InferenceRequest,
    ModelKind,
    NodeSpec,
    RequestCategory,
    Topology,
)
from .nsga2 import AssignmentGenome, ThresholdGenome

DATASET_ONLY = (
    RequestCategory.CODE,
    RequestCategory.MATH,
    RequestCategory.READING,
    RequestCategory.COMMONSENSE,
)

#: Model kind serving each true category on edge tiers.
KIND_BY_CATEGORY = {
    RequestCategory.CODE: ModelKind.CODER,
    RequestCategory.MATH: ModelKind.MATH,
    RequestCategory.READING: ModelKind.INSTRUCT,
    RequestCategory.COMMONSENSE: ModelKind.INSTRUCT,
    RequestCategory.GENERAL: ModelKind.INSTRUCT,
}


def stable_hash(text: str) -> int:
    """Platform-independent 64-bit hash for seeding substreams."""
    return int.from_bytes(hashlib.blake2s(text.encode("utf-8")).digest()[:8], "big")


# ---------------------------------------------------------------------------
# Feature extraction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ComplexityConfig:
    """Weights and reference scales of the prompt complexity score."""

    w_length: float = 0.4
    w_sentences: float = 0.2
    w_task: float = 0.3
    w_constraint: float = 0.1
    length_ref: float = 512.0
    sentence_ref: float = 20.0
    task_weights: Mapping[RequestCategory, float] = field(
        default_factory=lambda: {
            RequestCategory.CODE: 0.8,
            RequestCategory.MATH: 0.6,
            RequestCategory.READING: 0.3,
            RequestCategory.COMMONSENSE: 0.2,
            RequestCategory.GENERAL: 0.0,
        }
    )


def complexity_score(
    request: InferenceRequest,
    predicted_category: RequestCategory,
    config: ComplexityConfig = ComplexityConfig(),
) -> float:
    """Weighted combination of saturating prompt features, clamped to [0, 1]."""
    length_term = min(1.0, request.prompt_tokens / config.length_ref)
    sentence_term = min(1.0, request.sentence_count / config.sentence_ref)
    task_term = config.task_weights.get(predicted_category, 0.0)
    constraint_term = 1.0 if request.has_output_constraint else 0.0
    score = (
        config.w_length * length_term
        + config.w_sentences * sentence_term
        + config.w_task * task_term
        + config.w_constraint * constraint_term
    )
    return min(1.0, max(0.0, score))


@dataclass(frozen=True)
class ClassifierConfig:
    """Rule-based stand-in for a learned task classifier.

    The true category comes back with probability 1 - noise; otherwise a
    uniformly drawn wrong one. Confidence follows a Beta conditioned on
    correctness. With ``general_confidence_floor`` > 0, low-confidence
    predictions are relabeled 'general'.
    """

    noise: float = 0.1
    correct_confidence: tuple[float, float] = (8.0, 2.0)
    wrong_confidence: tuple[float, float] = (2.0, 2.0)
    general_confidence_floor: float = 0.0

    def validate(self) -> None:
        if not 0.0 <= self.noise <= 1.0:
            raise ConfigError("classifier.noise out of [0, 1]")
        if not 0.0 <= self.general_confidence_floor <= 1.0:
            raise ConfigError("classifier.general_confidence_floor out of [0, 1]")


class TaskClassifier:
    """Deterministic per (seed, request id); draws are cached."""

    def __init__(self, config: ClassifierConfig, seed: int) -> None:
        config.validate()
        self.config = config
        self.seed = seed
        self._cache: dict[int, tuple[RequestCategory, float]] = {}

    def classify(self, request: InferenceRequest) -> tuple[RequestCategory, float]:
        cached = self._cache.get(request.id)
        if cached is not None:
            return cached
        rng = np.random.default_rng(
            np.random.SeedSequence((self.seed, request.id, 0xC1A5))
        )
        correct = rng.random() >= self.config.noise
        if correct:
            category = request.category
            a, b = self.config.correct_confidence
        else:
            others = [c for c in DATASET_ONLY if c is not request.category]
            category = others[int(rng.integers(len(others)))]
            a, b = self.config.wrong_confidence
        confidence = float(rng.beta(a, b))
        if confidence < self.config.general_confidence_floor:
            category = RequestCategory.GENERAL
        result = (category, confidence)
        self._cache[request.id] = result
        return result


@dataclass(frozen=True)
class FeatureVector:
    complexity: float
    predicted_category: RequestCategory
    confidence: float
    queue_lengths: Mapping[str, int]


@dataclass(frozen=True)
class SystemState:
    """Read-only snapshot of per-node load at decision time."""

    queue_lengths: Mapping[str, int]
    in_flight: Mapping[str, int]

    @classmethod
    def idle(cls, topology: Topology) -> "SystemState":
        return cls(
            queue_lengths={n.id: 0 for n in topology.nodes},
            in_flight={n.id: 0 for n in topology.nodes},
        )


class Reason(str, Enum):
    EDGE_CODE = "edge_code"
    EDGE_MATH = "edge_math"
    EDGE_GENERAL = "edge_general"
    CLOUD_COMPLEX = "cloud_complex"
    CLOUD_FALLBACK_QUEUE = "cloud_fallback_queue"
    DIRECT_ASSIGNMENT = "direct_assignment"
    BASELINE = "baseline"


@dataclass(frozen=True)
class RoutingDecision:
    node_id: str
    model_id: str
    reason: Reason


# ---------------------------------------------------------------------------
# Routers
# ---------------------------------------------------------------------------


class ThresholdRouter:
    """Rule router driven by a threshold genome.

    Branch order: task-specific complexity cutoffs decide edge vs cloud;
    edge candidates are filtered by queue length; the model type follows the
    predicted category when its confidence clears the matching cutoff.
    """

    name = "proposed"

    def __init__(
        self,
        genome: ThresholdGenome,
        topology: Topology,
        classifier: TaskClassifier,
        complexity: ComplexityConfig = ComplexityConfig(),
    ) -> None:
        self.genome = genome
        self.topology = topology
        self.classifier = classifier
        self.complexity = complexity
        # Resolved once: routing must never fail per-request.
        self._cloud_pair = topology.cloud_fallback()
        self._edge_nodes = topology.edge_nodes()
        self._kind_index: dict[str, dict[ModelKind, str]] = {}
        for node in self._edge_nodes:
            kinds: dict[ModelKind, str] = {}
            for model_id in node.deployed_models:
                kind = topology.model(model_id).kind
                kinds.setdefault(kind, model_id)
            self._kind_index[node.id] = kinds

    def features(self, request: InferenceRequest, state: SystemState) -> FeatureVector:
        category, confidence = self.classifier.classify(request)
        return FeatureVector(
            complexity=complexity_score(request, category, self.complexity),
            predicted_category=category,
            confidence=confidence,
            queue_lengths=state.queue_lengths,
        )

    def route(self, request: InferenceRequest, state: SystemState) -> RoutingDecision:
        g = self.genome
        category, confidence = self.classifier.classify(request)
        c = complexity_score(request, category, self.complexity)
        if category is RequestCategory.CODE and c < g.d_code:
            go_edge = True
        elif category is RequestCategory.MATH and c < g.d_math:
            go_edge = True
        elif c < g.d_general:
            go_edge = True
        else:
            go_edge = False
        if not go_edge:
            node_id, model_id = self._cloud_pair
            return RoutingDecision(node_id, model_id, Reason.CLOUD_COMPLEX)
        candidates = [
            n for n in self._edge_nodes if state.queue_lengths.get(n.id, 0) <= g.q_limit
        ]
        if not candidates:
            node_id, model_id = self._cloud_pair
            return RoutingDecision(node_id, model_id, Reason.CLOUD_FALLBACK_QUEUE)
        if category is RequestCategory.CODE and confidence >= g.t_code:
            kind, reason = ModelKind.CODER, Reason.EDGE_CODE
        elif category is RequestCategory.MATH and confidence >= g.t_math:
            kind, reason = ModelKind.MATH, Reason.EDGE_MATH
        else:
            kind, reason = ModelKind.INSTRUCT, Reason.EDGE_GENERAL
        for node in candidates:
            model_id = self._kind_index[node.id].get(kind)
            if model_id is not None:
                return RoutingDecision(node.id, model_id, reason)
        node_id, model_id = self._cloud_pair
        return RoutingDecision(node_id, model_id, Reason.CLOUD_FALLBACK_QUEUE)


class AssignmentRouter:
    """Replays a fixed request-to-pair table."""

    name = "proposed"

    def __init__(self, genome: AssignmentGenome, topology: Topology) -> None:
        space = set(topology.solution_space())
        for i, pair in enumerate(genome.assignments):
            if pair not in space:
                raise ConfigError(f"assignments[{i}]: pair {pair!r} not in solution space")
        self.genome = genome

    def route(self, request: InferenceRequest, state: SystemState) -> RoutingDecision:
        if not 0 <= request.id < len(self.genome):
            raise ValueError(
                f"request id {request.id} outside assignment table of length {len(self.genome)}"
            )
        node_id, model_id = self.genome.assignments[request.id]
        return RoutingDecision(node_id, model_id, Reason.DIRECT_ASSIGNMENT)


def _model_of_kind(topology: Topology, node: NodeSpec, kind: ModelKind) -> str | None:
    for model_id in node.deployed_models:
        if topology.model(model_id).kind is kind:
            return model_id
    return None


def _typed_model(topology: Topology, node: NodeSpec, category: RequestCategory) -> str:
    """Model on ``node`` for a request's true category, falling back to
    instruct and then to the first deployed model."""
    preferred = KIND_BY_CATEGORY[category]
    model_id = _model_of_kind(topology, node, preferred)
    if model_id is None:
        model_id = _model_of_kind(topology, node, ModelKind.INSTRUCT)
    return model_id if model_id is not None else node.deployed_models[0]


class CloudOnlyRouter:
    name = "cloud_only"

    def __init__(self, topology: Topology) -> None:
        self._pair = topology.cloud_fallback()

    def route(self, request: InferenceRequest, state: SystemState) -> RoutingDecision:
        return RoutingDecision(self._pair[0], self._pair[1], Reason.BASELINE)


class EdgeOnlyRouter:
    """Cycles edge nodes, picking the model type matching the true category."""

    name = "edge_only"

    def __init__(self, topology: Topology) -> None:
        self.topology = topology
        self._edge_nodes = topology.edge_nodes()
        if not self._edge_nodes:
            raise ConfigError("edge_only requires at least one edge node")

    def route(self, request: InferenceRequest, state: SystemState) -> RoutingDecision:
        node = self._edge_nodes[request.id % len(self._edge_nodes)]
        return RoutingDecision(node.id, _typed_model(self.topology, node, request.category), Reason.BASELINE)


class RandomRouter:
    """Uniform over the whole solution space, keyed by (seed, request id)."""

    name = "random"

    def __init__(self, topology: Topology, seed: int) -> None:
        self._space = topology.solution_space()
        self._seed = seed

    def route(self, request: InferenceRequest, state: SystemState) -> RoutingDecision:
        rng = np.random.default_rng(
            np.random.SeedSequence((self._seed, request.id, 0x5A4D))
        )
        node_id, model_id = self._space[int(rng.integers(len(self._space)))]
        return RoutingDecision(node_id, model_id, Reason.BASELINE)


class RoundRobinRouter:
    """Cycles every node (cloud included); model by true type on edge, the
    large model on cloud."""

    name = "round_robin"

    def __init__(self, topology: Topology) -> None:
        self.topology = topology
        self._nodes = topology.nodes

    def route(self, request: InferenceRequest, state: SystemState) -> RoutingDecision:
        node = self._nodes[request.id % len(self._nodes)]
        large = _model_of_kind(self.topology, node, ModelKind.LARGE)
        if large is not None:
            return RoutingDecision(node.id, large, Reason.BASELINE)
        return RoutingDecision(node.id, _typed_model(self.topology, node, request.category), Reason.BASELINE)


BASELINE_NAMES = ("cloud_only", "edge_only", "random", "round_robin")


def make_baseline(name: str, topology: Topology, seed: int):
    if name == "cloud_only":
        return CloudOnlyRouter(topology)
    if name == "edge_only":
        return EdgeOnlyRouter(topology)
    if name == "random":
        return RandomRouter(topology, seed)
    if name == "round_robin":
        return RoundRobinRouter(topology)
    raise ConfigError(f"unknown baseline {name!r}; known: {', '.join(BASELINE_NAMES)}")


# ---------------------------------------------------------------------------
# Policy documents
# ---------------------------------------------------------------------------


def policy_to_document(
    genome: ThresholdGenome | AssignmentGenome,
    classifier: ClassifierConfig = ClassifierConfig(),
    complexity: ComplexityConfig = ComplexityConfig(),
) -> dict[str, Any]:
    if isinstance(genome, AssignmentGenome):
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "assignment",
            "assignments": [list(pair) for pair in genome.assignments],
        }
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "threshold",
        "thresholds": {
            "d_code": genome.d_code,
            "d_math": genome.d_math,
            "d_general": genome.d_general,
            "q_limit": genome.q_limit,
            "t_code": genome.t_code,
            "t_math": genome.t_math,
        },
        "classifier": {
            "noise": classifier.noise,
            "correct_confidence": list(classifier.correct_confidence),
            "wrong_confidence": list(classifier.wrong_confidence),
            "general_confidence_floor": classifier.general_confidence_floor,
        },
        "complexity": {
            "w_length": complexity.w_length,
            "w_sentences": complexity.w_sentences,
            "w_task": complexity.w_task,
            "w_constraint": complexity.w_constraint,
            "length_ref": complexity.length_ref,
            "sentence_ref": complexity.sentence_ref,
            "task_weights": {c.value: w for c, w in complexity.task_weights.items()},
        },
    }


@dataclass(frozen=True)
class PolicyDocument:
    kind: str
    genome: ThresholdGenome | AssignmentGenome
    classifier: ClassifierConfig
    complexity: ComplexityConfig


def policy_from_document(doc: Mapping[str, Any]) -> PolicyDocument:
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"policy: unsupported schema_version {version!r}")
    kind = doc.get("kind", "threshold")
    if kind == "assignment":
        genome: ThresholdGenome | AssignmentGenome = AssignmentGenome(
            tuple((str(n), str(m)) for n, m in doc["assignments"])
        )
        return PolicyDocument(kind, genome, ClassifierConfig(), ComplexityConfig())
    if kind != "threshold":
        raise ConfigError(f"policy.kind: unknown kind {kind!r}")
    t = doc.get("thresholds", {})
    genome = ThresholdGenome(
        d_code=float(t.get("d_code", 0.5)),
        d_math=float(t.get("d_math", 0.5)),
        d_general=float(t.get("d_general", 0.5)),
        q_limit=int(t.get("q_limit", 5)),
        t_code=float(t.get("t_code", 0.7)),
        t_math=float(t.get("t_math", 0.7)),
    )
    cdoc = doc.get("classifier", {})
    classifier = ClassifierConfig(
        noise=float(cdoc.get("noise", 0.1)),
        correct_confidence=tuple(cdoc.get("correct_confidence", (8.0, 2.0))),
        wrong_confidence=tuple(cdoc.get("wrong_confidence", (2.0, 2.0))),
        general_confidence_floor=float(cdoc.get("general_confidence_floor", 0.0)),
    )
    xdoc = doc.get("complexity", {})
    task_weights = dict(ComplexityConfig().task_weights)
    for key, value in xdoc.get("task_weights", {}).items():
        try:
            task_weights[RequestCategory(key)] = float(value)
        except ValueError:
            raise ConfigError(f"complexity.task_weights: unknown category {key!r}") from None
    complexity = ComplexityConfig(
        w_length=float(xdoc.get("w_length", 0.4)),
        w_sentences=float(xdoc.get("w_sentences", 0.2)),
        w_task=float(xdoc.get("w_task", 0.3)),
        w_constraint=float(xdoc.get("w_constraint", 0.1)),
        length_ref=float(xdoc.get("length_ref", 512.0)),
        sentence_ref=float(xdoc.get("sentence_ref", 20.0)),
        task_weights=task_weights,
    )
    return PolicyDocument(kind, genome, classifier, complexity)


def load_policy(path: str | Path) -> PolicyDocument:
    with open(path, encoding="utf-8") as handle:
        return policy_from_document(json.load(handle))


def save_policy(
    genome: ThresholdGenome | AssignmentGenome,
    path: str | Path,
    classifier: ClassifierConfig = ClassifierConfig(),
    complexity: ComplexityConfig = ComplexityConfig(),
) -> None:
    doc = policy_to_document(genome, classifier, complexity)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def router_from_policy(policy: PolicyDocument, topology: Topology, seed: int):
    if isinstance(policy.genome, AssignmentGenome):
        return AssignmentRouter(policy.genome, topology)
    classifier = TaskClassifier(policy.classifier, seed)
    return ThresholdRouter(policy.genome, topology, classifier, policy.complexity)
