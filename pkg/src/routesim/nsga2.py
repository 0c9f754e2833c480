"""Elitist multi-objective genetic engine with non-dominated sorting and
crowding distance, plus the two routing genome representations it evolves.

The engine is representation-agnostic: genomes are opaque hashable values
manipulated through a ``GenomeOps`` bundle, and objectives are plain tuples
of floats, all minimized. Determinism contract: every random draw comes from
a substream keyed by (seed, generation, slot), so results are bit-identical
whether fitness evaluations run serially or on a thread pool.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .domain import InferenceRequest, NodeTier, Topology
from .metrics import ObjectiveVector, Weights, scalarize

Objectives = tuple[float, ...]


class EvaluationError(RuntimeError):
    """An evaluator produced non-finite objectives; the run cannot continue."""


def _substream(seed: int, generation: int, slot: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, generation, slot)))


# ---------------------------------------------------------------------------
# Dominance machinery
# ---------------------------------------------------------------------------


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """True iff ``a`` is no worse than ``b`` everywhere and better somewhere."""
    better = False
    for x, y in zip(a, b):
        if x > y:
            return False
        if x < y:
            better = True
    return better


def non_dominated_sort(objectives: Sequence[Sequence[float]]) -> list[list[int]]:
    """Partition indices into Pareto fronts (front 0 = non-dominated).

    Within each front, indices keep input order.
    """
    n = len(objectives)
    if n == 0:
        raise ValueError("non_dominated_sort requires at least one point")
    dominated_by: list[list[int]] = [[] for _ in range(n)]
    domination_count = [0] * n
    fronts: list[list[int]] = [[]]
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if dominates(objectives[i], objectives[j]):
                dominated_by[i].append(j)
            elif dominates(objectives[j], objectives[i]):
                domination_count[i] += 1
        if domination_count[i] == 0:
            fronts[0].append(i)
    current = 0
    while fronts[current]:
        nxt: list[int] = []
        for i in fronts[current]:
            for j in dominated_by[i]:
                domination_count[j] -= 1
                if domination_count[j] == 0:
                    nxt.append(j)
        current += 1
        fronts.append(nxt)
    fronts.pop()
    for front in fronts:
        front.sort()
    return fronts


def crowding_distance(front_objectives: Sequence[Sequence[float]]) -> list[float]:
    """Per-objective normalized neighbor-gap sums; boundaries get +inf."""
    n = len(front_objectives)
    if n == 0:
        raise ValueError("crowding_distance requires a nonempty front")
    distances = [0.0] * n
    n_obj = len(front_objectives[0])
    for m in range(n_obj):
        order = sorted(range(n), key=lambda i: front_objectives[i][m])
        lo = front_objectives[order[0]][m]
        hi = front_objectives[order[-1]][m]
        distances[order[0]] = math.inf
        distances[order[-1]] = math.inf
        if hi == lo:
            continue
        for k in range(1, n - 1):
            i = order[k]
            if distances[i] == math.inf:
                continue
            prev_v = front_objectives[order[k - 1]][m]
            next_v = front_objectives[order[k + 1]][m]
            distances[i] += (next_v - prev_v) / (hi - lo)
    return distances


@dataclass(frozen=True)
class RankedIndividual:
    genome: object
    objectives: Objectives
    front_rank: int
    crowding: float


def binary_tournament(population: Sequence[RankedIndividual], rng: np.random.Generator) -> int:
    """Pick the better of two uniformly drawn indices: lower rank wins, then
    larger crowding, then the first drawn."""
    n = len(population)
    i = int(rng.integers(n))
    j = int(rng.integers(n))
    a, b = population[i], population[j]
    if a.front_rank != b.front_rank:
        return i if a.front_rank < b.front_rank else j
    if a.crowding != b.crowding:
        return i if a.crowding > b.crowding else j
    return i


# ---------------------------------------------------------------------------
# Genomes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AssignmentGenome:
    """A full routing table: one (node_id, model_id) pair per request id."""

    assignments: tuple[tuple[str, str], ...]

    def __len__(self) -> int:
        return len(self.assignments)


DEFAULT_QUEUE_GENE_MAX = 64

#: Bounds of the six threshold genes (the queue gene is an integer).
THRESHOLD_GENE_NAMES = ("d_code", "d_math", "d_general", "q_limit", "t_code", "t_math")


@dataclass(frozen=True)
class ThresholdGenome:
    """Decision variables of the rule-based runtime router: three complexity
    cutoffs, a queue-length cap, and two classifier-confidence cutoffs."""

    d_code: float
    d_math: float
    d_general: float
    q_limit: int
    t_code: float
    t_math: float

    def as_vector(self) -> tuple[float, ...]:
        return (self.d_code, self.d_math, self.d_general, float(self.q_limit), self.t_code, self.t_math)

    @classmethod
    def from_vector(cls, vector: Sequence[float], q_max: int = DEFAULT_QUEUE_GENE_MAX) -> "ThresholdGenome":
        clip = lambda v: min(1.0, max(0.0, float(v)))
        q = int(round(vector[3]))
        return cls(
            d_code=clip(vector[0]),
            d_math=clip(vector[1]),
            d_general=clip(vector[2]),
            q_limit=min(q_max, max(0, q)),
            t_code=clip(vector[4]),
            t_math=clip(vector[5]),
        )


#: Starting point before any optimization runs.
DEFAULT_THRESHOLDS = ThresholdGenome(
    d_code=0.5, d_math=0.5, d_general=0.5, q_limit=5, t_code=0.7, t_math=0.7
)


# ---------------------------------------------------------------------------
# Variation operators
# ---------------------------------------------------------------------------


def crossover_assignment(
    a: AssignmentGenome,
    b: AssignmentGenome,
    rng: np.random.Generator,
    p_cx: float,
) -> tuple[AssignmentGenome, AssignmentGenome]:
    """Uniform crossover with probability ``p_cx``; otherwise copies."""
    if len(a) != len(b):
        raise ValueError(f"genome length mismatch: {len(a)} != {len(b)}")
    if rng.random() >= p_cx:
        return a, b
    left = list(a.assignments)
    right = list(b.assignments)
    for i in range(len(left)):
        if rng.random() < 0.5:
            left[i], right[i] = right[i], left[i]
    return AssignmentGenome(tuple(left)), AssignmentGenome(tuple(right))


def resample_positions(rng: np.random.Generator, length: int, fraction: float) -> np.ndarray:
    """The ceil(fraction * length) distinct positions a mutation touches."""
    count = min(length, math.ceil(fraction * length))
    return rng.choice(length, size=count, replace=False)


def mutate_assignment(
    genome: AssignmentGenome,
    rng: np.random.Generator,
    p_mut: float,
    fraction: float,
    solution_space: Sequence[tuple[str, str]],
) -> AssignmentGenome:
    """With probability ``p_mut``, reassign a fraction of positions to
    uniformly random valid pairs."""
    if not solution_space:
        raise ValueError("solution space must be nonempty")
    if rng.random() >= p_mut:
        return genome
    assignments = list(genome.assignments)
    for i in resample_positions(rng, len(assignments), fraction):
        assignments[i] = solution_space[int(rng.integers(len(solution_space)))]
    return AssignmentGenome(tuple(assignments))


def sbx_vector(
    a: Sequence[float],
    b: Sequence[float],
    bounds: Sequence[tuple[float, float]],
    rng: np.random.Generator,
    eta: float,
) -> tuple[list[float], list[float]]:
    """Simulated binary crossover on real vectors, clamped to bounds."""
    child1, child2 = list(a), list(b)
    for i, (lo, hi) in enumerate(bounds):
        if rng.random() >= 0.5:
            continue
        u = rng.random()
        if u <= 0.5:
            beta = (2.0 * u) ** (1.0 / (eta + 1.0))
        else:
            beta = (1.0 / (2.0 * (1.0 - u))) ** (1.0 / (eta + 1.0))
        x1, x2 = a[i], b[i]
        c1 = 0.5 * ((1.0 + beta) * x1 + (1.0 - beta) * x2)
        c2 = 0.5 * ((1.0 - beta) * x1 + (1.0 + beta) * x2)
        child1[i] = min(hi, max(lo, c1))
        child2[i] = min(hi, max(lo, c2))
    return child1, child2


def polynomial_mutation_vector(
    vector: Sequence[float],
    bounds: Sequence[tuple[float, float]],
    rng: np.random.Generator,
    eta: float,
    per_gene_rate: float,
) -> list[float]:
    """Polynomial mutation on a real vector, clamped to bounds."""
    out = list(vector)
    for i, (lo, hi) in enumerate(bounds):
        if rng.random() >= per_gene_rate:
            continue
        u = rng.random()
        if u < 0.5:
            delta = (2.0 * u) ** (1.0 / (eta + 1.0)) - 1.0
        else:
            delta = 1.0 - (2.0 * (1.0 - u)) ** (1.0 / (eta + 1.0))
        out[i] = min(hi, max(lo, vector[i] + delta * (hi - lo)))
    return out


def _threshold_bounds(q_max: int) -> list[tuple[float, float]]:
    return [(0.0, 1.0), (0.0, 1.0), (0.0, 1.0), (0.0, float(q_max)), (0.0, 1.0), (0.0, 1.0)]


def crossover_threshold(
    a: ThresholdGenome,
    b: ThresholdGenome,
    rng: np.random.Generator,
    p_cx: float,
    eta: float = 15.0,
    q_max: int = DEFAULT_QUEUE_GENE_MAX,
) -> tuple[ThresholdGenome, ThresholdGenome]:
    if rng.random() >= p_cx:
        return a, b
    v1, v2 = sbx_vector(a.as_vector(), b.as_vector(), _threshold_bounds(q_max), rng, eta)
    return ThresholdGenome.from_vector(v1, q_max), ThresholdGenome.from_vector(v2, q_max)


def mutate_threshold(
    genome: ThresholdGenome,
    rng: np.random.Generator,
    p_mut: float,
    eta: float = 20.0,
    q_max: int = DEFAULT_QUEUE_GENE_MAX,
) -> ThresholdGenome:
    if rng.random() >= p_mut:
        return genome
    vector = polynomial_mutation_vector(
        genome.as_vector(),
        _threshold_bounds(q_max),
        rng,
        eta,
        per_gene_rate=1.0 / len(THRESHOLD_GENE_NAMES),
    )
    return ThresholdGenome.from_vector(vector, q_max)


# ---------------------------------------------------------------------------
# Engine configuration and genome op bundles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvolutionConfig:
    population_size: int = 100
    generations: int = 100
    crossover_probability: float = 0.8
    mutation_probability: float = 0.1
    seed: int = 0
    mutation_fraction: float = 0.1
    sbx_eta: float = 15.0
    pm_eta: float = 20.0
    workers: int = 0  # 0 or 1 = serial evaluation

    def validate(self) -> None:
        if self.population_size < 4 or self.population_size % 2 != 0:
            raise ValueError("population_size must be even and >= 4")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        for name in ("crossover_probability", "mutation_probability"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} out of [0, 1]")
        if not 0.0 < self.mutation_fraction <= 1.0:
            raise ValueError("mutation_fraction must be in (0, 1]")
        if self.sbx_eta <= 0 or self.pm_eta <= 0:
            raise ValueError("distribution indices must be > 0")


@dataclass(frozen=True)
class GenomeOps:
    """Representation bundle consumed by ``evolve``. Crossover and mutation
    already embed their trigger probabilities."""

    random: Callable[[np.random.Generator], object]
    crossover: Callable[[object, object, np.random.Generator], tuple[object, object]]
    mutate: Callable[[object, np.random.Generator], object]


def threshold_ops(config: EvolutionConfig, q_max: int = DEFAULT_QUEUE_GENE_MAX) -> GenomeOps:
    def random(rng: np.random.Generator) -> ThresholdGenome:
        vector = [rng.uniform(lo, hi) for lo, hi in _threshold_bounds(q_max)]
        return ThresholdGenome.from_vector(vector, q_max)

    return GenomeOps(
        random=random,
        crossover=lambda a, b, rng: crossover_threshold(
            a, b, rng, config.crossover_probability, config.sbx_eta, q_max
        ),
        mutate=lambda g, rng: mutate_threshold(
            g, rng, config.mutation_probability, config.pm_eta, q_max
        ),
    )


def assignment_ops(
    config: EvolutionConfig,
    topology: Topology,
    requests: Sequence[InferenceRequest],
    edge_bias: float = 0.7,
) -> GenomeOps:
    """Ops for the per-request assignment representation.

    Initialization is edge-biased for requests with below-median prompt
    length (probability ``edge_bias``), uniform over all valid pairs
    otherwise.
    """
    space = topology.solution_space()
    edge_pairs = tuple(
        (n, m) for n, m in space if topology.node(n).tier is NodeTier.EDGE
    )
    median_prompt = float(np.median([r.prompt_tokens for r in requests])) if requests else 0.0

    def random(rng: np.random.Generator) -> AssignmentGenome:
        assignments = []
        for request in requests:
            if edge_pairs and request.prompt_tokens < median_prompt and rng.random() < edge_bias:
                assignments.append(edge_pairs[int(rng.integers(len(edge_pairs)))])
            else:
                assignments.append(space[int(rng.integers(len(space)))])
        return AssignmentGenome(tuple(assignments))

    return GenomeOps(
        random=random,
        crossover=lambda a, b, rng: crossover_assignment(a, b, rng, config.crossover_probability),
        mutate=lambda g, rng: mutate_assignment(
            g, rng, config.mutation_probability, config.mutation_fraction, space
        ),
    )


# ---------------------------------------------------------------------------
# Hypervolume (exact, 2 or 3 objectives, minimization)
# ---------------------------------------------------------------------------


def _nondominated(points: Sequence[Objectives]) -> list[Objectives]:
    kept: list[Objectives] = []
    for p in points:
        if any(dominates(q, p) or q == p for q in kept):
            continue
        kept = [q for q in kept if not dominates(p, q)]
        kept.append(p)
    return kept


def _hv2(points: list[Objectives], ref: Objectives) -> float:
    front = sorted(_nondominated(points))
    volume = 0.0
    for i, (x, y) in enumerate(front):
        next_x = front[i + 1][0] if i + 1 < len(front) else ref[0]
        volume += (next_x - x) * (ref[1] - y)
    return volume


def hypervolume(points: Iterable[Sequence[float]], reference: Sequence[float]) -> float:
    """Volume dominated by ``points`` and bounded by ``reference`` (all
    objectives minimized). Points not strictly better than the reference in
    every coordinate are ignored."""
    ref = tuple(float(r) for r in reference)
    pts = [tuple(float(v) for v in p) for p in points]
    pts = [p for p in pts if all(v < r for v, r in zip(p, ref))]
    if not pts:
        return 0.0
    if len(ref) == 2:
        return _hv2(pts, ref)
    if len(ref) != 3:
        raise ValueError("hypervolume supports 2 or 3 objectives")
    # Sweep the third axis: between consecutive z-levels, accumulate the 2D
    # area of everything at or below the slab.
    pts = _nondominated(pts)
    zs = sorted({p[2] for p in pts})
    volume = 0.0
    for k, z in enumerate(zs):
        z_next = zs[k + 1] if k + 1 < len(zs) else ref[2]
        slab = [(p[0], p[1]) for p in pts if p[2] <= z]
        volume += _hv2(slab, (ref[0], ref[1])) * (z_next - z)
    return volume


# ---------------------------------------------------------------------------
# The evolutionary loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    front_size: int
    best_scalar: float
    hypervolume: float


@dataclass
class EvolutionResult:
    pareto: list[tuple[object, Objectives]]
    history: list[GenerationStats] = field(default_factory=list)


def _as_objectives(value: object) -> Objectives:
    if isinstance(value, ObjectiveVector):
        return value.as_tuple()
    return tuple(float(v) for v in value)  # type: ignore[arg-type]


def _evaluate_all(
    genomes: Sequence[object],
    evaluator: Callable[[object], object],
    workers: int,
) -> list[Objectives]:
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(evaluator, genomes))
    else:
        raw = [evaluator(g) for g in genomes]
    results = []
    for genome, value in zip(genomes, raw):
        objs = _as_objectives(value)
        if not all(math.isfinite(v) for v in objs):
            raise EvaluationError(f"non-finite objectives {objs} for genome {genome!r}")
        results.append(objs)
    return results


class _Archive:
    """All-time non-dominated set, keyed by genome (first seen wins).

    Objective-space duplicates from distinct genomes are kept; genome
    duplicates are not.
    """

    def __init__(self) -> None:
        self._entries: dict[object, Objectives] = {}

    def update(self, genomes: Sequence[object], objectives: Sequence[Objectives]) -> None:
        for genome, objs in zip(genomes, objectives):
            if genome in self._entries:
                continue
            if any(dominates(kept, objs) for kept in self._entries.values()):
                continue
            self._entries = {
                g: o for g, o in self._entries.items() if not dominates(objs, o)
            }
            self._entries[genome] = objs

    def items(self) -> list[tuple[object, Objectives]]:
        return list(self._entries.items())

    def objectives(self) -> list[Objectives]:
        return list(self._entries.values())


def _truncate(
    genomes: list[object],
    objectives: list[Objectives],
    size: int,
) -> tuple[list[object], list[Objectives]]:
    fronts = non_dominated_sort(objectives)
    chosen: list[int] = []
    for front in fronts:
        if len(chosen) + len(front) <= size:
            chosen.extend(front)
            continue
        crowd = crowding_distance([objectives[i] for i in front])
        order = sorted(range(len(front)), key=lambda k: (-crowd[k], k))
        chosen.extend(front[k] for k in order[: size - len(chosen)])
        break
    return [genomes[i] for i in chosen], [objectives[i] for i in chosen]


def _front_best_scalar(front_objs: Sequence[Objectives]) -> float:
    n_obj = len(front_objs[0])
    lows = [min(o[m] for o in front_objs) for m in range(n_obj)]
    highs = [max(o[m] for o in front_objs) for m in range(n_obj)]
    best = math.inf
    for objs in front_objs:
        total = 0.0
        for m in range(n_obj):
            span = highs[m] - lows[m]
            total += 0.0 if span == 0 else (objs[m] - lows[m]) / span
        best = min(best, total / n_obj)
    return best


def evolve(
    config: EvolutionConfig,
    evaluator: Callable[[object], object],
    ops: GenomeOps,
    progress: Callable[[GenerationStats], None] | None = None,
) -> EvolutionResult:
    """Run the full generational loop and return the non-dominated set.

    The returned set is the all-time archive of non-dominated (genome,
    objectives) pairs, deduplicated by genome; with a deterministic evaluator
    it can only improve from one generation to the next.
    """
    config.validate()
    population = [
        ops.random(_substream(config.seed, 0, i)) for i in range(config.population_size)
    ]
    objectives = _evaluate_all(population, evaluator, config.workers)
    archive = _Archive()
    archive.update(population, objectives)

    # Reference point fixed from the initial sample so hypervolume values are
    # comparable across generations.
    n_obj = len(objectives[0])
    reference = tuple(
        max(o[m] for o in objectives) + 0.05 * max(1.0, abs(max(o[m] for o in objectives)))
        for m in range(n_obj)
    )

    history: list[GenerationStats] = []

    def record(generation: int) -> None:
        front_objs = archive.objectives()
        stats = GenerationStats(
            generation=generation,
            front_size=len(front_objs),
            best_scalar=_front_best_scalar(front_objs),
            hypervolume=hypervolume(front_objs, reference),
        )
        history.append(stats)
        if progress is not None:
            progress(stats)

    record(0)
    for generation in range(1, config.generations + 1):
        fronts = non_dominated_sort(objectives)
        rank = [0] * len(population)
        crowd = [0.0] * len(population)
        for front_rank, front in enumerate(fronts):
            distances = crowding_distance([objectives[i] for i in front])
            for i, d in zip(front, distances):
                rank[i] = front_rank
                crowd[i] = d
        ranked = [
            RankedIndividual(population[i], objectives[i], rank[i], crowd[i])
            for i in range(len(population))
        ]
        offspring: list[object] = []
        for slot in range(config.population_size // 2):
            rng = _substream(config.seed, generation, slot)
            first = binary_tournament(ranked, rng)
            second = binary_tournament(ranked, rng)
            child1, child2 = ops.crossover(population[first], population[second], rng)
            offspring.append(ops.mutate(child1, rng))
            offspring.append(ops.mutate(child2, rng))
        offspring_objs = _evaluate_all(offspring, evaluator, config.workers)
        population, objectives = _truncate(
            population + offspring, objectives + offspring_objs, config.population_size
        )
        archive.update(offspring, offspring_objs)
        record(generation)
    return EvolutionResult(pareto=archive.items(), history=history)


def select_policy(
    pareto: Sequence[tuple[object, Sequence[float]]],
    weights: Weights,
) -> object:
    """Pick the genome minimizing the weighted sum of min-max-normalized
    objectives; ties break toward the lowest index."""
    if not pareto:
        raise ValueError("select_policy requires a nonempty Pareto set")
    objs = [_as_objectives(o) for _, o in pareto]
    lows = [min(o[m] for o in objs) for m in range(3)]
    highs = [max(o[m] for o in objs) for m in range(3)]

    def normalized(o: Objectives) -> ObjectiveVector:
        parts = []
        for m in range(3):
            span = highs[m] - lows[m]
            parts.append(0.0 if span == 0 else (o[m] - lows[m]) / span)
        return ObjectiveVector(*parts)

    best_index = min(
        range(len(pareto)), key=lambda i: (scalarize(normalized(objs[i]), weights), i)
    )
    return pareto[best_index][0]
