"""routesim: multi-objective optimization and simulation of LLM request
routing across cloud and edge nodes."""

from .domain import (
    ConfigError,
    InferenceRequest,
    ModelKind,
    ModelSpec,
    NodeSpec,
    NodeTier,
    QualityProfile,
    RequestCategory,
    Topology,
    WorkloadSpec,
    generate_workload,
    load_topology,
    save_topology,
)
from .metrics import (
    ObjectiveVector,
    RouterSummary,
    RtBreakdown,
    Weights,
    inference_cost_metric,
    overall_scores,
    response_quality_metric,
    response_time_i,
    response_time_metric,
    scalarize,
)
from .nsga2 import (
    AssignmentGenome,
    EvolutionConfig,
    EvolutionResult,
    ThresholdGenome,
    crowding_distance,
    dominates,
    evolve,
    hypervolume,
    non_dominated_sort,
    select_policy,
)
from .routers import (
    ClassifierConfig,
    ComplexityConfig,
    RoutingDecision,
    SystemState,
    TaskClassifier,
    ThresholdRouter,
    complexity_score,
    make_baseline,
)
from .sim import (
    QualityOracle,
    SimConfig,
    Simulation,
    SimulationResult,
    TraceRecord,
    infer_time,
    run_simulation,
)

__version__ = "0.1.0"
