"""Command-line entry points: optimize policies, run simulations, compare
routers, and render reports.

One manifest file drives every subcommand so an experiment is a single
reviewable artifact; flags override individual manifest fields. Outputs are
write-once per directory: a command refuses to overwrite files from an
earlier run. Exit codes: 0 success, 2 usage/config errors, 3 runtime aborts.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from .domain import (
    ConfigError,
    RequestCategory,
    Topology,
    WorkloadSpec,
    generate_workload,
    load_topology,
    load_workload_spec,
    workload_from_document,
)
from .metrics import (
    ObjectiveVector,
    RouterSummary,
    Weights,
    format_float,
    overall_scores,
    read_summary_csv,
    write_summary_csv,
)
from .nsga2 import (
    AssignmentGenome,
    EvaluationError,
    EvolutionConfig,
    GenerationStats,
    ThresholdGenome,
    assignment_ops,
    evolve,
    select_policy,
    threshold_ops,
)
from .routers import (
    BASELINE_NAMES,
    ClassifierConfig,
    ComplexityConfig,
    TaskClassifier,
    ThresholdRouter,
    AssignmentRouter,
    load_policy,
    make_baseline,
    policy_to_document,
    router_from_policy,
    save_policy,
)
from .sim import SimConfig, SimulationError, quality_by_category, run_simulation, write_trace
from . import plots

CATEGORY_COLUMNS = ("code", "math", "reading", "commonsense")


@dataclass(frozen=True)
class RouterRef:
    name: str
    policy_path: Path | None = None


@dataclass
class ExperimentManifest:
    topology_path: Path
    workload: WorkloadSpec
    routers: list[RouterRef]
    weights: Weights
    concurrency_levels: list[int]
    seed: int
    evolution: EvolutionConfig
    genome_kind: str = "threshold"
    topology: Topology = field(init=False)

    def __post_init__(self) -> None:
        self.topology = load_topology(self.topology_path)
        if not self.routers:
            raise ConfigError("manifest: at least one router is required")
        for level in self.concurrency_levels:
            if level < 1:
                raise ConfigError("manifest: concurrency levels must be >= 1")


def load_manifest(path: str | Path) -> ExperimentManifest:
    path = Path(path)
    with open(path, encoding="utf-8") as handle:
        doc: Mapping[str, Any] = json.load(handle)
    if doc.get("schema_version") != 1:
        raise ConfigError(f"manifest: unsupported schema_version {doc.get('schema_version')!r}")
    base = path.parent

    def resolve(p: str) -> Path:
        candidate = Path(p)
        return candidate if candidate.is_absolute() else base / candidate

    topology_path = resolve(str(doc.get("topology", "topology.json")))
    if not topology_path.exists():
        raise ConfigError(f"manifest: topology file not found: {topology_path}")
    workload_field = doc.get("workload", "workload.json")
    if isinstance(workload_field, str):
        workload_path = resolve(workload_field)
        if not workload_path.exists():
            raise ConfigError(f"manifest: workload file not found: {workload_path}")
        workload = load_workload_spec(workload_path)
    else:
        workload = workload_from_document(workload_field)
    routers = []
    for entry in doc.get("routers", list(BASELINE_NAMES)):
        if isinstance(entry, str):
            routers.append(RouterRef(entry))
        else:
            policy = entry.get("policy")
            routers.append(
                RouterRef(str(entry["name"]), resolve(policy) if policy else None)
            )
    weights_doc = doc.get("weights", {})
    weights = Weights(
        w_quality=float(weights_doc.get("quality", 1.0 / 3.0)),
        w_cost=float(weights_doc.get("cost", 1.0 / 3.0)),
        w_time=float(weights_doc.get("time", 1.0 / 3.0)),
    )
    evo_doc = doc.get("evolution", {})
    evolution = EvolutionConfig(
        population_size=int(evo_doc.get("population_size", 100)),
        generations=int(evo_doc.get("generations", 100)),
        crossover_probability=float(evo_doc.get("crossover_probability", 0.8)),
        mutation_probability=float(evo_doc.get("mutation_probability", 0.1)),
        seed=int(doc.get("seed", 0)),
        mutation_fraction=float(evo_doc.get("mutation_fraction", 0.1)),
        sbx_eta=float(evo_doc.get("sbx_eta", 15.0)),
        pm_eta=float(evo_doc.get("pm_eta", 20.0)),
        workers=int(evo_doc.get("workers", 0)),
    )
    return ExperimentManifest(
        topology_path=topology_path,
        workload=workload,
        routers=routers,
        weights=weights,
        concurrency_levels=[int(v) for v in doc.get("concurrency_levels", [1])],
        seed=int(doc.get("seed", 0)),
        evolution=evolution,
        genome_kind=str(evo_doc.get("genome", "threshold")),
    )


def _reseed_workload(workload: WorkloadSpec, seed: int) -> WorkloadSpec:
    from dataclasses import replace

    return replace(workload, seed=seed)


def resolve_router(manifest: ExperimentManifest, name: str, seed: int):
    for ref in manifest.routers:
        if ref.name == name:
            if ref.policy_path is None:
                return make_baseline(name, manifest.topology, seed)
            return router_from_policy(load_policy(ref.policy_path), manifest.topology, seed)
    if name in BASELINE_NAMES:
        return make_baseline(name, manifest.topology, seed)
    known = sorted({ref.name for ref in manifest.routers} | set(BASELINE_NAMES))
    raise ConfigError(f"unknown router {name!r}; known routers: {', '.join(known)}")


def _prepare_outputs(out_dir: Path, filenames: Sequence[str]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for filename in filenames:
        target = out_dir / filename
        if target.exists():
            raise ConfigError(f"refusing to overwrite existing output: {target}")


# ---------------------------------------------------------------------------
# optimize
# ---------------------------------------------------------------------------


def make_evaluator(
    topology: Topology,
    workload: WorkloadSpec,
    seed: int,
    concurrency: int = 1,
    classifier_config: ClassifierConfig = ClassifierConfig(),
    complexity_config: ComplexityConfig = ComplexityConfig(),
):
    """Genome -> raw (rq, cost, rt) via one seeded simulation.

    The request list, classifier draws, and quality draws are shared across
    evaluations so that genomes differ only by their routing behavior.
    """
    requests = generate_workload(workload)
    classifier = TaskClassifier(classifier_config, seed)
    config = SimConfig(topology=topology, requests=requests, concurrency=concurrency, seed=seed)

    def evaluate(genome) -> ObjectiveVector:
        if isinstance(genome, AssignmentGenome):
            router = AssignmentRouter(genome, topology)
        else:
            router = ThresholdRouter(genome, topology, classifier, complexity_config)
        summary = run_simulation(config, router).summary
        return ObjectiveVector(
            rq=1.0 - summary.avg_quality,
            cost=summary.avg_cost,
            rt=summary.avg_response_time,
        )

    return evaluate


def cmd_optimize(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    seed = manifest.seed if args.seed is None else args.seed
    out_dir = Path(args.out) if args.out else Path("out-optimize")
    _prepare_outputs(out_dir, ["pareto.json", "policy.json"])
    from dataclasses import replace

    evolution = replace(
        manifest.evolution,
        seed=seed,
        population_size=args.population or manifest.evolution.population_size,
        generations=args.generations or manifest.evolution.generations,
        workers=manifest.evolution.workers if args.workers is None else args.workers,
    )
    genome_kind = args.genome or manifest.genome_kind
    workload = _reseed_workload(manifest.workload, seed)
    evaluator = make_evaluator(manifest.topology, workload, seed)
    if genome_kind == "assignment":
        requests = generate_workload(workload)
        ops = assignment_ops(evolution, manifest.topology, requests)
    elif genome_kind == "threshold":
        ops = threshold_ops(evolution)
    else:
        raise ConfigError(f"unknown genome kind {genome_kind!r}")

    def progress(stats: GenerationStats) -> None:
        print(
            f"gen {stats.generation:4d}  front={stats.front_size:4d}  "
            f"best={stats.best_scalar:.6f}  hv={stats.hypervolume:.6g}"
        )

    result = evolve(evolution, evaluator, ops, progress=progress)
    selected = select_policy(result.pareto, manifest.weights)
    pareto_doc = {
        "schema_version": 1,
        "genome_kind": genome_kind,
        "entries": [
            {
                "genome": policy_to_document(genome)["thresholds"]
                if isinstance(genome, ThresholdGenome)
                else [list(p) for p in genome.assignments],
                "objectives": {"rq": objs[0], "cost": objs[1], "rt": objs[2]},
            }
            for genome, objs in result.pareto
        ],
        "history": [
            {
                "generation": s.generation,
                "front_size": s.front_size,
                "best_scalar": s.best_scalar,
                "hypervolume": s.hypervolume,
            }
            for s in result.history
        ],
    }
    (out_dir / "pareto.json").write_text(
        json.dumps(pareto_doc, indent=2) + "\n", encoding="utf-8"
    )
    save_policy(selected, out_dir / "policy.json")
    print(f"pareto set: {len(result.pareto)} policies -> {out_dir / 'pareto.json'}")
    print(f"selected policy -> {out_dir / 'policy.json'}")
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    seed = manifest.seed if args.seed is None else args.seed
    levels = [args.concurrency] if args.concurrency else manifest.concurrency_levels
    out_dir = Path(args.out) if args.out else Path("out-simulate")
    filenames = []
    for level in levels:
        filenames += [f"trace-{args.router}-c{level}.jsonl", f"summary-c{level}.csv"]
    _prepare_outputs(out_dir, filenames)
    workload = _reseed_workload(manifest.workload, seed)
    requests = generate_workload(workload)
    for level in levels:
        router = resolve_router(manifest, args.router, seed)
        config = SimConfig(
            topology=manifest.topology, requests=requests, concurrency=level, seed=seed
        )
        result = run_simulation(config, router, router_name=args.router)
        write_trace(result.records, out_dir / f"trace-{args.router}-c{level}.jsonl")
        write_summary_csv([result.summary], out_dir / f"summary-c{level}.csv")
        print(
            f"{args.router} c={level}: quality={result.summary.avg_quality:.4f} "
            f"rt={result.summary.avg_response_time:.4f}s cost={result.summary.avg_cost:.3e} "
            f"overflows={result.overflow_count}"
        )
    return 0


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------


def cmd_compare(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    if len(manifest.routers) < 2:
        raise ConfigError("compare requires at least two routers in the manifest")
    seed = manifest.seed if args.seed is None else args.seed
    concurrency = args.concurrency or 1
    out_dir = Path(args.out) if args.out else Path("out-compare")
    filenames = ["summary.csv", "quality-by-category.csv"] + [
        f"trace-{ref.name}.jsonl" for ref in manifest.routers
    ]
    _prepare_outputs(out_dir, filenames)
    workload = _reseed_workload(manifest.workload, seed)
    requests = generate_workload(workload)
    summaries: list[RouterSummary] = []
    matrix_rows = []
    for ref in manifest.routers:
        router = resolve_router(manifest, ref.name, seed)
        config = SimConfig(
            topology=manifest.topology, requests=requests, concurrency=concurrency, seed=seed
        )
        result = run_simulation(config, router, router_name=ref.name)
        write_trace(result.records, out_dir / f"trace-{ref.name}.jsonl")
        summaries.append(result.summary)
        by_category = quality_by_category(result.records)
        matrix_rows.append(
            [ref.name]
            + [
                format_float(by_category.get(RequestCategory(c), 0.0))
                for c in CATEGORY_COLUMNS
            ]
        )
    scored = overall_scores(summaries)
    write_summary_csv(scored, out_dir / "summary.csv")
    with open(out_dir / "quality-by-category.csv", "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["router", *CATEGORY_COLUMNS])
        writer.writerows(matrix_rows)
    for summary in scored:
        print(
            f"{summary.router_name:>12}: quality={summary.avg_quality:.4f} "
            f"rt={summary.avg_response_time:.4f}s cost={summary.avg_cost:.3e} "
            f"overall={summary.overall:.4f}"
        )
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def cmd_report(args: argparse.Namespace) -> int:
    results_dir = Path(args.results)
    if not results_dir.is_dir():
        raise ConfigError(f"results directory not found: {results_dir}")
    out_dir = Path(args.out) if args.out else results_dir / "report"
    summary_path = results_dir / "summary.csv"
    sweep_paths = sorted(
        results_dir.glob("summary-c*.csv"),
        key=lambda p: int(p.stem.split("-c")[-1]),
    )
    if not summary_path.exists() and not sweep_paths:
        raise ConfigError(f"missing input: {summary_path}")
    outputs = ["tradeoff.csv", "tradeoff.png"]
    matrix_path = results_dir / "quality-by-category.csv"
    if matrix_path.exists():
        outputs += ["quality_matrix.csv", "quality_matrix.png"]
    if sweep_paths:
        outputs += ["concurrency.csv", "concurrency.png"]
    _prepare_outputs(out_dir, outputs)

    if summary_path.exists():
        tradeoff = [
            (s.router_name, s.avg_quality, s.avg_response_time, s.avg_cost)
            for s in read_summary_csv(summary_path)
        ]
    else:
        tradeoff = []
        for path in sweep_paths:
            level = int(path.stem.split("-c")[-1])
            for s in read_summary_csv(path):
                tradeoff.append(
                    (f"{s.router_name}@c{level}", s.avg_quality, s.avg_response_time, s.avg_cost)
                )
    with open(out_dir / "tradeoff.csv", "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["router", "avg_quality", "avg_response_time", "avg_cost"])
        for name, quality, rt, cost in tradeoff:
            writer.writerow([name, format_float(quality), format_float(rt), format_float(cost)])
    plots.plot_tradeoff(tradeoff, out_dir / "tradeoff.png")
    print(f"tradeoff: {len(tradeoff)} routers -> {out_dir / 'tradeoff.csv'}")

    if matrix_path.exists():
        with open(matrix_path, newline="", encoding="utf-8") as handle:
            rows = list(csv.reader(handle))
        header, data = rows[0], rows[1:]
        with open(out_dir / "quality_matrix.csv", "w", newline="", encoding="utf-8") as handle:
            csv.writer(handle).writerows([header] + data)
        plots.plot_quality_matrix(
            header[1:], {row[0]: [float(v) for v in row[1:]] for row in data},
            out_dir / "quality_matrix.png",
        )
        print(f"quality matrix: {len(data)} routers x {len(header) - 1} categories")

    if sweep_paths:
        series = []
        with open(out_dir / "concurrency.csv", "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["concurrency", "router", "avg_quality", "avg_response_time", "avg_cost"])
            for path in sweep_paths:
                level = int(path.stem.split("-c")[-1])
                for s in read_summary_csv(path):
                    writer.writerow(
                        [
                            level,
                            s.router_name,
                            format_float(s.avg_quality),
                            format_float(s.avg_response_time),
                            format_float(s.avg_cost),
                        ]
                    )
                    series.append((level, s.avg_quality, s.avg_response_time, s.avg_cost))
        plots.plot_concurrency(series, out_dir / "concurrency.png")
        print(f"concurrency series: {len(series)} rows -> {out_dir / 'concurrency.csv'}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="routesim",
        description="Optimize and evaluate request routing policies on a simulated cloud-edge topology.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--manifest", required=True, help="experiment manifest (JSON)")
        p.add_argument("--seed", type=int, default=None, help="override the manifest seed")
        p.add_argument("--out", default=None, help="output directory (write-once)")

    p_opt = sub.add_parser("optimize", help="evolve routing policies")
    common(p_opt)
    p_opt.add_argument("--population", type=int, default=None)
    p_opt.add_argument("--generations", type=int, default=None)
    p_opt.add_argument("--genome", choices=("threshold", "assignment"), default=None)
    p_opt.add_argument("--workers", type=int, default=None, help="parallel evaluation threads")
    p_opt.set_defaults(func=cmd_optimize)

    p_sim = sub.add_parser("simulate", help="run one router through the workload")
    common(p_sim)
    p_sim.add_argument("--router", required=True, help="baseline name or manifest router")
    p_sim.add_argument("--concurrency", type=int, default=None, help="single level override")
    p_sim.set_defaults(func=cmd_simulate)

    p_cmp = sub.add_parser("compare", help="run every manifest router on one workload")
    common(p_cmp)
    p_cmp.add_argument("--concurrency", type=int, default=None)
    p_cmp.set_defaults(func=cmd_compare)

    p_rep = sub.add_parser("report", help="summarize results into data files and figures")
    p_rep.add_argument("--results", required=True, help="directory with compare/simulate outputs")
    p_rep.add_argument("--out", default=None, help="report directory (default: <results>/report)")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SimulationError, EvaluationError) as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
