"""Regenerate configs/paper-testbed/ from first principles.

The testbed has one GPU-backed cloud node hosting a large general model and
three CPU-class edge nodes each hosting small instruct/coder/math models.
Service rates and token prices are not free parameters: this script solves
them so that, on the checked-in 500-request workload, the cloud-only and
edge-only baselines land on fixed target averages (quality / response time /
cost). Those two baselines are closed-form in the single-router case, which
makes them recoverable; mixed routers are not calibration targets.

Run from the repo root:  python scripts/calibrate_testbed.py
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from routesim.domain import (
    DATASET_CATEGORIES,
    ModelKind,
    ModelSpec,
    NodeSpec,
    NodeTier,
    QualityProfile,
    RequestCategory,
    Topology,
    WorkloadSpec,
    generate_workload,
    save_topology,
    save_workload_spec,
)
from routesim.nsga2 import DEFAULT_THRESHOLDS
from routesim.routers import save_policy

ROOT = Path(__file__).resolve().parents[1]
OUT = ROOT / "configs" / "paper-testbed"

SEED = 42

# Target averages for the two single-router baselines (concurrency 1).
CLOUD_QUALITY, CLOUD_RT, CLOUD_COST = 0.5736, 1.0624, 1.13e-4
EDGE_QUALITY, EDGE_RT, EDGE_COST = 0.4207, 3.9673, 9.00e-6

# Fixed hardware-ish constants; only decode rates and prices are solved.
CLOUD_NET = dict(bandwidth=1.25e7, latency=0.05)   # WAN link to the cloud
EDGE_NET = dict(bandwidth=1.25e8, latency=0.005)   # LAN link to edge boxes
CLOUD_PREFILL, CLOUD_BASE = 2500.0, 0.08
EDGE_PREFILL, EDGE_BASE = 1000.0, 0.15

# Per-category quality means (spread 0 = deterministic). The large model
# dominates reading; the small models are nearly flat with mild specialty
# bumps, and commonsense is hard for everyone - the small instruct model
# nearly matches the large one there.
QUALITY = {
    "large": {"code": 0.58, "math": 0.52, "reading": 0.8644, "commonsense": 0.33},
    "instruct": {"code": 0.42, "math": 0.42, "reading": 0.4278, "commonsense": 0.325},
    "coder": {"code": 0.46, "math": 0.42, "reading": 0.44, "commonsense": 0.36},
    "math": {"code": 0.42, "math": 0.47, "reading": 0.44, "commonsense": 0.36},
}


def mean(values):
    values = list(values)
    return math.fsum(values) / len(values)


def main() -> None:
    workload = WorkloadSpec(
        total_requests=500,
        per_category_counts={c: 125 for c in DATASET_CATEGORIES},
        seed=SEED,
    )
    requests = generate_workload(workload)

    mean_prompt = mean(r.prompt_tokens for r in requests)
    mean_resp = mean(r.expected_response_tokens for r in requests)
    mean_tokens = mean(r.total_tokens for r in requests)

    def transfer_mean(net) -> float:
        up = mean(r.query_size_bytes / net["bandwidth"] + net["latency"] for r in requests)
        down = mean(r.response_size_bytes / net["bandwidth"] + net["latency"] for r in requests)
        return up + down

    # mean RT = net + base + mean_prompt/prefill + mean_resp/decode
    cloud_decode = mean_resp / (
        CLOUD_RT - transfer_mean(CLOUD_NET) - CLOUD_BASE - mean_prompt / CLOUD_PREFILL
    )
    edge_decode = mean_resp / (
        EDGE_RT - transfer_mean(EDGE_NET) - EDGE_BASE - mean_prompt / EDGE_PREFILL
    )
    price_large = CLOUD_COST * 1e6 / mean_tokens
    price_edge = EDGE_COST * 1e6 / mean_tokens

    print(f"mean prompt tokens    {mean_prompt:.4f}")
    print(f"mean response tokens  {mean_resp:.4f}")
    print(f"cloud decode rate     {cloud_decode:.6f} tok/s")
    print(f"edge decode rate      {edge_decode:.6f} tok/s")
    print(f"large model price     {price_large:.8f} USD/Mtok")
    print(f"edge model price      {price_edge:.8f} USD/Mtok")

    sanity = mean(QUALITY["large"].values())
    print(f"cloud quality mean    {sanity:.6f} (target {CLOUD_QUALITY})")
    diag = (
        QUALITY["coder"]["code"]
        + QUALITY["math"]["math"]
        + QUALITY["instruct"]["reading"]
        + QUALITY["instruct"]["commonsense"]
    ) / 4
    print(f"edge typed quality    {diag:.6f} (target {EDGE_QUALITY})")

    def profile(name: str):
        return {RequestCategory(c): QualityProfile(m, 0.0) for c, m in QUALITY[name].items()}

    models = (
        ModelSpec(
            id="atlas-32b",
            kind=ModelKind.LARGE,
            price_per_million_tokens=price_large,
            quality_profile=profile("large"),
            prefill_rate=CLOUD_PREFILL,
            decode_rate=cloud_decode,
            base_overhead=CLOUD_BASE,
        ),
        ModelSpec(
            id="pico-2b-instruct",
            kind=ModelKind.INSTRUCT,
            price_per_million_tokens=price_edge,
            quality_profile=profile("instruct"),
            prefill_rate=EDGE_PREFILL,
            decode_rate=edge_decode,
            base_overhead=EDGE_BASE,
        ),
        ModelSpec(
            id="pico-2b-coder",
            kind=ModelKind.CODER,
            price_per_million_tokens=price_edge,
            quality_profile=profile("coder"),
            prefill_rate=EDGE_PREFILL,
            decode_rate=edge_decode,
            base_overhead=EDGE_BASE,
        ),
        ModelSpec(
            id="pico-2b-math",
            kind=ModelKind.MATH,
            price_per_million_tokens=price_edge,
            quality_profile=profile("math"),
            prefill_rate=EDGE_PREFILL,
            decode_rate=edge_decode,
            base_overhead=EDGE_BASE,
        ),
    )
    edge_models = ("pico-2b-instruct", "pico-2b-coder", "pico-2b-math")
    nodes = [
        NodeSpec(
            id="cloud-0",
            tier=NodeTier.CLOUD,
            bandwidth_to_node=CLOUD_NET["bandwidth"],
            bandwidth_from_node=CLOUD_NET["bandwidth"],
            latency_to_node=CLOUD_NET["latency"],
            latency_from_node=CLOUD_NET["latency"],
            max_concurrent=4,
            queue_limit=64,
            deployed_models=("atlas-32b",),
        )
    ]
    for i in range(3):
        nodes.append(
            NodeSpec(
                id=f"edge-{i}",
                tier=NodeTier.EDGE,
                bandwidth_to_node=EDGE_NET["bandwidth"],
                bandwidth_from_node=EDGE_NET["bandwidth"],
                latency_to_node=EDGE_NET["latency"],
                latency_from_node=EDGE_NET["latency"],
                max_concurrent=1,
                queue_limit=8,
                deployed_models=edge_models,
            )
        )
    topology = Topology(nodes=tuple(nodes), models=models)
    topology.validate()

    OUT.mkdir(parents=True, exist_ok=True)
    save_topology(topology, OUT / "topology.json")
    save_workload_spec(workload, OUT / "workload.json")
    save_policy(DEFAULT_THRESHOLDS, OUT / "policy-default.json")
    manifest = {
        "schema_version": 1,
        "topology": "topology.json",
        "workload": "workload.json",
        "routers": [
            "cloud_only",
            "edge_only",
            "random",
            "round_robin",
            {"name": "proposed", "policy": "policy-optimized.json"},
        ],
        "weights": {"quality": 1 / 3, "cost": 1 / 3, "time": 1 / 3},
        "concurrency_levels": [1, 4, 8, 10],
        "seed": SEED,
    }
    (OUT / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {OUT}/topology.json, workload.json, policy-default.json, manifest.json")


if __name__ == "__main__":
    main()
