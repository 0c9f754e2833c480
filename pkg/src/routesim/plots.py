"""Figure rendering for the report command.

Each function takes already-aggregated data and writes one PNG next to the
corresponding columnar data file. Rendering uses the Agg backend so reports
work in headless environments.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

_DPI = 150


def plot_quality_matrix(
    categories: Sequence[str],
    per_router: Mapping[str, Sequence[float]],
    path: str | Path,
) -> None:
    """Grouped bars: mean quality per category, one group of bars per router."""
    fig, ax = plt.subplots(figsize=(8, 4.5))
    n_routers = max(1, len(per_router))
    width = 0.8 / n_routers
    for k, (router, values) in enumerate(per_router.items()):
        positions = [i + (k - (n_routers - 1) / 2) * width for i in range(len(categories))]
        ax.bar(positions, values, width=width, label=router)
    ax.set_xticks(range(len(categories)))
    ax.set_xticklabels(categories)
    ax.set_ylabel("mean quality")
    ax.set_ylim(0.0, 1.0)
    ax.set_title("Quality per request category")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def plot_tradeoff(
    rows: Sequence[tuple[str, float, float, float]],
    path: str | Path,
) -> None:
    """3D scatter of (cost, response time, quality), one point per router."""
    fig = plt.figure(figsize=(7, 5.5))
    ax = fig.add_subplot(projection="3d")
    for router, quality, rt, cost in rows:
        ax.scatter([cost], [rt], [quality], s=60, label=router)
        ax.text(cost, rt, quality, f" {router}", fontsize=8)
    ax.set_xlabel("avg cost (USD)")
    ax.set_ylabel("avg response time (s)")
    ax.set_zlabel("avg quality")
    ax.set_title("Quality / latency / cost trade-off")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def plot_concurrency(
    rows: Sequence[tuple[int, float, float, float]],
    path: str | Path,
) -> None:
    """Three panels (quality, response time, cost) against concurrency."""
    rows = sorted(rows)
    levels = [r[0] for r in rows]
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.5))
    for ax, idx, label in zip(axes, (1, 2, 3), ("avg quality", "avg response time (s)", "avg cost (USD)")):
        ax.plot(levels, [r[idx] for r in rows], marker="o")
        ax.set_xlabel("concurrency")
        ax.set_ylabel(label)
        ax.set_xticks(levels)
        ax.grid(True, alpha=0.3)
    fig.suptitle("Performance across concurrency levels")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
