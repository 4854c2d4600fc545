"""Figures rendered from the pipeline's CSV outputs."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .simulation import SimulationResult  # noqa: E402

_SAVE = {"dpi": 120, "metadata": {"Software": None}}


def _rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_pcs_series_csv(results: Sequence[SimulationResult], path: str | Path) -> None:
    """Long-format step series: one row per (strategy, system, change time).

    Each series is closed with a point at the run's horizon so flat curves plot.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario_id", "strategy", "system", "time_h", "pcs"])
        for res in results:
            for system in sorted(res.pcs):
                pts = list(res.pcs[system])
                if pts and pts[-1][0] < res.tmax:
                    pts.append((res.tmax, pts[-1][1]))
                for t, v in pts:
                    w.writerow([res.scenario_id, res.strategy, system, f"{t:.6f}", f"{v:.6f}"])


def scatter_figure(scatter_csv, out) -> None:
    rows = _rows(scatter_csv)
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for strategy in sorted({r["strategy"] for r in rows}):
        sub = [r for r in rows if r["strategy"] == strategy]
        ax.scatter([int(r["failure_count"]) for r in sub], [float(r["weighted_eoh"]) for r in sub],
                   s=10, alpha=0.6, label=strategy)
    ax.set_xlabel("initially failed components")
    ax.set_ylabel("weighted outage (system performance-hours)")
    ax.legend(title="strategy", fontsize=8)
    fig.tight_layout()
    fig.savefig(out, **_SAVE)
    plt.close(fig)


def inertia_figure(inertia_csv, out) -> None:
    rows = _rows(inertia_csv)
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for key in sorted({(r["system"], r["kind"]) for r in rows}):
        sub = [r for r in rows if (r["system"], r["kind"]) == key]
        k = np.array([int(r["k"]) for r in sub])
        y = np.array([float(r["inertia"]) for r in sub])
        line, = ax.plot(k, y, marker="o", ms=3, label=f"{key[0]} {key[1]}s")
        chosen = [i for i, r in enumerate(sub) if r["elbow"] == "1"]
        if chosen:
            ax.plot(k[chosen], y[chosen], "s", ms=8, mfc="none", color=line.get_color())
    ax.set_xlabel("clusters k")
    ax.set_ylabel("inertia")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out, **_SAVE)
    plt.close(fig)


def trace_figure(trace_csv, out) -> None:
    rows = _rows(trace_csv)
    total = [int(r["total_clusters"]) for r in rows]
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.8))
    for split in ("train", "test"):
        a1.plot(total, [float(r[f"{split}_r2"]) for r in rows], marker="o", ms=3, label=split)
        a2.plot(total, [float(r[f"{split}_rmse"]) for r in rows], marker="o", ms=3, label=split)
    for r in rows:
        if r["chosen"] == "1":
            for ax in (a1, a2):
                ax.axvline(int(r["total_clusters"]), color="grey", ls="--", lw=1)
    a1.set_ylabel("R$^2$")
    a2.set_ylabel("RMSE")
    for ax in (a1, a2):
        ax.set_xlabel("total clusters")
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out, **_SAVE)
    plt.close(fig)


def pcs_figure(series_csv, out) -> None:
    rows = _rows(series_csv)
    systems = sorted({r["system"] for r in rows})
    fig, axes = plt.subplots(1, len(systems), figsize=(4.5 * len(systems), 3.6), squeeze=False)
    for ax, system in zip(axes[0], systems):
        for strategy in sorted({r["strategy"] for r in rows}):
            sub = [r for r in rows if r["system"] == system and r["strategy"] == strategy]
            t = [float(r["time_h"]) for r in sub]
            v = [float(r["pcs"]) for r in sub]
            ax.step(t, v, where="post", label=strategy)
        ax.set_title(system)
        ax.set_xlabel("hours")
        ax.set_ylabel("PCS")
        ax.set_ylim(-0.02, 1.02)
        ax.legend(fontsize=8)
    if rows:
        fig.suptitle(f"scenario {rows[0]['scenario_id']}", fontsize=10)
    fig.tight_layout()
    fig.savefig(out, **_SAVE)
    plt.close(fig)
