"""Matplotlib figures for bench reports and map snapshots (files only, Agg backend)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def bench_figures(report, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    frames = report.frames
    k = np.arange(len(frames))
    paths = []

    fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    axes[0].plot(k, [f.enhanced_ms for f in frames], label="enhanced")
    axes[0].plot(k, [f.conventional_ms for f in frames], label="conventional")
    axes[0].set_ylabel("ISM time [ms]")
    axes[0].legend()
    axes[1].plot(k, [f.enhanced_updates for f in frames], label="enhanced")
    axes[1].plot(k, [f.conventional_updates for f in frames], label="conventional")
    axes[1].set_ylabel("cell updates")
    axes[1].set_xlabel("frame")
    fig.tight_layout()
    paths.append(out / "bench_ism.png")
    fig.savefig(paths[-1], dpi=100)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(8, 3.5))
    ax.plot(k, [f.circle_align_ms for f in frames], label="circle (integer shift)")
    ax.plot(k, [f.resample_align_ms for f in frames], label="rotate + sub-cell resample")
    ax.plot(k, [f.latency_ms for f in frames], label="full frame latency", alpha=0.6)
    ax.axhline(report.budget_ms, color="k", ls="--", lw=0.8, label="frame budget")
    ax.set_xlabel("frame")
    ax.set_ylabel("ms")
    ax.legend(fontsize=8)
    fig.tight_layout()
    paths.append(out / "bench_timing.png")
    fig.savefig(paths[-1], dpi=100)
    plt.close(fig)
    return paths


def map_figure(prob: np.ndarray, resolution: float, vertices: np.ndarray, vehicle, path: str | Path) -> Path:
    """Occupancy probability with the free-space polygon drawn in metric local coordinates."""
    h, w = prob.shape
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.imshow(prob, cmap="gray_r", vmin=0, vmax=1, extent=(0, w * resolution, 0, h * resolution))
    if len(vertices):
        ring = np.vstack([vertices, vertices[:1]])
        ax.plot(ring[:, 0], ring[:, 1], "b-", lw=1.2)
        ax.plot(vertices[:, 0], vertices[:, 1], "b.", ms=4)
    ax.plot([vehicle.x], [vehicle.y], "ro", ms=4)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)
