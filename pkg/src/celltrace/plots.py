"""Report figures written by the CLI next to its CSV/JSON outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def save_extraction_figure(session, track, path) -> None:
    """Two panels: the smoothed ray profiles with their maxima (stacked by
    capture order) and the extracted track in the x/y plane."""
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(11, 4.5))
    n = len(session.rays)
    peak = max((float(r.smoothed.max()) for r in session.rays if r.smoothed is not None
                and r.smoothed.size), default=1.0) or 1.0
    for i, ray in enumerate(session.rays):
        if ray.smoothed is None or not ray.smoothed.size:
            continue
        xs = np.arange(len(ray.smoothed)) * ray.step
        ax0.plot(xs, i + 0.9 * ray.smoothed / peak, lw=0.8, color="tab:blue")
        if ray.maxima:
            mx = np.array(ray.maxima)
            ax0.plot(mx * ray.step, i + 0.9 * ray.smoothed[mx] / peak, ".",
                     color="tab:red", ms=4)
    ax0.set_xlabel("distance along ray")
    ax0.set_ylabel("ray (capture order)")
    ax0.set_title(f"smoothed profiles, {n} rays")

    if track:
        pts = np.array([p for _, p in track])
        tps = [t for t, _ in track]
        ax1.plot(pts[:, 0], pts[:, 1], "-o", ms=4, color="tab:green")
        for t, p in zip(tps, pts):
            ax1.annotate(str(t), (p[0], p[1]), fontsize=7,
                         textcoords="offset points", xytext=(4, 3))
    ax1.set_xlabel("x")
    ax1.set_ylabel("y")
    ax1.set_title("extracted track (timepoint labels)")
    ax1.set_aspect("equal", adjustable="datalim")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_bench_figure(reports: list[dict], path) -> None:
    """Population time and per-link cost across benchmark shapes."""
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 3.8))
    labels = [f"{r['links']:,} links" for r in reports]
    seconds = [r["populationSeconds"] for r in reports]
    per_link = [1e6 * r["populationSeconds"] / max(r["links"], 1) for r in reports]
    x = np.arange(len(reports))
    ax0.bar(x, seconds, color="tab:blue")
    ax0.set_xticks(x, labels)
    ax0.set_ylabel("population time (s)")
    ax0.set_title("scene population")
    ax1.bar(x, per_link, color="tab:orange")
    ax1.set_xticks(x, labels)
    ax1.set_ylabel("per-link cost (µs)")
    ax1.set_title("amortized cost")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_detection_figure(volume, t, detections, path) -> None:
    """Max-intensity projection along z with detection markers."""
    frame = volume.frame(t).astype(float)
    mip = frame.max(axis=0)
    fig, ax = plt.subplots(figsize=(5.5, 5))
    sx, sy = volume.header.voxel_size[0], volume.header.voxel_size[1]
    dx, dy = volume.header.dims[0], volume.header.dims[1]
    ax.imshow(mip, origin="lower", cmap="gray",
              extent=(-0.5 * sx, (dx - 0.5) * sx, -0.5 * sy, (dy - 0.5) * sy))
    if detections:
        pts = np.array([d.position for d in detections])
        ax.scatter(pts[:, 0], pts[:, 1], s=80, facecolors="none",
                   edgecolors="tab:red", lw=1.2)
    ax.set_title(f"t={t}: {len(detections)} detections (z-MIP)")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
