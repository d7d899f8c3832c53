"""Matplotlib figure rendering for the report path.

All figures go straight to files (Agg backend); the eval command drops
them next to the JSON/CSV output.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from morphtraj.spdp import AlphaSchedule

_TIMBRE_LABELS = ("log-attack time", "spectral centroid", "spectral flux")


def render_spdp_curve(schedule: AlphaSchedule, path) -> None:
    """Achieved proportion vs morph factor, with the target levels."""
    alphas = np.array(schedule.alphas)
    achieved = np.array([pt.p[0] for pt in schedule.achieved])
    targets = np.array([pt.p[0] for pt in schedule.targets])
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot([0, 1], [0, 1], color="0.8", linestyle="--", linewidth=1, label="identity")
    for t in targets:
        ax.axhline(t, color="0.9", linewidth=0.8, zorder=0)
    ax.plot(alphas, achieved, "o-", color="tab:blue", label="achieved")
    ax.set_xlabel("morph factor")
    ax.set_ylabel("distance proportion to source")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_timbre_space(points: np.ndarray, path) -> None:
    """Normalized 3-D timbre trajectory (one marker per hybrid)."""
    pts = np.asarray(points)
    fig = plt.figure(figsize=(5, 4.5))
    ax = fig.add_subplot(projection="3d")
    ax.plot(pts[:, 0], pts[:, 1], pts[:, 2], "-", color="0.6", linewidth=1)
    sc = ax.scatter(pts[:, 0], pts[:, 1], pts[:, 2], c=np.linspace(0, 1, len(pts)),
                    cmap="viridis", s=35)
    ax.set_xlabel(_TIMBRE_LABELS[0], fontsize=8)
    ax.set_ylabel(_TIMBRE_LABELS[1], fontsize=8)
    ax.set_zlabel(_TIMBRE_LABELS[2], fontsize=8)
    fig.colorbar(sc, ax=ax, shrink=0.6, label="position along trajectory")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_distance_bars(dists, path) -> None:
    """Consecutive perceptual distances along the path."""
    dists = np.asarray(dists, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.bar(np.arange(dists.size), dists, color="tab:blue", width=0.7)
    if dists.size:
        ax.axhline(dists.mean(), color="tab:red", linewidth=1, label="mean")
        ax.legend(fontsize=8)
    ax.set_xlabel("transition index")
    ax.set_ylabel("perceptual distance")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
