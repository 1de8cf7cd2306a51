"""Static vector-graphics figures for solved trajectories and Monte Carlo runs."""

from __future__ import annotations

import numpy as np

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib.patches import Circle, Ellipse, Polygon as MplPolygon

from .constraints import DiscObstacle, PolygonObstacle

AGENT_COLORS = ("tab:blue", "tab:red", "tab:green", "tab:orange", "tab:purple")


def _position_ellipse(mean, cov, color, scale=2.0):
    """2-sigma covariance ellipse of one agent's position block."""
    vals, vecs = np.linalg.eigh(cov)
    vals = np.maximum(vals, 0.0)
    angle = float(np.degrees(np.arctan2(vecs[1, -1], vecs[0, -1])))
    return Ellipse(
        xy=mean, width=2 * scale * np.sqrt(vals[-1]), height=2 * scale * np.sqrt(vals[0]),
        angle=angle, facecolor=color, alpha=0.15, edgecolor=color, linewidth=0.5,
    )


def plot_trajectory(means, covs, scenario_config, path, ellipse_every: int = 2):
    """Planned paths with covariance ellipses, lane centers, and obstacles."""
    fig, ax = plt.subplots(figsize=(7, 6))
    n_players = len(scenario_config.agents)
    for j in range(n_players):
        color = AGENT_COLORS[j % len(AGENT_COLORS)]
        lane = np.asarray(scenario_config.agents[j].lane, dtype=float)
        ax.plot(lane[:, 0], lane[:, 1], linestyle="--", color=color, alpha=0.35, linewidth=1)
        xs = means[:, 4 * j]
        ys = means[:, 4 * j + 1]
        ax.plot(xs, ys, color=color, marker="o", markersize=2.5, linewidth=1.5,
                label=f"agent {j}")
        for k in range(0, means.shape[0], ellipse_every):
            blk = np.asarray(covs[k])[4 * j : 4 * j + 2, 4 * j : 4 * j + 2]
            ax.add_patch(_position_ellipse((xs[k], ys[k]), blk, color))
    for obs in scenario_config.obstacles:
        if isinstance(obs, DiscObstacle):
            ax.add_patch(Circle(obs.center, obs.radius, facecolor="0.55", edgecolor="0.25"))
        elif isinstance(obs, PolygonObstacle):
            ax.add_patch(MplPolygon(obs.vertices, facecolor="0.55", edgecolor="0.25"))
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(scenario_config.name)
    ax.axis("equal")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_violation_histogram(report, path, title: str = "max constraint violation"):
    """Histogram of per-trial maximum constraint violations."""
    fig, ax = plt.subplots(figsize=(6, 4))
    edges = np.asarray(report.histogram_edges, dtype=float)
    counts = np.asarray(report.histogram_counts, dtype=float)
    widths = np.diff(edges)
    ax.bar(edges[:-1], counts, width=widths, align="edge", color="tab:blue", edgecolor="white")
    ax.axvline(0.0, color="tab:red", linewidth=1.2)
    ax.set_xlabel("max violation over trajectory [m]")
    ax.set_ylabel("trials")
    ax.set_title(f"{title} (rate {report.satisfaction_rate:.0%})")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
