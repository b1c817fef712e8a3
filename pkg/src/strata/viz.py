"""Standard figures over run artifacts, rendered to SVG files.

All figures save through :func:`save_svg`, which pins the SVG hash salt,
disables path simplification, and strips the date metadata, so a re-render
of the same artifact embeds identical data (and is byte-identical across
separate processes). Artists that tests count carry stable gids.
"""

from __future__ import annotations

import functools

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import FancyArrowPatch, Rectangle

_SVG_RC = {
    "svg.hashsalt": "strata",
    "path.simplify": False,
    "svg.fonttype": "none",
}


def _deterministic_svg(fn):
    """Build and save the figure under pinned rc settings; path
    simplification must be off before any artist is created, or vertex
    counts in the output stop matching the data."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        with plt.rc_context(_SVG_RC):
            return fn(*args, **kwargs)

    return wrapper


def save_svg(fig, out_path) -> None:
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)


@_deterministic_svg
def plot_trace(series: dict[str, list[float]], out_path, title: str = "episode trace") -> None:
    """One polyline per metric key over ticks."""
    fig, ax = plt.subplots(figsize=(9, 5))
    for key in sorted(series):
        line, = ax.plot(range(len(series[key])), series[key], linewidth=1.2, label=key)
        line.set_gid(f"trace:{key}")
    ax.set_xlabel("tick")
    ax.set_ylabel("value")
    ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    save_svg(fig, out_path)


@_deterministic_svg
def plot_pareto(entries: list[dict], out_path, title: str = "hall-of-fame fitness") -> None:
    """Scatter of the first two fitness components, one marker per entry."""
    if not entries or any(len(e["fitness"]) < 2 for e in entries):
        raise ValueError("pareto plot needs entries with at least two objectives")
    xs = [e["fitness"][0] for e in entries]
    ys = [e["fitness"][1] for e in entries]
    fig, ax = plt.subplots(figsize=(6, 5))
    points = ax.scatter(xs, ys, s=28, c="tab:blue", edgecolors="k", linewidths=0.4)
    points.set_gid("pareto:points")
    ax.set_xlabel("objective 0")
    ax.set_ylabel("objective 1")
    ax.set_title(title)
    fig.tight_layout()
    save_svg(fig, out_path)


@_deterministic_svg
def plot_logbook(rows: list[dict], out_path, title: str = "search progress") -> None:
    """Min/mean/max band per objective across generations."""
    if not rows or "obj" not in rows[0]:
        raise ValueError("logbook plot needs rows with per-objective statistics")
    gens = [r["gen"] for r in rows]
    n_obj = len(rows[0]["obj"])
    fig, axes = plt.subplots(n_obj, 1, figsize=(8, 3 * n_obj), sharex=True, squeeze=False)
    for j in range(n_obj):
        ax = axes[j][0]
        mins = [r["obj"][j]["min"] for r in rows]
        means = [r["obj"][j]["mean"] for r in rows]
        maxes = [r["obj"][j]["max"] for r in rows]
        band = ax.fill_between(gens, mins, maxes, alpha=0.25, color="tab:blue")
        band.set_gid(f"logbook:band:{j}")
        line, = ax.plot(gens, means, color="tab:blue", linewidth=1.5)
        line.set_gid(f"logbook:mean:{j}")
        ax.set_ylabel(f"objective {j}")
    axes[-1][0].set_xlabel("generation")
    axes[0][0].set_title(title)
    fig.tight_layout()
    save_svg(fig, out_path)


@_deterministic_svg
def plot_tournament(scenarios: list[str], participants: list[str],
                    mean_scores: dict[str, dict[str, float]], out_path,
                    title: str = "mean score by scenario and participant") -> None:
    """Heat grid with one colored cell per (scenario, participant)."""
    values = np.array([[mean_scores[s][p] for p in participants] for s in scenarios])
    lo, hi = float(values.min()), float(values.max())
    span = (hi - lo) or 1.0
    cmap = plt.get_cmap("viridis")
    fig, ax = plt.subplots(figsize=(2.2 + 1.6 * len(participants), 1.2 + 0.5 * len(scenarios)))
    for i, s in enumerate(scenarios):
        for j, p in enumerate(participants):
            v = values[i, j]
            cell = Rectangle((j, i), 1, 1, facecolor=cmap((v - lo) / span), edgecolor="white")
            cell.set_gid(f"cell:{i}:{j}")
            ax.add_patch(cell)
            ax.text(j + 0.5, i + 0.5, f"{v:.3g}", ha="center", va="center", fontsize=7,
                    color="white" if (v - lo) / span < 0.6 else "black")
    ax.set_xlim(0, len(participants))
    ax.set_ylim(len(scenarios), 0)
    ax.set_xticks([j + 0.5 for j in range(len(participants))], participants, fontsize=8)
    ax.set_yticks([i + 0.5 for i in range(len(scenarios))], scenarios, fontsize=7)
    ax.set_title(title, fontsize=10)
    fig.tight_layout()
    save_svg(fig, out_path)


@_deterministic_svg
def plot_model_graph(graph: dict, out_path, title: str = "layered model") -> None:
    """Block diagram: one box per stream in layer columns, one arrow per
    read/write dependency between streams."""
    layers = graph["layers"]
    positions: dict[str, tuple[float, float]] = {}
    fig_height = 1.0 + 1.3 * max(len(layer["streams"]) for layer in layers)
    fig, ax = plt.subplots(figsize=(3.4 * len(layers), fig_height))
    for col, layer in enumerate(layers):
        for row, stream in enumerate(layer["streams"]):
            x, y = col * 3.0, -row * 1.3
            box = Rectangle((x, y), 2.0, 0.9, facecolor="#dbe9f6", edgecolor="black")
            box.set_gid(f"stream:{stream['id']}")
            ax.add_patch(box)
            ax.text(x + 1.0, y + 0.62, stream["id"], ha="center", fontsize=9, weight="bold")
            ax.text(x + 1.0, y + 0.24, f"L{layer['index']}", ha="center", fontsize=7, color="gray")
            positions[stream["id"]] = (x, y)
    for edge in graph["edges"]:
        x0, y0 = positions[edge["from"]]
        x1, y1 = positions[edge["to"]]
        arrow = FancyArrowPatch((x0 + 2.0, y0 + 0.45), (x1, y1 + 0.45),
                                arrowstyle="-|>", mutation_scale=10,
                                color="gray" if edge.get("stateful") else "black",
                                linestyle=":" if edge.get("stateful") else "-",
                                connectionstyle="arc3,rad=0.12")
        arrow.set_gid(f"edge:{edge['from']}->{edge['to']}:{edge['key']}")
        ax.add_patch(arrow)
    ax.relim()
    ax.autoscale_view()
    ax.margins(0.08)
    ax.set_axis_off()
    ax.set_title(title)
    fig.tight_layout()
    save_svg(fig, out_path)
