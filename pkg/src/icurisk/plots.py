"""SVG plot emission (no raster dependencies, byte-deterministic output).

Uses the object-oriented matplotlib API with the SVG canvas directly:
no pyplot global state, so plotting is safe from worker threads. A
fixed hashsalt and a suppressed creation date keep the SVG bytes
reproducible across runs.
"""

from __future__ import annotations

import matplotlib
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure

matplotlib.rcParams["svg.hashsalt"] = "icurisk"

_SAVE_KW = {"format": "svg", "metadata": {"Date": None}}


def _new_figure(width=7.0, height=4.5):
    fig = Figure(figsize=(width, height))
    FigureCanvasSVG(fig)
    return fig


def ranking_bar_svg(path, ranking, top_k: int = 13) -> None:
    entries = ranking.entries[:top_k][::-1]  # strongest on top
    names = [n for n, _ in entries]
    vals = [v for _, v in entries]
    fig = _new_figure(7.0, 0.35 * max(len(entries), 4) + 1.2)
    ax = fig.add_subplot(111)
    ax.barh(range(len(entries)), vals, color="#2E86AB")
    ax.set_yticks(range(len(entries)))
    ax.set_yticklabels(names, fontsize=8)
    ax.set_xlabel("mean |attribution| (log-odds)")
    ax.set_title(f"Feature ranking, {ranking.horizon // 60} h lead time")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)


def decision_curve_svg(path, curve, title: str = "Decision curve") -> None:
    fig = _new_figure()
    ax = fig.add_subplot(111)
    t = curve.thresholds
    if curve.bands and "model" in curve.bands:
        lo, hi = curve.bands["model"]
        ax.fill_between(t, lo, hi, color="#2E86AB", alpha=0.2, linewidth=0)
    ax.plot(t, curve.model_nb, color="#2E86AB", lw=2, label="model")
    if curve.comparator_nb is not None:
        if curve.bands and "comparator" in curve.bands:
            lo, hi = curve.bands["comparator"]
            ax.fill_between(t, lo, hi, color="#A23B72", alpha=0.2, linewidth=0)
        ax.plot(t, curve.comparator_nb, color="#A23B72", lw=1.5, label="logistic comparator")
    ax.plot(t, curve.all_nb, color="gray", ls="--", lw=1.2, label="treat all")
    ax.plot(t, curve.none_nb, color="black", lw=1.2, label="treat none")
    ax.set_xlabel("risk threshold")
    ax.set_ylabel("net benefit")
    ax.set_ylim(bottom=max(-0.05, float(curve.model_nb.min()) - 0.05))
    ax.set_title(title)
    ax.legend(loc="upper right", fontsize=8)
    ax.grid(alpha=0.3, ls=":")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)


def impact_curve_svg(path, impact, title: str = "Clinical impact curve") -> None:
    fig = _new_figure()
    ax = fig.add_subplot(111)
    ax.plot(impact.thresholds, impact.declared, color="#2E86AB", lw=2,
            label=f"declared high-risk / {impact.population}")
    ax.plot(impact.thresholds, impact.true_positives, color="#F18F01", lw=2, ls="--",
            label="true positives among them")
    ax.set_xlabel("risk threshold")
    ax.set_ylabel(f"patients per {impact.population}")
    ax.set_title(title)
    ax.legend(loc="upper right", fontsize=8)
    ax.grid(alpha=0.3, ls=":")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)


def horizon_metrics_svg(path, horizons, metric_rows, title: str = "Performance vs lead time") -> None:
    """metric_rows: {metric name: [value per horizon]} with horizons in hours."""
    fig = _new_figure()
    ax = fig.add_subplot(111)
    hours = [h / 60 for h in horizons]
    for name, values in metric_rows.items():
        ax.plot(hours, values, marker="o", label=name)
    ax.set_xlabel("lead time (hours)")
    ax.set_ylabel("metric value")
    ax.set_ylim(0.0, 1.0)
    ax.set_title(title)
    ax.legend(loc="lower left", fontsize=8)
    ax.grid(alpha=0.3, ls=":")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
