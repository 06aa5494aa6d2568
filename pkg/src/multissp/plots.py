"""Report figures. Needs matplotlib (``pip install artifact[plot]``); imported only when plotting."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

MODEL_LABELS = {"shared": "Model S", "single": "Single SSP", "isolated": "Model M"}
MODEL_COLORS = {"shared": "#1b6ca8", "single": "#7a7a7a", "isolated": "#c0392b"}

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
}


def _save(fig, path) -> Path:
    path = Path(path)
    # no timestamp metadata so reruns give identical files
    fig.savefig(path, dpi=150, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return path


def attack_costs(costs: dict, path, errors: dict | None = None):
    """Bar chart of minimum attack cost per architecture."""
    order = [m for m in ("shared", "single", "isolated") if m in costs]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.0))
        ax.bar(
            [MODEL_LABELS[m] for m in order],
            [costs[m] for m in order],
            yerr=[errors[m] for m in order] if errors else None,
            color=[MODEL_COLORS[m] for m in order],
            capsize=3,
        )
        ax.set_ylabel("minimum attack cost (USD)")
        ax.set_title("Cost to corrupt the AVS")
        return _save(fig, path)


def margin_histograms(histograms: dict, path, title="Validator security margin"):
    """Overlaid margin histograms per model (``margin_<model>`` entries)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        for model in ("shared", "single", "isolated"):
            h = histograms.get(f"margin_{model}")
            if h is None:
                continue
            edges = np.asarray(h["edges"])
            ax.stairs(h["counts"], edges, label=MODEL_LABELS[model], color=MODEL_COLORS[model])
        ax.axvline(0.0, color="k", linestyle="--", linewidth=0.8, label="ruin threshold")
        ax.set_xlabel("margin M(v) (USD)")
        ax.set_ylabel("validators")
        ax.set_title(title)
        ax.legend(frameon=False)
        return _save(fig, path)


def margin_shift(shifts: dict, path):
    """Mean-margin change per model under a volatility shock."""
    order = [m for m in ("shared", "single", "isolated") if m in shifts]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.0))
        ax.bar([MODEL_LABELS[m] for m in order], [shifts[m] for m in order],
               color=[MODEL_COLORS[m] for m in order])
        ax.axhline(0.0, color="k", linewidth=0.8)
        ax.set_ylabel("shift in mean margin (USD)")
        ax.set_title("Volatility shock")
        return _save(fig, path)


def bribery_costs(plans: list[dict], c_single: float, path):
    """Per-SSP bribery cost against the shared-model cost."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.0))
        xs = [p["ssp_id"] for p in plans]
        ys = [p["cost"] if p["cost"] is not None else 0.0 for p in plans]
        ax.bar(xs, ys, color=MODEL_COLORS["isolated"], label="per-SSP cost (Model M)")
        ax.axhline(c_single, color=MODEL_COLORS["shared"], linestyle="--", label="Model S")
        ax.set_ylabel("bribery cost (USD)")
        ax.set_xlabel("SSP")
        ax.legend(frameon=False)
        return _save(fig, path)


def reward_schemes(summary: dict, histograms: dict, path):
    """Mean reward per scheme and Gini histograms."""
    schemes = [s for s in summary if isinstance(summary[s], dict)]
    with plt.rc_context(STYLE):
        fig, (left, right) = plt.subplots(1, 2, figsize=(7.5, 3.0))
        means = [summary[s]["mean_reward"]["mean"] for s in schemes]
        sds = [summary[s]["mean_reward"]["std"] for s in schemes]
        left.bar(schemes, means, yerr=sds, capsize=3, color="#5d8aa8")
        left.set_ylabel("mean reward per validator")
        for s in schemes:
            h = histograms.get(f"gini_{s}")
            if h:
                right.stairs(h["counts"], np.asarray(h["edges"]), label=s)
        right.set_xlabel("Gini coefficient")
        right.set_ylabel("trials")
        right.legend(frameon=False)
        return _save(fig, path)


def correlation_heatmap(assets, corr, path):
    corr = np.asarray(corr, dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.2 + 0.3 * len(assets), 2.8 + 0.3 * len(assets)))
        im = ax.imshow(corr, vmin=-1, vmax=1, cmap="RdBu_r")
        ax.set_xticks(range(len(assets)), assets)
        ax.set_yticks(range(len(assets)), assets)
        for i in range(len(assets)):
            for j in range(len(assets)):
                ax.text(j, i, "n/a" if np.isnan(corr[i, j]) else f"{corr[i, j]:.4f}",
                        ha="center", va="center", fontsize=7)
        fig.colorbar(im, ax=ax, shrink=0.8)
        ax.set_title("Correlation of daily log returns")
        return _save(fig, path)


def column_stakes(before, after, path):
    """Per-SSP stake of an allocation before and after optimization."""
    k = len(before)
    x = np.arange(k)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.5 * k + 2), 3.0))
        ax.bar(x - 0.2, before, width=0.4, label="input", color="#bbbbbb")
        ax.bar(x + 0.2, after, width=0.4, label="maximin", color="#1b6ca8")
        ax.set_xticks(x, [str(j) for j in range(k)])
        ax.set_xlabel("SSP")
        ax.set_ylabel("stake")
        ax.legend(frameon=False)
        return _save(fig, path)
