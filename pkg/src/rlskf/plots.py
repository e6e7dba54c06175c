"""Figure rendering for the benchmark report path (written next to the CSV)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .bench import KINDS, MseReport, SampleRealization

_FILTER_STYLE = {
    "kalman": dict(color="tab:blue"),
    "rls-io": dict(color="tab:green"),
    "rls-ao": dict(color="tab:orange"),
    "rls-ioao": dict(color="tab:purple"),
}


def render_regime_figure(sample: SampleRealization, path: str | Path) -> Path:
    """Two panels: filter estimates vs. true states, and states vs. observations."""
    traj = sample.trajectory
    ts = np.arange(1, traj.horizon + 1)
    fig, (ax_top, ax_bottom) = plt.subplots(
        2, 1, figsize=(9, 6.5), sharex=True, height_ratios=[2, 1]
    )
    ax_top.plot(ts, traj.states[1:, 0], color="black", lw=1.6, label="state")
    for name, est in sample.estimates.items():
        style = _FILTER_STYLE.get(name, {})
        ax_top.plot(ts, est[:, 0], lw=1.0, label=name, **style)
    ax_top.set_ylabel("first state component")
    ax_top.set_title(f"regime: {sample.regime}")
    ax_top.legend(loc="best", fontsize=8)

    ax_bottom.plot(ts, traj.states[1:, 0], color="black", lw=1.2, label="state")
    ax_bottom.plot(ts, traj.observations[:, 0], "o", ms=3, color="red", label="observation")
    marked = [t for t in ts if traj.marks[t - 1] != "clean"]
    for t in marked:
        ax_bottom.axvline(t, color="gray", alpha=0.2, lw=0.8)
    ax_bottom.set_xlabel("t")
    ax_bottom.set_ylabel("observation scale")
    ax_bottom.legend(loc="best", fontsize=8)

    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_mse_figure(
    reports: list[MseReport], filters: tuple[str, ...], path: str | Path
) -> Path:
    """Grouped bar chart of filtered/predicted MSE per regime (log scale)."""
    fig, axes = plt.subplots(1, len(KINDS), figsize=(10, 4), sharey=True)
    regimes = [r.regime for r in reports]
    x = np.arange(len(regimes))
    width = 0.8 / len(filters)
    for ax, kind in zip(axes, KINDS):
        for i, name in enumerate(filters):
            vals = [r.mse[(name, kind)] for r in reports]
            errs = [3 * r.se[(name, kind)] if np.isfinite(r.se[(name, kind)]) else 0.0
                    for r in reports]
            ax.bar(
                x + (i - len(filters) / 2 + 0.5) * width,
                vals,
                width=width,
                yerr=errs,
                capsize=2,
                label=name,
                color=_FILTER_STYLE.get(name, {}).get("color"),
            )
        ax.set_xticks(x, regimes, rotation=20)
        ax.set_yscale("log")
        ax.set_title(f"{kind} MSE")
    axes[0].set_ylabel("empirical MSE (log scale)")
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
