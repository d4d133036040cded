"""
Figures written straight to files: fitted curve with its pointwise band,
significance trace, and chi-square qq plot.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_curve", "plot_trace", "plot_qq", "style"]

FIGSIZE = (5.0, 3.5)


def style(ax):
    ax.spines["right"].set_visible(False)
    ax.spines["top"].set_visible(False)
    ax.tick_params(direction="out", length=3)
    return ax


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_curve(band, path, x_obs=None, title=None):
    """Estimated ``m(x)`` with its pointwise band; unreliable points are marked."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    style(ax)
    ax.fill_between(band.x, band.lower, band.upper, color="0.85", lw=0, label=f"{band.level:.0%} band")
    ax.plot(band.x, band.estimate, color="k", lw=1.2, label="estimate")
    bad = ~np.asarray(band.reliable)
    if bad.any():
        ax.plot(band.x[bad], band.estimate[bad], "x", color="tab:red", ms=3, label="separated")
    if x_obs is not None:
        lo = ax.get_ylim()[0]
        ax.plot(x_obs, np.full(len(x_obs), lo), "|", color="0.4", ms=6)
    ax.set_xlabel("x")
    ax.set_ylabel("m(x)")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def plot_trace(rows, path, level=0.05):
    """p-value and df against bandwidth."""
    hs = np.array([r.h for r in rows])
    ps = np.array([r.p_value for r in rows])
    dfs = np.array([r.df for r in rows])
    fig, ax = plt.subplots(figsize=FIGSIZE)
    style(ax)
    ax.plot(hs, ps, "o-", color="k", ms=4)
    ax.axhline(level, color="tab:red", lw=0.8, ls="--")
    ax.set_xlabel("bandwidth h")
    ax.set_ylabel("p-value")
    ax.set_ylim(0, max(1.0, np.nanmax(ps) if np.isfinite(ps).any() else 1.0))
    ax2 = ax.twinx()
    ax2.plot(hs, dfs, "s:", color="0.5", ms=3)
    ax2.set_ylabel("df", color="0.5")
    return _save(fig, path)


def plot_qq(dump, path):
    """Sorted statistics against chi-square quantiles at the mean df."""
    fig, ax = plt.subplots(figsize=(3.8, 3.8))
    style(ax)
    ax.plot(dump.reference, dump.statistic, ".", color="k", ms=2)
    top = float(max(dump.reference.max(), dump.statistic.max()))
    ax.plot([0, top], [0, top], color="tab:red", lw=0.8)
    ax.set_xlabel(f"chi-square({dump.df:.2f}) quantile")
    ax.set_ylabel("statistic")
    ax.set_title(f"KS = {dump.ks:.3f}", fontsize=9)
    return _save(fig, path)
