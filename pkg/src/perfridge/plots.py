"""Figure rendering for sweep outputs (Agg backend, deterministic files)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["render_sweep_figure", "render_real_figure", "render_theorem3_figure"]

# fixed Software tag keeps PNG bytes independent of the matplotlib version
_PNG_META = {"Software": "perfridge"}


def _save(fig, path: str | Path) -> None:
    fig.savefig(path, dpi=150, bbox_inches="tight", metadata=_PNG_META)
    plt.close(fig)


def render_sweep_figure(
    path: str | Path,
    lambda_grid: list[float],
    curves: dict[str, tuple[list[float], list[float] | None]],
    markers: dict[str, float] | None = None,
    title: str = "",
    ylabel: str = "excess risk",
) -> None:
    """Risk-vs-lambda curves; each entry maps label -> (mean, std-or-None)."""
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    lam = np.asarray(lambda_grid)
    for label, (mean, std) in curves.items():
        mean_arr = np.asarray(mean, dtype=float)
        style = "--" if "theory" in label or "order" in label else "-"
        line = ax.plot(lam, mean_arr, style, label=label, lw=1.6)[0]
        if std is not None:
            sd = np.asarray(std, dtype=float)
            ax.fill_between(lam, mean_arr - sd, mean_arr + sd, alpha=0.2, color=line.get_color())
    for name, value in (markers or {}).items():
        ax.axvline(value, ls=":", lw=1.2, label=f"{name} = {value:.4g}")
    ax.set_xlabel("ridge penalty")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    _save(fig, path)


def render_real_figure(
    path: str | Path,
    curves: list[tuple[float, list[float], list[float]]],
    optima: list[tuple[float, float, float]],
    title: str = "",
) -> None:
    """Per-b_bar risk curves with the locus of grid optima as a red dashed line.

    ``curves`` holds (b_bar, lambda_grid, risks); ``optima`` holds
    (b_bar, lambda_star, risk_star) rows.
    """
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for b_bar, lam, risk in curves:
        ax.plot(lam, risk, lw=1.5, label=f"b_bar = {b_bar:g}")
    if optima:
        xs = [o[1] for o in optima]
        ys = [o[2] for o in optima]
        ax.plot(xs, ys, "r--", marker="o", ms=4, lw=1.4, label="optima locus")
    ax.set_xlabel("ridge penalty")
    ax.set_ylabel("excess test MSE")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    _save(fig, path)


def render_theorem3_figure(
    path: str | Path,
    rows: list[dict],
    title: str = "optimal-penalty and optimal-risk shift coefficients",
) -> None:
    """Coefficient curves vs sigma, one panel per coefficient, lines per kappa."""
    kappas = sorted({r["kappa"] for r in rows})
    names = ["b1", "b2", "c1", "c2"]
    fig, axes = plt.subplots(2, 2, figsize=(8.5, 6.0), sharex=True)
    for ax, name in zip(axes.ravel(), names):
        for kappa in kappas:
            pts = sorted((r["sigma"], r[name]) for r in rows if r["kappa"] == kappa)
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker=".", label=f"kappa={kappa:g}")
        ax.axhline(0.0, color="k", lw=0.6)
        ax.set_title(name.upper(), fontsize=9)
        ax.grid(alpha=0.3)
    axes[1, 0].set_xlabel("noise std")
    axes[1, 1].set_xlabel("noise std")
    axes[0, 0].legend(fontsize=7)
    fig.suptitle(title, fontsize=10)
    _save(fig, path)
