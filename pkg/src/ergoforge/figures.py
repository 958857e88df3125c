"""Matplotlib rendering for the report path.

Figures are written next to the delimited output and derived from the same
parsed record rows; they never feed back into any computation.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_EXACT_STYLE = dict(color="tab:orange", lw=1.8, zorder=3)
_MARKERS = ["o", "s", "^", "d", "v", "*", "P", "X"]


def _group_exact(rows):
    exact = {}
    for r in rows:
        if r["method"] == "exact":
            exact.setdefault(r["m"], []).append(r)
    for series in exact.values():
        series.sort(key=lambda r: r["t"])
    return exact


def _group_variational(rows):
    """mean/std over seeds per (m, depth, method, t)."""
    import numpy as np

    cells = {}
    for r in rows:
        if r["method"].endswith("-vq") and r["seed"] is not None:
            cells.setdefault((r["m"], r["depth"], r["method"], r["t"]), []).append(r["ergotropy"])
    series = {}
    for (m, depth, method, t), vals in cells.items():
        series.setdefault((m, depth, method), []).append(
            (t, float(np.mean(vals)), float(np.std(vals)))
        )
    for pts in series.values():
        pts.sort()
    return series


def render_dynamics(rows, path: Path) -> Path | None:
    """Work, ergotropy, and efficiency vs charging time, one line per M (exact rows)."""
    exact = _group_exact(rows)
    if not exact:
        return None
    fig, axes = plt.subplots(3, 1, figsize=(6.0, 7.5), sharex=True)
    for m in sorted(exact):
        series = exact[m]
        ts = [r["t"] for r in series]
        axes[0].plot(ts, [r["work"] for r in series], label=f"M={m}")
        axes[1].plot(ts, [r["ergotropy"] for r in series])
        eff_t = [(r["t"], r["efficiency"]) for r in series if r["efficiency"] is not None]
        if eff_t:
            axes[2].plot(*zip(*eff_t))
    axes[0].set_ylabel("stored work")
    axes[1].set_ylabel("ergotropy")
    axes[2].set_ylabel("efficiency")
    axes[2].set_xlabel("charging time t")
    axes[0].legend(fontsize=8, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_ergotropy_comparison(rows, path: Path) -> Path | None:
    """Seed-averaged variational ergotropy with error bars over the exact curve."""
    exact = _group_exact(rows)
    series = _group_variational(rows)
    if not series:
        return None
    ms = sorted({m for m, _, _ in series})
    ncols = min(4, len(ms))
    nrows_fig = (len(ms) + ncols - 1) // ncols
    fig, axes = plt.subplots(
        nrows_fig, ncols, figsize=(3.2 * ncols, 2.8 * nrows_fig), squeeze=False, sharex=True
    )
    for idx, m in enumerate(ms):
        ax = axes[idx // ncols][idx % ncols]
        if m in exact:
            ts = [r["t"] for r in exact[m]]
            ax.plot(ts, [r["ergotropy"] for r in exact[m]], label="exact", **_EXACT_STYLE)
        mark = 0
        for (mm, depth, method), pts in sorted(series.items()):
            if mm != m:
                continue
            ts, means, stds = zip(*pts)
            ax.errorbar(
                ts, means, yerr=stds, fmt=_MARKERS[mark % len(_MARKERS)], ms=4,
                capsize=2, lw=0.8, label=f"{method} d={depth}",
            )
            mark += 1
        ax.set_title(f"M={m}", fontsize=9)
        if idx == 0:
            ax.legend(fontsize=7)
    for ax in axes[-1]:
        ax.set_xlabel("t")
    for row_axes in axes:
        row_axes[0].set_ylabel("ergotropy")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_error_vs_subsystem(rows, path: Path) -> Path | None:
    """Worst-over-grid |seed-mean - exact| per subsystem size, one line per depth."""
    import numpy as np

    exact = {(r["m"], r["t"]): r["ergotropy"] for r in rows if r["method"] == "exact"}
    series = _group_variational(rows)
    if not exact or not series:
        return None
    curves = {}
    for (m, depth, method), pts in series.items():
        errs = [abs(mean - exact[(m, t)]) for t, mean, _ in pts if (m, t) in exact]
        if errs:
            curves.setdefault((depth, method), []).append((m, max(errs)))
    if not curves:
        return None
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    for i, ((depth, method), pts) in enumerate(sorted(curves.items())):
        pts.sort()
        ax.semilogy(*zip(*pts), marker=_MARKERS[i % len(_MARKERS)], label=f"{method} d={depth}")
    ax.set_xlabel("subsystem size M")
    ax.set_ylabel("max |ergotropy error|")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_report_figures(rows, fig_dir: Path) -> list[Path]:
    fig_dir = Path(fig_dir)
    fig_dir.mkdir(parents=True, exist_ok=True)
    out = [
        render_dynamics(rows, fig_dir / "exact_dynamics.png"),
        render_ergotropy_comparison(rows, fig_dir / "ergotropy_vs_time.png"),
        render_error_vs_subsystem(rows, fig_dir / "error_vs_subsystem.png"),
    ]
    return [p for p in out if p is not None]
