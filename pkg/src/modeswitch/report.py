"""Figure rendering for the CLI report path.

Each figure is written next to the delimited output of its command; rendering
is headless (Agg) and never required for the numerical results.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_DPI = 150


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def render_paths(batch, path, max_shown=40):
    """Fan chart of both mode-frozen diffusions."""
    times = batch.grid.times
    shown = min(max_shown, batch.n_paths)
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6), sharey=True)
    for ax, states, label in (
        (axes[0], batch.states0, "mode 0"),
        (axes[1], batch.states1, "mode 1"),
    ):
        for p in range(shown):
            ax.plot(times, states[p], lw=0.7, alpha=0.6)
        ax.set_title(f"X under {label} ({shown} of {batch.n_paths} paths)")
        ax.set_xlabel("t")
    axes[0].set_ylabel("state")
    return _save(fig, path)


def _per_step_band(process):
    lo = np.array([np.min(v) for v in process.values])
    hi = np.array([np.max(v) for v in process.values])
    mid = np.array([np.median(v) for v in process.values])
    return lo, mid, hi


def render_switching(sol, path):
    """Value difference against the cost barriers, plus the two mode values."""
    times = sol.ydiff.scene.grid.times
    lo, mid, hi = _per_step_band(sol.ydiff)
    low = np.array([v[0] for v in sol.lower.values])
    up = np.array([v[0] for v in sol.upper.values])
    fig, axes = plt.subplots(1, 2, figsize=(9.5, 3.8))
    ax = axes[0]
    ax.fill_between(times, lo, hi, alpha=0.25, label="Y1 - Y2 range")
    ax.plot(times, mid, lw=1.2, label="Y1 - Y2 median")
    ax.plot(times, low, "k--", lw=1.0, label="-c01 e^{-bt}")
    ax.plot(times, up, "k:", lw=1.0, label="c10 e^{-bt}")
    frac01 = [float(np.mean(m)) for m in sol.switch_region_0to1]
    frac10 = [float(np.mean(m)) for m in sol.switch_region_1to0]
    ax.set_xlabel("t")
    ax.set_title("value difference and switch barriers")
    ax.legend(fontsize=7)
    ax = axes[1]
    y1 = np.array([float(np.mean(v)) for v in sol.y1.values])
    y2 = np.array([float(np.mean(v)) for v in sol.y2.values])
    ax.plot(times, y1, label="Y1 (start in 0)")
    ax.plot(times, y2, label="Y2 (start in 1)")
    ax2 = ax.twinx()
    ax2.plot(times, frac01, color="tab:red", lw=0.8, alpha=0.6, label="0->1 region")
    ax2.plot(times, frac10, color="tab:green", lw=0.8, alpha=0.6, label="1->0 region")
    ax2.set_ylabel("active node fraction", fontsize=8)
    ax.set_xlabel("t")
    ax.set_title("mode values and region activity")
    ax.legend(fontsize=7, loc="upper right")
    return _save(fig, path)


def render_rbsde(sol, lower, upper, path):
    """Solution band with its barriers and the cumulative discounted pushes."""
    times = sol.y.scene.grid.times
    lo, mid, hi = _per_step_band(sol.y)
    fig, axes = plt.subplots(1, 2, figsize=(9.5, 3.8))
    ax = axes[0]
    ax.fill_between(times, lo, hi, alpha=0.25, label="Y range")
    ax.plot(times, mid, lw=1.2, label="Y median")
    if lower is not None:
        ax.plot(times, [np.min(v) for v in lower.values], "k--", lw=1.0, label="L")
    if upper is not None:
        ax.plot(times, [np.max(v) for v in upper.values], "k:", lw=1.0, label="U")
    ax.set_xlabel("t")
    ax.set_title("reflected solution")
    ax.legend(fontsize=7)
    ax = axes[1]
    push_p = np.array([float(np.max(v)) for v in sol.wdk_plus.values])
    push_m = np.array([float(np.max(v)) for v in sol.wdk_minus.values])
    ax.plot(times, np.cumsum(push_p), label="max-node cum. discounted K+")
    ax.plot(times, np.cumsum(push_m), label="max-node cum. discounted K-")
    ax.set_xlabel("t")
    ax.set_title("push mass accumulation")
    ax.legend(fontsize=7)
    return _save(fig, path)


def render_bsde(sol, path):
    times = sol.y.scene.grid.times
    lo, mid, hi = _per_step_band(sol.y)
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    ax.fill_between(times, lo, hi, alpha=0.25)
    ax.plot(times, mid, lw=1.2)
    ax.set_xlabel("t")
    ax.set_ylabel("Y")
    ax.set_title("backward solution envelope across nodes")
    return _save(fig, path)


def render_checks(rows, path):
    """Horizontal bars of measured check values against their bounds."""
    names = [r[0] for r in rows]
    measured = np.array([r[2] for r in rows], dtype=float)
    bounds = np.array([r[3] for r in rows], dtype=float)
    y = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(7.0, 0.5 * len(names) + 1.5))
    ax.barh(y, measured, height=0.5, label="measured")
    ax.plot(bounds, y, "k|", markersize=12, label="bound")
    ax.set_yticks(y, names, fontsize=7)
    ax.invert_yaxis()
    ax.set_xlabel("value")
    ax.set_title("verification checks")
    ax.legend(fontsize=7)
    return _save(fig, path)
