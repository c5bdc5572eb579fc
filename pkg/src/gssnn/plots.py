"""Figure rendering for exported run statistics.

One panel per iteration: train (and validation, when present) accuracy
against population rank, raw values dotted with a window-6 moving average
overlaid once a curve is long enough to smooth.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

SMOOTH_WINDOW = 6


def _smooth(ys: np.ndarray, window: int = SMOOTH_WINDOW) -> np.ndarray | None:
    if ys.size < window:
        return None
    kernel = np.full(window, 1.0 / window)
    return np.convolve(ys, kernel, mode="valid")


def render_stats_figure(rows, out_path) -> None:
    """Render the per-iteration accuracy curves behind a stats CSV."""
    by_iter: dict[int, list[dict]] = {}
    for r in rows:
        by_iter.setdefault(r["iteration"], []).append(r)
    iterations = sorted(by_iter)
    ncols = min(len(iterations),  5) or 1
    nrows = (len(iterations) + ncols - 1) // ncols
    fig, axes = plt.subplots(
        nrows, ncols, figsize=(3.2 * ncols, 2.8 * nrows), squeeze=False, sharey=True
    )
    for ax in axes.flat:
        ax.set_visible(False)
    for slot, k in enumerate(iterations):
        ax = axes[slot // ncols][slot % ncols]
        ax.set_visible(True)
        grp = sorted(by_iter[k], key=lambda r: r["rank"])
        for field, color, label in (
            ("train_accuracy", "tab:blue", "train"),
            ("validation_accuracy", "tab:orange", "validation"),
        ):
            pts = [(r["rank"], r[field]) for r in grp if r[field] is not None]
            if not pts:
                continue
            xs = np.array([p[0] for p in pts], dtype=float)
            ys = np.array([p[1] for p in pts], dtype=float)
            ax.plot(xs, ys, linestyle=":", linewidth=1.0, color=color, label=label)
            smooth = _smooth(ys)
            if smooth is not None:
                off = (len(ys) - len(smooth)) / 2.0
                ax.plot(
                    xs[: len(smooth)] + off,
                    smooth,
                    linestyle="-",
                    linewidth=1.5,
                    color=color,
                )
        ax.set_title(f"iteration {k} (n={len(grp)})", fontsize=9)
        ax.set_xlabel("rank")
        if slot % ncols == 0:
            ax.set_ylabel("accuracy")
        ax.tick_params(labelsize=8)
    handles, labels = axes[0][0].get_legend_handles_labels()
    if handles:
        fig.legend(handles, labels, loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
