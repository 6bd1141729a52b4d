"""Figure rendering: image grids, training-loss curves, and metric summaries.

Pixel-exact grid composition is done in numpy; report figures are rendered
with matplotlib to PNG files next to the CSV they summarize.
"""

import csv

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

GRID_GAP = 4


def compose_grid(rows, cell_size=256, gap=GRID_GAP, background=1.0):
    """Stack image rows into one (3, H, W) array.

    ``rows`` is a list of lists of (3, h, w) images; each cell is resized to
    ``cell_size`` and cells are separated by ``gap`` background pixels. The
    output is exactly (rows*cell + (rows-1)*gap) tall and
    (cols*cell + (cols-1)*gap) wide.
    """
    from . import imaging

    n_rows = len(rows)
    n_cols = max(len(r) for r in rows)
    height = n_rows * cell_size + (n_rows - 1) * gap
    width = n_cols * cell_size + (n_cols - 1) * gap
    canvas = np.full((3, height, width), background, dtype=np.float32)
    for i, row in enumerate(rows):
        for j, cell in enumerate(row):
            cell = np.asarray(cell, dtype=np.float32)
            if cell.shape[0] == 1:
                cell = np.repeat(cell, 3, axis=0)
            if cell.shape[1] != cell_size or cell.shape[2] != cell_size:
                cell = imaging.resize_rgb(cell, cell_size, cell_size)
            top = i * (cell_size + gap)
            left = j * (cell_size + gap)
            canvas[:, top : top + cell_size, left : left + cell_size] = cell
    return np.clip(canvas, 0.0, 1.0)


def depth_to_gray(depth, depth_max=6.0):
    """Scale a (1, H, W) depth map in meters to a [0, 1] grayscale image."""
    return np.clip(np.asarray(depth, dtype=np.float32) / depth_max, 0.0, 1.0)


def save_loss_curves(log_csv_path, fig_path):
    """Render the per-iteration loss columns of a training log to a figure."""
    with open(log_csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    if not rows:
        return
    iterations = [int(r["iteration"]) for r in rows]
    fields = ["l_g", "l_d", "l_cycle", "l_perc", "l_bhat", "total"]
    fig, ax = plt.subplots(figsize=(8, 5))
    for field in fields:
        ax.plot(iterations, [float(r[field]) for r in rows], label=field, lw=1)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend(ncol=3, fontsize=8)
    ax.set_title("training losses")
    fig.tight_layout()
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)


def save_metric_summary(rows, means, fig_path):
    """Render an evaluation report: mean bar chart plus score distributions.

    ``rows`` are per-image metric dicts and ``means`` the footer means, as
    written to the CSV.
    """
    numeric = [k for k, v in means.items() if isinstance(v, float)]
    fig, axes = plt.subplots(1, 2, figsize=(11, 4))

    axes[0].barh(range(len(numeric)), [means[k] for k in numeric], color="#3b7dd8")
    axes[0].set_yticks(range(len(numeric)))
    axes[0].set_yticklabels(numeric, fontsize=8)
    axes[0].set_xscale("symlog")
    axes[0].set_title(f"mean metrics over {len(rows)} images")

    for key in ("uciqe", "u"):
        if rows and key in rows[0]:
            axes[1].hist(
                [float(r[key]) for r in rows], bins=min(20, max(3, len(rows))),
                alpha=0.6, label=key,
            )
    axes[1].legend()
    axes[1].set_title("score distributions")
    fig.tight_layout()
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)
