"""Matplotlib renderings of the evaluation artifacts.

Every function takes plain arrays (usually read back from the eval CSVs)
and writes a PNG next to the delimited output. Rendering is headless (Agg).
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

MEAN_PROPS = dict(marker="D", markerfacecolor="black", markeredgecolor="black",
                  markersize=5)
MEDIAN_PROPS = dict(color="tab:orange")


def weight_sweep_figure(rows, path):
    """Box plots of summed support-foot velocity RMSE per constraint weight.

    rows: iterable of (w, seed, linear_sum, angular_sum). Medians are drawn
    as orange lines, means as black diamonds.
    """
    rows = list(rows)
    ws = sorted({r[0] for r in rows})
    lin = [[r[2] for r in rows if r[0] == w] for w in ws]
    ang = [[r[3] for r in rows if r[0] == w] for w in ws]
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    for ax, data, label in zip(axes, (lin, ang),
                               ("linear velocity sum (m/s)",
                                "angular velocity sum (rad/s)")):
        ax.boxplot(data, tick_labels=[f"{w:g}" for w in ws], showmeans=True,
                   meanprops=MEAN_PROPS, medianprops=MEDIAN_PROPS)
        ax.set_xlabel("constraint weight w")
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
    fig.suptitle("Support-foot velocity vs. constraint weight")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def drift_paths_figure(paths, path):
    """Ground-projected base paths. paths: list of (label, xy, desired_xy)."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for i, (label, xy, desired) in enumerate(paths):
        ax.plot(xy[:, 0], xy[:, 1], label=label)
        if i == 0 and desired is not None:
            ax.plot(desired[:, 0], desired[:, 1], "k--", lw=1, label="desired")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.legend()
    ax.grid(True, alpha=0.3)
    ax.set_title("Ground-projected base displacement")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def foot_heights_figure(traces_by_label, path):
    """Per-run foot sole heights over time; one subplot per label."""
    items = list(traces_by_label.items())
    fig, axes = plt.subplots(len(items), 1, figsize=(7, 2.4 * len(items)),
                             sharex=True, squeeze=False)
    for ax, (label, tr) in zip(axes[:, 0], items):
        ax.plot(tr.time, tr.left_height, label="left")
        ax.plot(tr.time, tr.right_height, label="right")
        ax.set_ylabel("height (m)")
        ax.set_title(label, fontsize=9)
        ax.grid(True, alpha=0.3)
    axes[-1, 0].set_xlabel("time (s)")
    axes[0, 0].legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def foot_pitch_figure(traces_by_label, path):
    """Foot pitch angles over time, all runs overlaid."""
    fig, ax = plt.subplots(figsize=(7, 3.6))
    for label, tr in traces_by_label.items():
        ax.plot(tr.time, tr.left_pitch, label=f"{label} left", alpha=0.8)
        ax.plot(tr.time, tr.right_pitch, label=f"{label} right", alpha=0.8, ls="--")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("foot pitch (rad)")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=7, ncol=2)
    ax.set_title("Foot pitch over time")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def loss_history_figure(history, path):
    """Train/test loss curves from history rows (epoch, split, ld, lb, total)."""
    hist = np.array([(e, 0 if s == "train" else 1, ld, lb, tot)
                     for e, s, ld, lb, tot in history])
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.4))
    for ax, col, label in zip(axes, (2, 3), ("data loss", "constraint loss")):
        for split, name in ((0, "train"), (1, "test")):
            sel = hist[:, 1] == split
            ax.plot(hist[sel, 0], hist[sel, col], label=name)
        ax.set_xlabel("epoch")
        ax.set_ylabel(label)
        ax.set_yscale("log")
        ax.grid(True, alpha=0.3)
    axes[0].legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
