"""Matplotlib figures for the CLI reports (Agg backend, PNG output)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "legend.fontsize": 8,
    "lines.linewidth": 1.4,
}


def new(nrows: int = 1, ncols: int = 1, **kw):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(nrows, ncols, **kw)
    return fig, ax


def save(fig, path: str | Path) -> Path:
    """Write a PNG without a software tag so reruns are byte-identical."""
    path = Path(path)
    with plt.rc_context(STYLE):
        fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
    return path


def speedtest_figure(t, speed, jac_speed, argmax_time):
    fig, ax = new()
    ax.plot(t, speed, label="finite difference")
    ax.plot(t, jac_speed, "--", label="|J qdot|")
    ax.axvline(argmax_time, color="0.5", lw=0.8)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("EE speed [m/s]")
    ax.legend()
    fig.tight_layout()
    return fig


def repeatability_figure(targets, mu, sigma, r):
    fig, ax = new()
    x = np.arange(len(targets))
    w = 0.27
    ax.bar(x - w, mu, w, label="mu")
    ax.bar(x, sigma, w, label="sigma")
    ax.bar(x + w, r, w, label="R")
    ax.set_xticks(x, targets)
    ax.set_ylabel("[mm]")
    ax.legend()
    fig.tight_layout()
    return fig


def episodes_figure(seeds, final_errors, success):
    fig, ax = new()
    colors = ["tab:green" if s else "tab:red" for s in success]
    ax.bar(np.arange(len(seeds)), final_errors, color=colors)
    ax.set_xticks(np.arange(len(seeds)), [str(s) for s in seeds], rotation=90)
    ax.set_xlabel("seed")
    ax.set_ylabel("final keypoint error [m]")
    fig.tight_layout()
    return fig


def learning_curve_figure(curve, elite_curve):
    fig, ax = new()
    it = np.arange(len(curve))
    ax.plot(it, curve, marker=".", label="population mean")
    ax.plot(it, elite_curve, marker=".", label="elite mean")
    ax.set_xlabel("iteration")
    ax.set_ylabel("episode return")
    ax.legend()
    fig.tight_layout()
    return fig


def retarget_figure(trajectories: dict):
    fig, axes = new(2, 1, sharex=True, figsize=(6.4, 5.0))
    for side, traj in trajectories.items():
        for j in range(traj.q.shape[1]):
            axes[0].plot(traj.t, traj.q[:, j], label=f"{side} q{j + 1}")
        axes[1].plot(traj.t, 1000 * traj.wrist_error, label=f"{side} wrist")
        axes[1].plot(traj.t, 1000 * traj.elbow_error, "--", label=f"{side} elbow")
    axes[0].set_ylabel("joint angle [rad]")
    axes[0].legend(ncol=4, fontsize=6)
    axes[1].set_ylabel("tracking error [mm]")
    axes[1].set_xlabel("time [s]")
    axes[1].legend(fontsize=6)
    fig.tight_layout()
    return fig


def ballistics_figure(x, z, h0):
    fig, ax = new()
    ax.plot(x, z)
    ax.plot([0.0], [h0], "o", color="0.3")
    ax.set_xlabel("horizontal distance [m]")
    ax.set_ylabel("height [m]")
    ax.set_aspect("equal", adjustable="datalim")
    fig.tight_layout()
    return fig


def calibration_figure(samples_i, samples_t, grid_i, grid_t):
    fig, ax = new()
    ax.plot(grid_i, grid_t, label="interpolation")
    ax.plot(samples_i, samples_t, "o", ms=4, label="samples")
    ax.set_xlabel("current [A]")
    ax.set_ylabel("torque [N m]")
    ax.legend()
    fig.tight_layout()
    return fig
