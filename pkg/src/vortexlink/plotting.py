"""Static PNG figures rendered from experiment results."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .channel import concurrence_vs_sr  # noqa: E402
from .states import VECTOR_MODE_NAMES  # noqa: E402


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_sweep(result, path) -> None:
    fig, (ax, ax_f) = plt.subplots(1, 2, figsize=(9, 3.8))
    sr = result.column("sr_target")
    curve = np.linspace(0.05, 1, 200)
    ax.plot(curve, [concurrence_vs_sr(s) for s in curve], "k-", label="SR/(SR²-SR+1)")
    ax.errorbar(sr, result.column("c_mean"), yerr=result.column("c_std"), fmt="o", capsize=3,
                label="per screen")
    ax.plot(sr, result.column("c_ensemble"), "s", label="ensemble state")
    ax.set_xlabel("Strehl ratio")
    ax.set_ylabel("concurrence")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    ax_f.errorbar(sr, result.column("fidelity_mean"), yerr=result.column("fidelity_std"),
                  fmt="o", capsize=3)
    ax_f.set_xlabel("Strehl ratio")
    ax_f.set_ylabel("fidelity with TM")
    _save(fig, path)


def plot_linearity(rows, fits, path) -> None:
    fig, ax = plt.subplots(figsize=(4.5, 4))
    x = np.linspace(0, 1, 2)
    for fit in fits:
        pts = np.array([(r[3], r[4]) for r in rows if r[0] == fit.sr_target])
        line = ax.plot(pts[:, 0], pts[:, 1], "o", label=f"SR {fit.sr_measured:.2f}")
        ax.plot(x, fit.slope * x + fit.intercept, "-", color=line[0].get_color())
    ax.set_xlabel("input concurrence")
    ax.set_ylabel("output concurrence")
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_crosstalk(sr_list, matrices, path) -> None:
    fig, axes = plt.subplots(1, len(matrices), figsize=(2.6 * len(matrices), 2.8), squeeze=False)
    for ax, sr, m in zip(axes[0], sr_list, matrices):
        ax.imshow(m.t, vmin=0, vmax=1, cmap="viridis")
        ax.set_xticks(range(4), VECTOR_MODE_NAMES, fontsize=7)
        ax.set_yticks(range(4), VECTOR_MODE_NAMES, fontsize=7)
        ax.set_title(f"SR {sr:.2f}", fontsize=9)
    _save(fig, path)


def plot_calibration(rows, path) -> None:
    fig, ax = plt.subplots(figsize=(4, 4))
    target = [r.target_sr for r in rows]
    ax.errorbar(target, [r.mean_sr for r in rows], yerr=[r.std_sr for r in rows], fmt="o",
                capsize=3)
    ax.plot([0, 1], [0, 1], "k--", lw=0.8)
    ax.set_xlabel("encoded SR")
    ax.set_ylabel("measured SR")
    _save(fig, path)
