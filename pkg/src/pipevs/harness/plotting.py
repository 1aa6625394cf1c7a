"""Static SVG figures for single runs and sweeps."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..world import sample_centerline  # noqa: E402
from .metrics import COL  # noqa: E402

# Fixed metadata so identical data gives byte-identical files.
SVG_META = {"Date": None, "Creator": None}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata=SVG_META)
    plt.close(fig)


def plot_run(log: np.ndarray, out_dir, cfg) -> list:
    """Feature errors, widths and the flown path over the pipeline."""
    out_dir = Path(out_dir)
    paths = []
    if log.shape[0] == 0:
        return paths
    t = log[:, COL["t"]]

    fig, axes = plt.subplots(3, 1, figsize=(8, 7), sharex=True)
    axes[0].plot(t, log[:, COL["theta_true"]] - np.pi / 2, label="true")
    axes[0].plot(t, log[:, COL["theta_est"]] - np.pi / 2, label="to controller", lw=0.8)
    axes[0].set_ylabel("theta - pi/2 [rad]")
    axes[1].plot(t, log[:, COL["r_true"]], label="true")
    axes[1].plot(t, log[:, COL["r_est"]], label="to controller", lw=0.8)
    axes[1].set_ylabel("r [-]")
    axes[2].plot(t, log[:, COL["rho_c_true"]], label="center row")
    axes[2].plot(t, log[:, COL["rho_f_true"]], label="front row", lw=0.8)
    axes[2].axhline(cfg.vmpc.rho_d, color="k", ls="--", lw=0.6)
    axes[2].set_ylabel("width [px]")
    axes[2].set_xlabel("t [s]")
    for ax in axes:
        ax.legend(loc="upper right", fontsize=7)
        ax.grid(alpha=0.3)
    fig.suptitle(f"{cfg.method}: image features")
    fig.tight_layout()
    paths.append(out_dir / "features.svg")
    _save(fig, paths[-1])

    s = np.linspace(0.0, cfg.pipeline.total_length, 800)
    centre = sample_centerline(cfg.pipeline, s)
    fig, (ax_xy, ax_z) = plt.subplots(1, 2, figsize=(10, 4))
    ax_xy.plot(centre[:, 0], centre[:, 1], "k-", lw=3, alpha=0.3, label="pipe")
    ax_xy.plot(log[:, COL["p_x"]], log[:, COL["p_y"]], lw=1, label="vehicle")
    ax_xy.set_aspect("equal")
    ax_xy.set_xlabel("x [m]")
    ax_xy.set_ylabel("y [m]")
    ax_xy.legend(fontsize=7)
    ax_z.plot(s, centre[:, 2] + cfg.pipeline.diameter / 2, "k-", lw=1, label="pipe top")
    ax_z.plot(log[:, COL["s_near"]], log[:, COL["p_z"]], lw=1, label="vehicle")
    ax_z.set_xlabel("arclength [m]")
    ax_z.set_ylabel("z [m]")
    ax_z.legend(fontsize=7)
    fig.tight_layout()
    paths.append(out_dir / "path.svg")
    _save(fig, paths[-1])
    return paths


def plot_sweep(rows: list, out_dir, metrics=("rmse_theta", "rmse_r")) -> list:
    """One grouped bar chart per metric: methods side by side per scenario."""
    out_dir = Path(out_dir)
    methods = sorted({r["method"] for r in rows})
    scenarios = list(dict.fromkeys(r["scenario"] for r in rows))
    paths = []
    width = 0.8 / max(len(methods), 1)
    for metric in metrics:
        fig, ax = plt.subplots(figsize=(max(6, 1.6 * len(scenarios)), 4))
        x = np.arange(len(scenarios))
        for i, m in enumerate(methods):
            vals = []
            for sc in scenarios:
                hit = [r for r in rows if r["method"] == m and r["scenario"] == sc]
                v = hit[0].get(metric) if hit else None
                vals.append(np.nan if v is None else v)
            ax.bar(x + i * width - 0.4 + width / 2, vals, width, label=m)
        ax.set_xticks(x)
        ax.set_xticklabels(scenarios, rotation=20, ha="right", fontsize=7)
        ax.set_ylabel(metric)
        ax.legend(fontsize=7)
        ax.grid(axis="y", alpha=0.3)
        fig.tight_layout()
        paths.append(out_dir / f"{metric}.svg")
        _save(fig, paths[-1])
    return paths
