"""Run metrics, the per-tick log layout, and recomputation from a saved log."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..baselines import wrap_line_angle
from ..errors import ConfigError, EmptySeries
from ..vision import CHI_DESIRED


def _cols(name, n):
    return [f"{name}_{i}" for i in range(n)] if n > 1 else [name]


LOG_COLUMNS = (
    ["t", "camera_tick", "image_delivered", "image_valid"]
    + ["p_x", "p_y", "p_z", "v_x", "v_y", "v_z", "phi", "beta", "alpha"]
    + ["vm_x", "vm_y", "vm_z", "phim", "betam", "alpham"]
    + ["theta_true", "r_true", "rho_c_true", "rho_f_true"]
    + ["theta_meas", "r_meas", "theta_pred", "r_pred", "theta_est", "r_est"]
    + _cols("d_hat", 5)
    + ["omega_x", "omega_y", "omega_z", "thrust"]
    + ["iterations", "cost", "stage_cost", "controlling"]
    + ["wind_x", "wind_y", "wind_z", "s_near", "segment"]
)
COL = {name: i for i, name in enumerate(LOG_COLUMNS)}


def compute_rmse(chi, chi_d=None):
    """Per-channel RMSE of ``chi - chi_d`` with the angle error folded.

    ``chi`` is an (n, 2) series; ``chi_d`` defaults to the regulation target.
    """
    chi = np.atleast_2d(np.asarray(chi, dtype=float))
    if chi.size == 0 or chi.shape[0] == 0:
        raise EmptySeries("RMSE of an empty series")
    chi_d = np.broadcast_to(CHI_DESIRED if chi_d is None else np.asarray(chi_d, float), chi.shape)
    e_theta = wrap_line_angle(chi[:, 0] - chi_d[:, 0])
    e_r = chi[:, 1] - chi_d[:, 1]
    return float(np.sqrt(np.mean(e_theta ** 2))), float(np.sqrt(np.mean(e_r ** 2)))


@dataclass
class RunMetrics:
    method: str
    seed: int
    rmse_theta: Optional[float]
    rmse_r: Optional[float]
    completion: float
    crashed: bool
    crash_reason: Optional[str]
    termination: str
    mean_speed_error: Optional[float]
    warmup_time: Optional[float]
    ticks: int
    camera_ticks: int
    metric_ticks: int
    sim_time: float
    v_hd: float
    solve_time_stats: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def solve_time_stats(times) -> dict:
    times = np.asarray([t for t in times if np.isfinite(t)], dtype=float)
    if times.size == 0:
        return {"count": 0}
    return {"count": int(times.size), "mean": float(times.mean()),
            "median": float(np.median(times)), "p99": float(np.percentile(times, 99)),
            "max": float(times.max())}


def tracking_metrics(log: np.ndarray, v_hd: float):
    """``(rmse_theta, rmse_r, mean_speed_error, warmup_time, n)`` from log rows.

    Only ticks where a method was actively controlling and the true feature
    was visible are scored, so the pre-first-image warmup is excluded.
    """
    log = np.atleast_2d(log)
    if log.shape[0] == 0 or log.shape[1] == 0:
        return None, None, None, None, 0
    ctrl = log[:, COL["controlling"]] > 0.5
    warmup = float(log[ctrl, COL["t"]][0]) if np.any(ctrl) else None
    vis = ctrl & np.isfinite(log[:, COL["theta_true"]])
    if not np.any(vis):
        return None, None, None, warmup, 0
    rt, rr = compute_rmse(log[vis][:, [COL["theta_true"], COL["r_true"]]])
    a = log[vis, COL["alpha"]]
    v_h = np.cos(a) * log[vis, COL["v_x"]] + np.sin(a) * log[vis, COL["v_y"]]
    return rt, rr, float(np.mean(np.abs(v_h - v_hd))), warmup, int(vis.sum())


def read_log(path) -> np.ndarray:
    """Load a per-tick log written by :func:`write_log`."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read log {path}: {exc}") from exc
    if not lines or lines[0].strip().split(",") != LOG_COLUMNS:
        raise ConfigError(f"{path} does not have the expected log header")
    body = [ln for ln in lines[1:] if ln.strip()]
    if not body:
        return np.empty((0, len(LOG_COLUMNS)))
    data = np.loadtxt(body, delimiter=",", ndmin=2)
    return data.reshape(-1, len(LOG_COLUMNS))


def write_log(path, rows) -> None:
    rows = np.asarray(rows, dtype=float).reshape(-1, len(LOG_COLUMNS))
    np.savetxt(path, rows, delimiter=",", fmt="%.17g", header=",".join(LOG_COLUMNS),
               comments="")


def replay(log_path, v_hd: Optional[float] = None) -> dict:
    """Recompute the tracking metrics of a run from its log alone.

    ``v_hd`` defaults to the value stored in the neighbouring metrics file.
    """
    log_path = Path(log_path)
    if v_hd is None:
        summary = log_path.with_name("metrics.json")
        v_hd = json.loads(summary.read_text()).get("v_hd", 0.5) if summary.exists() else 0.5
    rt, rr, mse, warmup, n = tracking_metrics(read_log(log_path), v_hd)
    return {"rmse_theta": rt, "rmse_r": rr, "mean_speed_error": mse, "warmup_time": warmup,
            "metric_ticks": n}
