"""Multi-rate closed-loop episode: plant, camera, method, logging, termination."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..baselines import make_method
from ..errors import PipevsError
from ..vision import FeatureObservation, camera_pose, extract_features
from ..world import (hover_state, measure_state, nearest_arclength, pipeline_point,
                     sample_centerline, sample_wind, step_plant)
from .config import ScenarioConfig
from .metrics import LOG_COLUMNS, RunMetrics, solve_time_stats, tracking_metrics, write_log

NAN2 = np.full(2, np.nan)


@dataclass
class EpisodeResult:
    metrics: RunMetrics
    log: np.ndarray
    solve_times: np.ndarray
    out_dir: Optional[Path]


def initial_state(cfg: ScenarioConfig):
    """Level flight above the centerline at the configured arclength and offset.

    The vehicle starts at ``start_speed`` along the local pipe tangent
    (hover when zero).
    """
    p_c, tangent = pipeline_point(cfg.pipeline, cfg.start_arclength)
    heading = np.arctan2(tangent[1], tangent[0])
    left = np.array([-np.sin(heading), np.cos(heading), 0.0])
    p = p_c + cfg.start_lateral_offset * left + np.array([0.0, 0.0, cfg.start_height])
    v = cfg.start_speed * np.array([tangent[0], tangent[1], 0.0]) / np.hypot(*tangent[:2])
    return hover_state(p, heading + cfg.start_yaw_offset, v=v, mass=cfg.mass)


def _lookahead_past_end(cfg: ScenarioConfig, p_cam, R_WC) -> bool:
    """Whether the look-ahead scan row's line of sight has passed the pipe end.

    The ray through the front scan row is intersected with the horizontal
    plane of the end point; at that moment the whole pipe has been tracked.
    """
    end, tangent = pipeline_point(cfg.pipeline, cfg.pipeline.total_length)
    K = cfg.intrinsics
    ray = R_WC @ np.array([0.0, (K.front_row - K.c_v) / K.f_v, 1.0])
    if ray[2] >= -1e-6:
        return False
    ground = p_cam + (end[2] - p_cam[2]) / ray[2] * ray
    return float((ground - end)[:2] @ tangent[:2]) >= 0.0


def _row(t, cam_tick, delivered, truth, meas, obs_true, info, u, wind, s_near, seg):
    chi_true = obs_true.chi if obs_true.valid else NAN2
    rho = (obs_true.rho_c, obs_true.rho_f) if obs_true.valid else (np.nan, np.nan)
    got = delivered is not None
    chi_meas = delivered.chi if got and delivered.valid else NAN2
    return np.concatenate([
        [t, cam_tick, got, got and delivered.valid],
        truth.p, truth.v, truth.psi, meas.v, meas.psi,
        chi_true, rho, chi_meas, info.chi_pred, info.chi_est, info.d_hat,
        u.omega, [u.c, info.iterations, info.cost, info.stage_cost, info.controlling],
        wind, [s_near, seg],
    ])


def run_episode(cfg: ScenarioConfig, out_dir=None, write: bool = True,
                plots: bool = False) -> EpisodeResult:
    """Run one closed-loop episode and optionally write its log and summary.

    Files written to ``out_dir`` (default ``cfg.output_dir``): ``log.csv``
    (one row per state tick, deterministic), ``timing.csv`` (solver wall
    times, not deterministic) and ``metrics.json``.
    """
    dt = cfg.dt
    n_ticks = int(round(cfg.time_limit * cfg.state_rate))
    pipe = cfg.pipeline
    wind_rng, noise_rng, drop_rng = (np.random.default_rng(s)
                                     for s in np.random.SeedSequence(cfg.seed).spawn(3))
    method = make_method(cfg.method, cfg.vmpc, cfg.eskf, cfg.extrinsics, cfg.tracker,
                         cfg.ibvs, cfg.ibvs_mpc, cfg.use_commanded_rates)

    state = initial_state(cfg)
    wind = cfg.wind.initial(wind_rng)
    pending: deque = deque()
    rows, solve_times = [], []
    s_hint = cfg.start_arclength
    s_max = s_hint
    last_valid_time = 0.0
    camera_ticks = 0
    crash_reason = None
    termination = "duration"

    for k in range(n_ticks):
        t = k * dt
        s_near = nearest_arclength(pipe, state.p, s_hint)
        s_hint = s_near
        s_max = max(s_max, s_near)
        p_cam, R_WC = camera_pose(state.p, state.psi, cfg.extrinsics)
        if s_near >= pipe.total_length - 2.0 and _lookahead_past_end(cfg, p_cam, R_WC):
            termination = "completed"
            break
        pipe_top = sample_centerline(pipe, [s_near])[0, 2] + pipe.diameter / 2
        tilt = np.arccos(np.clip(np.cos(state.psi[0]) * np.cos(state.psi[1]), -1.0, 1.0))
        if state.p[2] - pipe_top <= cfg.min_clearance:
            crash_reason = "altitude at or below minimum clearance over the pipe"
        elif tilt > cfg.max_tilt:
            crash_reason = "tilt beyond limit"
        elif t - last_valid_time > cfg.feature_timeout:
            crash_reason = "features invalid for longer than the timeout"
        if crash_reason:
            break

        obs_true = extract_features(state, pipe, cfg.intrinsics, cfg.extrinsics, t)
        cam_tick = k % cfg.camera_stride == 0
        if cam_tick:
            camera_ticks += 1
            dropped = drop_rng.random() < cfg.dropout
            captured = FeatureObservation.invalid(t) if dropped else obs_true
            pending.append((k + cfg.latency_ticks, captured))
        delivered = pending.popleft()[1] if pending and pending[0][0] == k else None
        if delivered is not None and delivered.valid:
            last_valid_time = t
        meas = measure_state(state, cfg.noise_sigma2, noise_rng, t)

        try:
            u, info = method.step(t, delivered, meas)
        except PipevsError as exc:
            crash_reason = f"controller fault: {type(exc).__name__}: {exc}"
            break
        solve_times.append(info.solve_time)
        rows.append(_row(t, cam_tick, delivered, state, meas, obs_true, info, u, wind,
                         s_near, pipe.segment_index(s_near)))

        try:
            state = step_plant(state, u, dt, cfg.actuator, mass=cfg.mass, wind_velocity=wind,
                               drag_coeff=cfg.wind.drag_coeff)
        except PipevsError as exc:
            crash_reason = f"plant fault: {type(exc).__name__}: {exc}"
            break
        wind = sample_wind(cfg.wind, dt, wind_rng, wind)

    if crash_reason:
        termination = "crash"
    log = np.asarray(rows, dtype=float).reshape(-1, len(LOG_COLUMNS))
    rt, rr, speed_err, warmup, n_metric = tracking_metrics(log, cfg.vmpc.v_hd)
    span = pipe.total_length - cfg.start_arclength
    completion = 1.0 if termination == "completed" else float(
        np.clip((s_max - cfg.start_arclength) / span, 0.0, 1.0))
    metrics = RunMetrics(
        method=cfg.method, seed=cfg.seed, rmse_theta=rt, rmse_r=rr, completion=completion,
        crashed=crash_reason is not None, crash_reason=crash_reason, termination=termination,
        mean_speed_error=speed_err, warmup_time=warmup, ticks=len(rows),
        camera_ticks=camera_ticks, metric_ticks=n_metric, sim_time=len(rows) * dt,
        v_hd=cfg.vmpc.v_hd, solve_time_stats=solve_time_stats(solve_times))

    target = None
    if write:
        target = Path(cfg.output_dir if out_dir is None else out_dir)
        target.mkdir(parents=True, exist_ok=True)
        write_log(target / "log.csv", log)
        np.savetxt(target / "timing.csv", np.asarray(solve_times, float), fmt="%.9g",
                   header="solve_time_s", comments="")
        metrics.write(target / "metrics.json")
        if plots:
            from .plotting import plot_run
            plot_run(log, target, cfg)
    return EpisodeResult(metrics, log, np.asarray(solve_times, float), target)
