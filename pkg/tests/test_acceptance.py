"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
Regression thresholds for the comparative runs were fixed from a recorded
golden execution (seed 0) and are noted next to each check.
"""

import time

import numpy as np
import pytest

from oracles import fd_chi_wrt_points, fd_feature_jacobian, fd_point_interaction, random_view, relative_error
from pipevs.controller import VmpcConfig, cost_decrease_monitor, solve_vmpc
from pipevs.estimator import EskfConfig, eskf_matrices, eskf_step, ExtendedState, SIGNED_GRAVITY
from pipevs.frames import GRAVITY
from pipevs.harness.config import bundled_scenario, load_scenario
from pipevs.harness.episode import run_episode
from pipevs.harness.metrics import COL
from pipevs.vision import (CameraExtrinsics, CameraIntrinsics, chi_jacobian_wrt_points,
                           extract_features, full_feature_jacobian, point_interaction_matrix)
from pipevs.world import DEFAULT_MASS, PipelineModel, hover_state, straight

pytestmark = pytest.mark.slow

EXT = CameraExtrinsics()
WIND_METHODS = ("eskf-pre-vmpc", "eskf-vmpc", "ibvs", "ibvs-mpc")
SLOPE_BAND = 0.15
SLOPE_FRACTION = 0.95       # golden run: 100% of slope ticks inside the band
BASELINE_FACTOR = 2.0       # golden run: ibvs >= 12.5x, ibvs-mpc >= 7.0x


def _timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


def _episode(scenario, out_dir=None, **overrides):
    cfg = load_scenario(bundled_scenario(scenario)).with_overrides(**overrides)
    result, wall = _timed(run_episode, cfg, out_dir=out_dir, write=out_dir is not None)
    return cfg, result, wall


@pytest.fixture(scope="module", autouse=True)
def warm_jit():
    """Load the compiled solver once so timed sections exclude compilation."""
    x = np.array([np.pi / 2, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0])
    solve_vmpc(x, np.zeros(5), 300.0, 300.0, np.ones((2, 6)), VmpcConfig())


@pytest.fixture(scope="module")
def wind_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("wind")
    runs = {}
    for m in WIND_METHODS:
        cfg, result, wall = _episode("wind", out_dir=root / m, method=m)
        runs[m] = (cfg, result, wall)
    return runs


@pytest.fixture(scope="module")
def calm_runs():
    runs = {}
    for s2 in (0.001, 0.01):
        for m in ("eskf-pre-vmpc", "eskf-vmpc"):
            runs[(m, s2)] = _episode("default", method=m, noise_sigma2=s2)
    return runs


def test_criterion_1_jacobians(report):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = {"points": 0.0, "interaction": 0.0, "full": 0.0}
    for _ in range(200):
        p, psi, pts, obs = random_view(rng, EXT)
        e1, e2 = (obs.eta1.x, obs.eta1.y), (obs.eta2.x, obs.eta2.y)
        worst["points"] = max(worst["points"], relative_error(chi_jacobian_wrt_points(e1, e2),
                                                              fd_chi_wrt_points(e1, e2)))
        for pt in (obs.eta1, obs.eta2):
            eta = (pt.x, pt.y, pt.z)
            worst["interaction"] = max(worst["interaction"], relative_error(
                point_interaction_matrix(eta), fd_point_interaction(eta)))
        worst["full"] = max(worst["full"], relative_error(full_feature_jacobian(obs, psi, EXT),
                                                          fd_feature_jacobian(p, psi, EXT, pts)))
    wall = time.perf_counter() - t0
    ok = worst["points"] < 1e-5 and worst["interaction"] < 1e-5 and worst["full"] < 1e-3 and wall < 10
    report(1, ok, f"200 poses, max rel err points {worst['points']:.1e} interaction "
                  f"{worst['interaction']:.1e} full {worst['full']:.1e}, {wall:.1f} s")
    assert ok


def test_criterion_2_estimator_unbiased_and_consistent(report):
    t0 = time.perf_counter()
    cfg = EskfConfig()
    M = DEFAULT_MASS
    pipe = PipelineModel(np.zeros(3), 0.0, 1.5, (straight(60.0),))
    obs = extract_features(hover_state([10.0, 0.1, 2.05]), pipe, CameraIntrinsics(), EXT, 0.0)
    J = full_feature_jacobian(obs, np.zeros(3), EXT)
    psi = np.array([0.05, -0.03, 0.2])
    A, B, G, C = eskf_matrices(J, psi, M, cfg.Ts)
    d = np.array([0.01, 0.02, 0.1, -0.1, 0.05])

    def run(noisy, n, seed):
        rng = np.random.default_rng(seed)
        x = np.concatenate([[np.pi / 2, 0.0], [0.4, 0.0, 0.0], d])
        est = ExtendedState(np.concatenate([x[:5] + 0.05, np.zeros(5)]), cfg.P0.copy())
        errs, Ps = [], []
        for _ in range(n):
            u = np.concatenate([rng.normal(scale=0.1, size=3), [M * GRAVITY + rng.normal(scale=0.5)]])
            y = C @ x
            if noisy:
                y = y + rng.multivariate_normal(np.zeros(5), cfg.R0)
            est = eskf_step(est, cfg, J, psi, M, u, y, cfg.R0)
            x = A @ x + B @ u + G * SIGNED_GRAVITY
            errs.append(est.x - x)
            Ps.append(est.P.diagonal())
        return est, np.array(errs), np.array(Ps)

    est, _, _ = run(False, 5000, 0)
    bias = np.max(np.abs(est.d_hat - d) / np.abs(d))
    _, errs, Ps = run(True, 6000, 1)
    ratio = np.max(np.var(errs[2000:], axis=0) / Ps[2000:].mean(axis=0))
    wall = time.perf_counter() - t0
    ok = bias < 0.01 and ratio <= 1.2 and wall < 30
    report(2, ok, f"max d_hat rel error {bias:.1e}, max empirical/reported variance "
                  f"{ratio:.2f}, {wall:.1f} s")
    assert ok


def test_criterion_3_vmpc_fixed_point(report):
    cfg = VmpcConfig()
    assert cfg.N == 20 and cfg.t_p == 0.1
    np.testing.assert_array_equal(np.diag(cfg.Psi), [0.05, 0.05, 0.01])
    pipe = PipelineModel(np.zeros(3), 0.0, 1.5, (straight(60.0),))
    obs = extract_features(hover_state([10.0, 0.0, 2.05]), pipe, CameraIntrinsics(), EXT, 0.0)
    J = full_feature_jacobian(obs, np.zeros(3), EXT)
    x0 = np.array([np.pi / 2, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0])
    sol, wall = _timed(solve_vmpc, x0, np.zeros(5), 300.0, 300.0, J, cfg)
    u_inf = float(np.max(np.abs(sol.u_seq)))
    ok = u_inf < 1e-6 and sol.cost < 1e-10 and wall < 1.0
    report(3, ok, f"|u|inf {u_inf:.1e}, cost {sol.cost:.1e}, {wall * 1e3:.1f} ms")
    assert ok


def test_criterion_4_cost_decrease_on_nominal_run(report):
    cfg, result, wall = _episode("straight")
    ctrl = result.log[result.log[:, COL["controlling"]] > 0.5]
    stride = int(round(cfg.vmpc.t_p * cfg.state_rate))
    rep = cost_decrease_monitor(ctrl[:, COL["cost"]], ctrl[:, COL["stage_cost"]], stride, tol=1e-6)
    # for information: the same check from a hover start, a transient the
    # fixed-horizon cost is not guaranteed to contract over
    _, hover, _ = _episode("straight", **{"start.speed": 0.0})
    hc = hover.log[hover.log[:, COL["controlling"]] > 0.5]
    hrep = cost_decrease_monitor(hc[:, COL["cost"]], hc[:, COL["stage_cost"]], stride, tol=1e-6)
    ok = (rep.violations == 0 and result.metrics.termination == "completed"
          and rep.checked > 1000 and wall < 60)
    report(4, ok, f"{rep.violations} violations over {rep.checked} checks, {wall:.1f} s "
                  f"(hover start, informational: {hrep.violations} violations, "
                  f"max excess {hrep.max_excess:.1e})")
    assert ok


def test_criterion_5_terrain_adaptation(report, calm_runs):
    cfg, result, wall = calm_runs[("eskf-pre-vmpc", 0.001)]
    slopes = [i for i, seg in enumerate(cfg.pipeline.segments) if seg.elevation_change != 0]
    log = result.log
    on_slope = np.isin(log[:, COL["segment"]].astype(int), slopes)
    rho = log[on_slope, COL["rho_c_true"]]
    inside = np.abs(rho / cfg.vmpc.rho_d - 1.0) <= SLOPE_BAND
    frac = float(np.mean(inside & np.isfinite(rho)))
    ok = frac >= SLOPE_FRACTION and rho.size > 1000 and wall < 120
    report(5, ok, f"{100 * frac:.1f}% of {rho.size} slope ticks within 15% of rho_d "
                  f"(max deviation {np.nanmax(np.abs(rho / cfg.vmpc.rho_d - 1)):.3f}), {wall:.1f} s")
    assert ok


def test_criterion_6_ordering_under_wind(report, wind_runs):
    m = {k: r.metrics for k, (_, r, _) in wind_runs.items()}
    cfg = wind_runs["eskf-pre-vmpc"][0]
    pre, hold = m["eskf-pre-vmpc"], m["eskf-vmpc"]
    completes = pre.termination == "completed" and pre.completion == 1.0
    beats_hold = pre.rmse_theta < hold.rmse_theta and pre.rmse_r < hold.rmse_r

    def baseline_ok(b):
        incomplete = b.termination != "completed"
        return incomplete or (b.rmse_theta >= BASELINE_FACTOR * pre.rmse_theta
                              and b.rmse_r >= BASELINE_FACTOR * pre.rmse_r)

    wall = sum(w for *_, w in wind_runs.values())
    ok = completes and beats_hold and baseline_ok(m["ibvs"]) and baseline_ok(m["ibvs-mpc"]) and wall < 600
    ratios = ", ".join(f"{k} x{m[k].rmse_theta / pre.rmse_theta:.1f}/x{m[k].rmse_r / pre.rmse_r:.1f} "
                       f"({m[k].termination})" for k in ("ibvs", "ibvs-mpc"))
    report(6, ok, f"{cfg.pipeline.total_length:.0f} m course; pre {pre.rmse_theta:.6g}/{pre.rmse_r:.6g} "
                  f"vs hold {hold.rmse_theta:.6g}/{hold.rmse_r:.6g}; {ratios}; {wall:.0f} s")
    assert ok


def test_criterion_7_noise_robustness(report, calm_runs):
    factor = {}
    for m in ("eskf-pre-vmpc", "eskf-vmpc"):
        lo = calm_runs[(m, 0.001)][1].metrics
        hi = calm_runs[(m, 0.01)][1].metrics
        assert lo.termination == hi.termination == "completed"
        factor[m] = hi.rmse_r / lo.rmse_r
    wall = sum(w for *_, w in calm_runs.values())
    ok = factor["eskf-pre-vmpc"] < factor["eskf-vmpc"] and wall < 600
    report(7, ok, f"rmse_r growth pre x{factor['eskf-pre-vmpc']:.4f} vs hold "
                  f"x{factor['eskf-vmpc']:.4f}, {wall:.0f} s")
    assert ok


def test_criterion_8_solver_budget(report, wind_runs):
    worst = {}
    for m in ("eskf-pre-vmpc", "eskf-vmpc"):
        times = wind_runs[m][1].solve_times
        times = times[np.isfinite(times)]
        worst[m] = (float(np.median(times)), float(np.percentile(times, 99)))
    t_p = wind_runs["eskf-pre-vmpc"][0].vmpc.t_p
    ok = all(med < t_p and p99 < t_p for med, p99 in worst.values())
    detail = ", ".join(f"{m} median {1e3 * a:.2f} ms p99 {1e3 * b:.2f} ms" for m, (a, b) in worst.items())
    report(8, ok, detail)
    assert ok


def test_criterion_9_determinism(report, wind_runs, tmp_path):
    same = []
    for m in WIND_METHODS:
        cfg, first, _ = wind_runs[m]
        _, again, _ = _episode("wind", out_dir=tmp_path / m, method=m)
        files_equal = ((first.out_dir / "log.csv").read_bytes()
                       == (again.out_dir / "log.csv").read_bytes())
        arrays_equal = first.log.tobytes() == again.log.tobytes()
        same.append(files_equal and arrays_equal)
    ok = all(same)
    report(9, ok, f"{sum(same)}/{len(same)} wind-scenario logs bit-identical on rerun")
    assert ok
