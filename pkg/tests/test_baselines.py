import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize

from pipevs.baselines import (METHODS, VELOCITY_MODE_AXES, EskfVmpcMethod, IbvsConfig,
                              IbvsMpcConfig, VelocityTracker, feature_error, hover_command,
                              ibvs_control, ibvs_mpc_solve, make_method, truncated_pinv,
                              wrap_line_angle)
from pipevs.controller import VmpcConfig
from pipevs.errors import DegenerateJacobian, InvalidObservation
from pipevs.estimator import EskfConfig
from pipevs.frames import GRAVITY
from pipevs.vision import (CameraExtrinsics, CameraIntrinsics, FeatureObservation,
                           extract_features, full_feature_jacobian)
from pipevs.world import (DEFAULT_MASS, ActuatorModel, PipelineModel, PlantState, StateMeasurement,
                          hover_state, step_plant, straight)

from oracles import random_view

EXT = CameraExtrinsics()
K = CameraIntrinsics()
PIPE = PipelineModel(np.zeros(3), 0.0, 1.5, (straight(60.0),))


def _view(y=0.2, yaw=0.1):
    state = hover_state([10.0, y, 2.05], yaw)
    obs = extract_features(state, PIPE, K, EXT, 0.0)
    return state, obs, full_feature_jacobian(obs, state.psi, EXT)


@pytest.mark.parametrize("a, expected", [(0.0, 0.0), (np.pi, 0.0), (np.pi / 2, np.pi / 2),
                                         (-np.pi / 2, np.pi / 2), (3.0, 3.0 - np.pi),
                                         (-3.0, np.pi - 3.0)])
def test_wrap_line_angle(a, expected):
    assert abs(wrap_line_angle(a) - expected) < 1e-12


def test_feature_error_folds_the_angle():
    e = feature_error([np.pi / 2 + 0.1, 0.3])
    np.testing.assert_allclose(e, [-0.1, -0.3], atol=1e-15)
    # a line at theta = 0.05 is nearly the same as one at pi + 0.05
    e = feature_error([0.05, 0.0])
    assert abs(e[0] - (np.pi / 2 - 0.05)) < 1e-12
    e = feature_error([np.pi - 0.05, 0.0])
    assert abs(e[0] - (0.05 - np.pi / 2)) < 1e-12


def test_truncated_pinv(rng):
    J = rng.normal(size=(2, 6))
    np.testing.assert_allclose(truncated_pinv(J, 1e-6), np.linalg.pinv(J), atol=1e-12)
    J_rank1 = np.outer([1.0, 2.0], rng.normal(size=6))
    J_noisy = J_rank1 + 1e-9 * rng.normal(size=(2, 6))
    np.testing.assert_allclose(truncated_pinv(J_noisy, 1e-6), np.linalg.pinv(J_rank1), atol=1e-6)
    with pytest.raises(DegenerateJacobian):
        truncated_pinv(1e-9 * J, 1e-6)


@given(st.integers(0, 10_000))
def test_ibvs_range_and_null_space(seed):
    rng = np.random.default_rng(seed)
    _, psi, _, obs = random_view(rng, EXT)
    J = full_feature_jacobian(obs, psi, EXT)
    cruise = rng.normal(size=6)
    nu = ibvs_control(obs, J, IbvsConfig(lam=0.7, cruise_twist=cruise))
    # the cruise part is invisible to the features, the rest hits the error exactly
    np.testing.assert_allclose(J @ nu, 0.7 * feature_error(obs.chi), atol=1e-9)
    null = np.eye(6) - np.linalg.pinv(J) @ J
    np.testing.assert_allclose(J @ null, 0.0, atol=1e-10)
    np.testing.assert_allclose(null @ null, null, atol=1e-10)


def test_ibvs_small_error_direction():
    _, obs, J = _view(y=0.05, yaw=0.02)
    nu = ibvs_control(obs, J, IbvsConfig())
    e = feature_error(obs.chi)
    chi_next = obs.chi + 1e-3 * J @ nu
    assert np.linalg.norm(feature_error(chi_next)) < np.linalg.norm(e)


def test_ibvs_feature_correction_never_uses_roll_or_pitch():
    _, obs, J = _view()
    nu = ibvs_control(obs, J * VELOCITY_MODE_AXES, IbvsConfig())
    assert nu[3] == 0.0 and nu[4] == 0.0
    assert np.linalg.norm(nu) > 0


def test_baselines_reject_invalid_observations():
    _, _, J = _view()
    with pytest.raises(InvalidObservation):
        ibvs_control(FeatureObservation.invalid(0.0), J, IbvsConfig())


def test_config_validation():
    with pytest.raises(ValueError):
        IbvsConfig(lam=0.0)
    with pytest.raises(ValueError):
        IbvsConfig(cruise_twist=np.zeros(3))
    with pytest.raises(ValueError):
        IbvsMpcConfig(N=0)
    with pytest.raises(ValueError):
        IbvsMpcConfig(Psi=np.zeros((6, 6)))
    with pytest.raises(ValueError):
        make_method("pid", VmpcConfig(), EskfConfig(), EXT)


# --- IBVS-MPC ---------------------------------------------------------------------

def _explicit_cost(nu_flat, chi0, J, v_hd, v_zd, alpha, cfg):
    """Horizon cost written out term by term."""
    nu = nu_flat.reshape(cfg.N, 6)
    cruise = np.array([v_hd * np.cos(alpha), v_hd * np.sin(alpha), v_zd, 0, 0, 0])
    chi = np.array(chi0, dtype=float)
    total = 0.0
    for i in range(cfg.N):
        chi = chi + cfg.t_p * J @ nu[i]
        e = -feature_error(chi0) + (chi - chi0)
        total += e @ cfg.Phi_chi @ e
        total += cfg.w_vh * (np.cos(alpha) * nu[i, 0] + np.sin(alpha) * nu[i, 1] - v_hd) ** 2
        total += cfg.w_vz * (nu[i, 2] - v_zd) ** 2
        total += (nu[i] - cruise) @ cfg.Psi @ (nu[i] - cruise)
    return total


def test_ibvs_mpc_first_iterate_is_the_exact_minimizer():
    cfg = IbvsMpcConfig(N=4, max_iters=1)
    _, obs, J = _view()
    J = J * VELOCITY_MODE_AXES
    args = (obs.chi, J, 0.5, 0.1, 0.1, cfg)
    sol = ibvs_mpc_solve(*args)
    ref = minimize(_explicit_cost, np.zeros(6 * cfg.N), args=args, method="BFGS",
                   options={"gtol": 1e-12})
    np.testing.assert_allclose(sol.twists.ravel(), ref.x, atol=1e-5)
    assert abs(sol.cost - _explicit_cost(sol.twists.ravel(), *args)) < 1e-12
    assert abs(sol.cost - ref.fun) < 1e-9
    more = ibvs_mpc_solve(obs.chi, J, 0.5, 0.1, 0.1, IbvsMpcConfig(N=4, max_iters=3))
    np.testing.assert_allclose(more.twists, sol.twists, atol=1e-10)
    assert np.ptp(more.cost_trace[1:]) < 1e-12


def test_ibvs_mpc_predicted_features_follow_the_kinematics():
    cfg = IbvsMpcConfig(N=6)
    _, obs, J = _view()
    sol = ibvs_mpc_solve(obs.chi, J, 0.5, 0.0, 0.1, cfg)
    for i in range(cfg.N):
        np.testing.assert_allclose(sol.chi_pred[i + 1], sol.chi_pred[i] + cfg.t_p * J @ sol.twists[i],
                                   atol=1e-12)


def test_ibvs_mpc_cruises_along_the_heading_when_on_line():
    _, obs, J = _view(y=0.0, yaw=0.0)
    nu = ibvs_mpc_solve(obs.chi, J * VELOCITY_MODE_AXES, 0.5, 0.0, 0.0, IbvsMpcConfig()).twists[0]
    np.testing.assert_allclose(nu, [0.5, 0, 0, 0, 0, 0], atol=1e-6)


def test_ibvs_mpc_small_error_direction():
    _, obs, J = _view(y=0.05, yaw=0.02)
    J = J * VELOCITY_MODE_AXES
    sol = ibvs_mpc_solve(obs.chi, J, 0.5, 0.0, 0.02, IbvsMpcConfig())
    assert np.linalg.norm(feature_error(sol.chi_pred[-1])) < np.linalg.norm(feature_error(obs.chi))


# --- velocity-mode inner loop -----------------------------------------------------

def test_tracker_holds_hover():
    u = VelocityTracker().command(np.zeros(6), np.zeros(3), np.zeros(3))
    np.testing.assert_allclose(u.omega, 0.0, atol=1e-15)
    assert abs(u.c - DEFAULT_MASS * GRAVITY) < 1e-12
    assert hover_command().c == u.c


@pytest.mark.parametrize("twist", [[0.5, 0.0, 0.0, 0, 0, 0], [0.3, -0.4, 0.2, 0, 0, 0.1],
                                   [-0.2, 0.5, -0.1, 1.0, -1.0, 0.0]])
def test_tracker_reaches_commanded_velocity(twist):
    tracker = VelocityTracker()
    state = hover_state([0.0, 0.0, 5.0], 0.4)
    act = ActuatorModel()
    for _ in range(1500):
        state = step_plant(state, tracker.command(twist, state.v, state.psi), 0.01, act)
    np.testing.assert_allclose(state.v, twist[:3], atol=0.02)
    assert abs(state.psi[2] - (0.4 + 15.0 * twist[5])) < 0.05


# --- method objects ------------------------------------------------------------------

def _feed(method, stride, n=120):
    v = np.array([0.5, 0.0, 0.0])
    out = []
    for k in range(n):
        t = k * 0.01
        truth = PlantState(np.array([10.0, 0.1, 2.05]) + t * v, v, np.array([0.0, 0.0, 0.05]))
        obs = extract_features(truth, PIPE, K, EXT, t) if k % stride == 0 else None
        meas = StateMeasurement(t, truth.p, truth.v.copy(), truth.psi.copy())
        out.append(method.step(t, obs, meas)[0])
    return out


def test_full_rate_camera_makes_prediction_irrelevant():
    vmpc, eskf = VmpcConfig(), EskfConfig()
    pre = _feed(EskfVmpcMethod(vmpc, eskf, EXT, predict=True), 1, 60)
    hold = _feed(EskfVmpcMethod(vmpc, eskf, EXT, predict=False), 1, 60)
    for a, b in zip(pre, hold):
        np.testing.assert_array_equal(a.omega, b.omega)
        assert a.c == b.c


def test_hover_until_first_image():
    m = make_method("eskf-pre-vmpc", VmpcConfig(), EskfConfig(), EXT)
    meas = StateMeasurement(0.0, np.zeros(3), np.zeros(3), np.zeros(3))
    u, info = m.step(0.0, None, meas)
    assert u.c == hover_command().c and not info.controlling
    for name in ("ibvs", "ibvs-mpc"):
        u, info = make_method(name, VmpcConfig(), EskfConfig(), EXT).step(0.0, None, meas)
        assert u.c == hover_command().c and not info.controlling


@pytest.mark.parametrize("name", METHODS)
def test_every_method_commands_finite_inputs(name):
    m = make_method(name, VmpcConfig(), EskfConfig(), EXT)
    for u in _feed(m, 5, 30):
        assert np.all(np.isfinite(u.omega)) and np.isfinite(u.c)
