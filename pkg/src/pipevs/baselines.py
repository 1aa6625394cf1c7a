"""Comparison controllers and the closed-loop method objects.

Every method exposes ``step(t, obs, meas) -> (ControlInput, info)`` and is
fed the same observation stream and measurements, so differences between
runs come from the control and estimation design alone.

* ``ibvs``: pseudoinverse feature regulation with a null-space cruise twist.
* ``ibvs-mpc``: finite-horizon least squares over twists on the feature
  kinematics only.
* ``eskf-vmpc``: ESKF and VMPC without feature prediction.
* ``eskf-pre-vmpc``: the full pipeline with high-rate feature prediction.

The two twist-commanding methods go through :class:`VelocityTracker`, a
proportional velocity loop standing in for an autopilot in velocity mode.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .controller import ControlInput, VmpcConfig, VmpcController, terrain_adaptive_vz
from .errors import DegenerateJacobian, InvalidObservation
from .estimator import EskfConfig, EskfEstimator
from .frames import GRAVITY
from .vision import CHI_DESIRED, CameraExtrinsics, FeatureObservation, full_feature_jacobian
from .world import DEFAULT_MASS

METHODS = ("ibvs", "ibvs-mpc", "eskf-vmpc", "eskf-pre-vmpc")

# Twist axes a quadrotor in velocity mode can actually command: [v; yaw rate].
VELOCITY_MODE_AXES = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 1.0])


def wrap_line_angle(a):
    """Fold a line-angle difference into (-pi/2, pi/2]."""
    return np.pi / 2 - np.mod(np.pi / 2 - np.asarray(a, dtype=float), np.pi)


def feature_error(chi) -> np.ndarray:
    """``chi_d - chi`` with the angle difference folded into (-pi/2, pi/2]."""
    e = CHI_DESIRED - np.asarray(chi, dtype=float)
    e[0] = wrap_line_angle(e[0])
    return e


# ---------------------------------------------------------------------------
# IBVS
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IbvsConfig:
    lam: float = 1.0
    cruise_twist: np.ndarray = field(default_factory=lambda: np.zeros(6))
    pinv_tol: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "cruise_twist", np.asarray(self.cruise_twist, dtype=float))
        if not self.lam > 0 or not self.pinv_tol > 0:
            raise ValueError("lam and pinv_tol must be positive")
        if self.cruise_twist.shape != (6,):
            raise ValueError("cruise_twist must be a 6-vector")


def truncated_pinv(J, tol: float) -> np.ndarray:
    """Pseudoinverse dropping singular values below ``tol``."""
    U, s, Vt = np.linalg.svd(np.asarray(J, dtype=float), full_matrices=False)
    if np.all(s < tol):
        raise DegenerateJacobian(f"all singular values below {tol}")
    s_inv = np.where(s >= tol, 1.0 / np.where(s >= tol, s, 1.0), 0.0)
    return (Vt.T * s_inv) @ U.T


def ibvs_control(obs: FeatureObservation, J, cfg: IbvsConfig) -> np.ndarray:
    """Six-DOF twist ``lam J+ (chi_d - chi) + (I - J+ J) cruise``."""
    if not obs.valid:
        raise InvalidObservation("IBVS needs a valid observation")
    J = np.asarray(J, dtype=float)
    J_pinv = truncated_pinv(J, cfg.pinv_tol)
    null = np.eye(6) - J_pinv @ J
    return cfg.lam * J_pinv @ feature_error(obs.chi) + null @ cfg.cruise_twist


# ---------------------------------------------------------------------------
# IBVS-MPC
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IbvsMpcConfig:
    N: int = 20
    t_p: float = 0.1
    Phi_chi: np.ndarray = field(default_factory=lambda: np.diag([0.3, 0.3]))
    w_vh: float = 0.01
    w_vz: float = 1.0
    Psi: np.ndarray = field(default_factory=lambda: 0.05 * np.eye(6))
    max_iters: int = 2

    def __post_init__(self):
        object.__setattr__(self, "Phi_chi", np.asarray(self.Phi_chi, dtype=float))
        object.__setattr__(self, "Psi", np.asarray(self.Psi, dtype=float))
        if self.N < 1 or not self.t_p > 0:
            raise ValueError("need N >= 1 and t_p > 0")
        if np.linalg.eigvalsh(self.Psi).min() <= 0:
            raise ValueError("Psi must be positive definite")


@dataclass(frozen=True)
class IbvsMpcSolution:
    twists: np.ndarray
    chi_pred: np.ndarray
    cost: float
    cost_trace: np.ndarray


def _ibvs_mpc_residual(nu_flat, chi0, J, v_hd, v_zd, alpha, cfg: IbvsMpcConfig):
    """Weighted residual vector, its (constant) Jacobian and the predicted features.

    The twist penalty is taken relative to the cruise twist, so it damps
    corrections without pulling the vehicle toward hover.
    """
    N = cfg.N
    I = np.eye(N)
    Lc = np.linalg.cholesky(cfg.Phi_chi).T
    Lu = np.linalg.cholesky(cfg.Psi).T
    h = np.array([[np.cos(alpha), np.sin(alpha), 0.0, 0.0, 0.0, 0.0]])
    z = np.array([[0.0, 0.0, 1.0, 0.0, 0.0, 0.0]])
    # chi_i - chi_d = -e0 + t_p J (nu_0 + ... + nu_{i-1}), i = 1..N
    jac = np.vstack([
        np.kron(np.tril(np.ones((N, N))), Lc @ (cfg.t_p * J)),
        np.sqrt(cfg.w_vh) * np.kron(I, h),
        np.sqrt(cfg.w_vz) * np.kron(I, z),
        np.kron(I, Lu),
    ])
    offset = np.concatenate([
        np.tile(-Lc @ feature_error(chi0), N),
        np.full(N, -np.sqrt(cfg.w_vh) * v_hd),
        np.full(N, -np.sqrt(cfg.w_vz) * v_zd),
        np.tile(-Lu @ (v_hd * h[0] + v_zd * z[0]), N),
    ])
    res = jac @ nu_flat + offset
    chi = chi0 + cfg.t_p * np.cumsum(nu_flat.reshape(N, 6) @ J.T, axis=0)
    return res, jac, chi


def ibvs_mpc_solve(chi0, J, v_hd: float, v_zd: float, alpha: float, cfg: IbvsMpcConfig,
                   warm_start=None) -> IbvsMpcSolution:
    """Gauss-Newton on the linear feature-kinematics horizon.

    The residual is affine in the twists, so the first iterate is already the
    exact least-squares solution; further iterations only confirm it.
    """
    J = np.asarray(J, dtype=float)
    chi0 = np.asarray(chi0, dtype=float)
    nu = (np.zeros(6 * cfg.N) if warm_start is None
          else np.asarray(warm_start, dtype=float).ravel().copy())
    res, jac, chi = _ibvs_mpc_residual(nu, chi0, J, v_hd, v_zd, alpha, cfg)
    trace = [float(res @ res)]
    for _ in range(cfg.max_iters):
        step = np.linalg.lstsq(jac, -res, rcond=None)[0]
        nu = nu + step
        res, jac, chi = _ibvs_mpc_residual(nu, chi0, J, v_hd, v_zd, alpha, cfg)
        trace.append(float(res @ res))
    chi_pred = np.vstack([chi0, chi])
    return IbvsMpcSolution(nu.reshape(cfg.N, 6), chi_pred, trace[-1], np.array(trace))


def ibvs_mpc_control(obs: FeatureObservation, J, cfg: IbvsMpcConfig, v_hd: float,
                     v_zd: float, alpha: float) -> np.ndarray:
    """First twist of the IBVS-MPC horizon."""
    if not obs.valid:
        raise InvalidObservation("IBVS-MPC needs a valid observation")
    return ibvs_mpc_solve(obs.chi, J, v_hd, v_zd, alpha, cfg).twists[0]


# ---------------------------------------------------------------------------
# Velocity-mode inner loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VelocityTracker:
    """Proportional velocity loop mapping a twist command to rates and thrust.

    Velocity error sets a desired acceleration, which becomes a desired tilt
    and collective thrust; tilt error is closed with a proportional rate
    command. Commanded roll and pitch rates in the twist are ignored, as a
    velocity-mode autopilot would.
    """

    k_v: float = 1.5
    k_att: float = 6.0
    max_tilt: float = np.radians(30.0)
    mass: float = DEFAULT_MASS
    thrust_limits: tuple = (0.0, 36.0)

    def command(self, twist, v_meas, psi_meas) -> ControlInput:
        twist = np.asarray(twist, dtype=float)
        phi, beta, alpha = psi_meas
        a = self.k_v * (twist[:3] - np.asarray(v_meas, dtype=float))
        a_f = np.cos(alpha) * a[0] + np.sin(alpha) * a[1]
        a_l = -np.sin(alpha) * a[0] + np.cos(alpha) * a[1]
        lift = max(GRAVITY + a[2], 0.5 * GRAVITY)
        beta_d = np.clip(np.arctan2(a_f, lift), -self.max_tilt, self.max_tilt)
        phi_d = np.clip(np.arctan2(-a_l, lift), -self.max_tilt, self.max_tilt)
        tilt = max(np.cos(phi) * np.cos(beta), 0.3)
        c = float(np.clip(self.mass * lift / tilt, *self.thrust_limits))
        omega = np.array([self.k_att * (phi_d - phi), self.k_att * (beta_d - beta), twist[5]])
        return ControlInput(omega, c)


def hover_command(mass: float = DEFAULT_MASS) -> ControlInput:
    return ControlInput(np.zeros(3), mass * GRAVITY)


# ---------------------------------------------------------------------------
# Method objects
# ---------------------------------------------------------------------------

@dataclass
class StepInfo:
    """Per-tick diagnostics the harness logs.

    ``chi_est`` is the feature the controller acted on this tick.
    """

    chi_pred: np.ndarray = field(default_factory=lambda: np.full(2, np.nan))
    chi_est: np.ndarray = field(default_factory=lambda: np.full(2, np.nan))
    d_hat: np.ndarray = field(default_factory=lambda: np.full(5, np.nan))
    solve_time: float = np.nan
    iterations: int = 0
    cost: float = np.nan
    stage_cost: float = np.nan
    controlling: bool = False


class _TwistMethod:
    """Shared plumbing for the twist-commanding baselines.

    A new twist is computed only when a valid image arrives and is held
    between images; the inner loop runs every tick.
    """

    def __init__(self, vmpc: VmpcConfig, ext: CameraExtrinsics, tracker: VelocityTracker):
        self.vmpc = vmpc
        self.ext = ext
        self.tracker = tracker
        self.twist: Optional[np.ndarray] = None

    def _twist(self, obs, J, meas):
        raise NotImplementedError

    def step(self, t, obs, meas):
        info = StepInfo()
        if obs is not None and obs.valid:
            J = full_feature_jacobian(obs, meas.psi, self.ext) * VELOCITY_MODE_AXES
            t0 = time.perf_counter()
            self.twist = self._twist(obs, J, meas)
            info.solve_time = time.perf_counter() - t0
            info.chi_est = np.array(obs.chi, dtype=float)
        if self.twist is None:
            return hover_command(self.tracker.mass), info
        info.controlling = True
        return self.tracker.command(self.twist, meas.v, meas.psi), info


class IbvsMethod(_TwistMethod):
    def __init__(self, vmpc: VmpcConfig, ext: CameraExtrinsics, tracker: VelocityTracker,
                 cfg: IbvsConfig = IbvsConfig()):
        super().__init__(vmpc, ext, tracker)
        self.cfg = cfg

    def _twist(self, obs, J, meas):
        alpha = meas.psi[2]
        v_zd = terrain_adaptive_vz(obs.rho_c, obs.rho_f, self.vmpc)
        cruise = self.cfg.cruise_twist + np.array(
            [self.vmpc.v_hd * np.cos(alpha), self.vmpc.v_hd * np.sin(alpha), v_zd, 0, 0, 0])
        cfg = IbvsConfig(self.cfg.lam, cruise, self.cfg.pinv_tol)
        return ibvs_control(obs, J, cfg)


class IbvsMpcMethod(_TwistMethod):
    def __init__(self, vmpc: VmpcConfig, ext: CameraExtrinsics, tracker: VelocityTracker,
                 cfg: IbvsMpcConfig = IbvsMpcConfig()):
        super().__init__(vmpc, ext, tracker)
        self.cfg = cfg

    def _twist(self, obs, J, meas):
        v_zd = terrain_adaptive_vz(obs.rho_c, obs.rho_f, self.vmpc)
        return ibvs_mpc_control(obs, J, self.cfg, self.vmpc.v_hd, v_zd, meas.psi[2])


class EskfVmpcMethod:
    """ESKF + VMPC, with (``predict=True``) or without feature prediction.

    Without prediction the feature channels of the filter are only updated
    on image ticks and the controller sees a feature that changes only then.
    """

    def __init__(self, vmpc: VmpcConfig, eskf: EskfConfig, ext: CameraExtrinsics,
                 predict: bool = True, use_commanded_rates: bool = True):
        self.vmpc = vmpc
        self.estimator = EskfEstimator(eskf, ext, vmpc.mass, predict, use_commanded_rates)
        self.controller = VmpcController(vmpc, eskf.Ts)
        self.last_command: Optional[ControlInput] = None
        self.widths: Optional[tuple] = None

    def step(self, t, obs, meas):
        info = StepInfo()
        fresh = obs is not None and obs.valid
        if not self.estimator.initialized and not fresh:
            return hover_command(self.vmpc.mass), info
        if fresh:
            self.widths = (obs.rho_c, obs.rho_f)
        state, chi_ctrl = self.estimator.tick(obs if fresh else None, meas, self.last_command)
        J = self.estimator.pred.J_latched
        x0 = np.concatenate([chi_ctrl, state.v_hat, meas.psi])
        t0 = time.perf_counter()
        u, sol = self.controller.control(x0, state.d_hat, *self.widths, J)
        info.solve_time = time.perf_counter() - t0
        info.iterations = sol.iterations
        info.cost = sol.cost
        info.stage_cost = sol.stage_cost
        info.chi_pred = self.estimator.pred.chi_p.copy()
        info.chi_est = np.array(chi_ctrl, dtype=float)
        info.d_hat = state.d_hat
        info.controlling = True
        self.last_command = u
        return u, info


def make_method(name: str, vmpc: VmpcConfig, eskf: EskfConfig, ext: CameraExtrinsics,
                tracker: VelocityTracker = VelocityTracker(), ibvs: IbvsConfig = IbvsConfig(),
                ibvs_mpc: IbvsMpcConfig = IbvsMpcConfig(), use_commanded_rates: bool = True):
    if name == "ibvs":
        return IbvsMethod(vmpc, ext, tracker, ibvs)
    if name == "ibvs-mpc":
        return IbvsMpcMethod(vmpc, ext, tracker, ibvs_mpc)
    if name == "eskf-vmpc":
        return EskfVmpcMethod(vmpc, eskf, ext, False, use_commanded_rates)
    if name == "eskf-pre-vmpc":
        return EskfVmpcMethod(vmpc, eskf, ext, True, use_commanded_rates)
    raise ValueError(f"unknown method {name!r}; expected one of {METHODS}")

