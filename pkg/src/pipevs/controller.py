"""Visual-servoing MPC over the coupled feature/vehicle model.

The prediction model is ``x = [chi (2); v (3, world); psi (3)]`` driven by
body rates, with the feature Jacobian and the lumped disturbance estimate held
constant over the horizon. The optimizer regulates ``x_o = [theta, r, v_h,
v_z]`` where ``v_h`` is the horizontal speed along the current heading.

Collective thrust is not a decision variable. By default the auxiliary
vertical-speed law is re-evaluated at every predicted state
(``thrust_model="feedback"``), which is what the closed loop actually does.
``thrust_model="frozen"`` holds the value computed at ``x0`` instead; that
variant predicts a climb whenever the vehicle levels out from a tilt, so the
optimizer learns to hold pitch and the horizontal speed runs away.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from . import _vmpc_core as core
from .errors import ExcessiveTilt, InvalidWidth
from .frames import GRAVITY, euler_rate_matrix, rotation_world_from_body
from .world import DEFAULT_MASS

AGGRESSIVE = (0.2, 1.0)
CONSERVATIVE = (0.3, 0.3)


class ControlInput(NamedTuple):
    omega: np.ndarray
    c: float


@dataclass(frozen=True)
class VmpcConfig:
    N: int = 20
    t_p: float = 0.1
    Phi: np.ndarray = field(default_factory=lambda: np.diag([*AGGRESSIVE, 0.01, 1.0]))
    Phi_N: Optional[np.ndarray] = None
    Psi: np.ndarray = field(default_factory=lambda: np.diag([0.05, 0.05, 0.01]))
    v_hd: float = 0.5
    rho_d: float = 300.0
    k1: float = 600.0
    k2: float = 2.0
    c_v: float = 240.0
    rate_bound: float = 2.0
    max_iters: int = 5
    step_tol: float = 1e-8
    cost_tol: float = 1e-10
    k_c: float = 2.0
    thrust_limits: tuple = (0.0, 36.0)
    mass: float = DEFAULT_MASS
    thrust_model: str = "feedback"

    def __post_init__(self):
        object.__setattr__(self, "Phi", np.asarray(self.Phi, dtype=float))
        object.__setattr__(self, "Psi", np.asarray(self.Psi, dtype=float))
        object.__setattr__(self, "Phi_N", self.Phi.copy() if self.Phi_N is None
                           else np.asarray(self.Phi_N, dtype=float))
        if self.N < 1 or not self.t_p > 0:
            raise ValueError("need N >= 1 and t_p > 0")
        if self.thrust_model not in ("feedback", "frozen"):
            raise ValueError("thrust_model must be 'feedback' or 'frozen'")
        for name in ("Phi", "Phi_N", "Psi"):
            W = getattr(self, name)
            if not np.allclose(W, W.T) or np.linalg.eigvalsh(W).min() < -1e-12:
                raise ValueError(f"{name} must be symmetric positive semidefinite")
        if np.linalg.eigvalsh(self.Psi).min() <= 0:
            raise ValueError("Psi must be positive definite")

    def with_feature_weights(self, phi_theta: float, phi_r: float) -> "VmpcConfig":
        Phi = self.Phi.copy()
        Phi[0, 0], Phi[1, 1] = phi_theta, phi_r
        return replace(self, Phi=Phi, Phi_N=Phi.copy())


class PredState(NamedTuple):
    chi: np.ndarray
    v: np.ndarray
    psi: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.chi, self.v, self.psi]).astype(float)

    @classmethod
    def from_vector(cls, x) -> "PredState":
        x = np.asarray(x, dtype=float)
        return cls(x[0:2].copy(), x[2:5].copy(), x[5:8].copy())


@dataclass(frozen=True)
class VmpcSolution:
    u_seq: np.ndarray
    x_pred: np.ndarray
    cost: float
    iterations: int
    converged: bool
    thrust: float
    stage_cost: float
    cost_trace: np.ndarray
    ok: bool = True


# ---------------------------------------------------------------------------
# References
# ---------------------------------------------------------------------------

def terrain_adaptive_vz(rho_c: float, rho_f: float, cfg: VmpcConfig) -> float:
    """Vertical-speed reference (positive = climb) from apparent pipe widths.

    The first term holds the apparent width at ``rho_d``; the second climbs
    when the pipe looks wider ahead than below, i.e. on rising terrain.
    """
    if not rho_c > 0:
        raise InvalidWidth(f"center width {rho_c} must be positive")
    return (cfg.k1 * (1.0 / cfg.rho_d - 1.0 / rho_c)
            + cfg.k2 * (rho_f - rho_c) / cfg.c_v * cfg.v_hd)


def desired_state(rho_c: float, rho_f: float, cfg: VmpcConfig) -> np.ndarray:
    return np.array([np.pi / 2, 0.0, cfg.v_hd, terrain_adaptive_vz(rho_c, rho_f, cfg)])


def horizontal_speed(v, alpha: float) -> float:
    return float(np.cos(alpha) * v[0] + np.sin(alpha) * v[1])


def auxiliary_thrust(v_z_hat: float, v_z_ref: float, d_hat_vz: float, psi,
                     m: float = DEFAULT_MASS, k_c: float = 2.0,
                     thrust_limits=(0.0, 36.0)) -> float:
    """Collective thrust holding the vertical-speed reference.

    Proportional vertical-speed loop with disturbance feedforward and tilt
    compensation; the VMPC only optimizes body rates.
    """
    tilt = np.cos(psi[0]) * np.cos(psi[1])
    if tilt <= 0.3:
        raise ExcessiveTilt(f"cos(phi)cos(beta) = {tilt:.3f}")
    c = m * (GRAVITY + k_c * (v_z_ref - v_z_hat) - d_hat_vz) / tilt
    return float(np.clip(c, *thrust_limits))


# ---------------------------------------------------------------------------
# Prediction model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThrustLaw:
    """Parameters of the auxiliary thrust law used inside the rollout."""

    v_z_ref: float
    k_c: float = 2.0
    thrust_limits: tuple = (0.0, 36.0)

    def __call__(self, x, d_hat_vz: float, m: float) -> float:
        tilt = max(np.cos(x[5]) * np.cos(x[6]), 0.3)
        c = m * (GRAVITY + self.k_c * (self.v_z_ref - x[4]) - d_hat_vz) / tilt
        return float(np.clip(c, *self.thrust_limits))


def prediction_dynamics(x, u_o, c, d_hat, J, m, law: Optional[ThrustLaw] = None):
    """Right-hand side of the disturbance-augmented model (pure numpy).

    With ``law`` the thrust is re-evaluated at ``x`` and ``c`` is ignored.
    """
    x = np.asarray(x, dtype=float)
    J = np.asarray(J, dtype=float)
    psi = x[5:8]
    u_o = np.asarray(u_o, dtype=float)
    d_hat = np.asarray(d_hat, dtype=float)
    if law is not None:
        c = law(x, d_hat[4], m)
    chi_dot = J @ np.concatenate([x[2:5], u_o])
    v_dot = rotation_world_from_body(psi)[:, 2] * (c / m) + np.array([0.0, 0.0, -GRAVITY])
    psi_dot = euler_rate_matrix(psi) @ u_o
    return np.concatenate([chi_dot, v_dot, psi_dot]) + np.concatenate([d_hat, np.zeros(3)])


def predict_rk4(x, u_o, c, d_hat, t_p, J, m=DEFAULT_MASS, law: Optional[ThrustLaw] = None):
    """One RK4 step of the prediction model. Accepts a PredState or 8-vector."""
    x = x.as_vector() if isinstance(x, PredState) else np.asarray(x, dtype=float)
    k1 = prediction_dynamics(x, u_o, c, d_hat, J, m, law)
    k2 = prediction_dynamics(x + 0.5 * t_p * k1, u_o, c, d_hat, J, m, law)
    k3 = prediction_dynamics(x + 0.5 * t_p * k2, u_o, c, d_hat, J, m, law)
    k4 = prediction_dynamics(x + t_p * k3, u_o, c, d_hat, J, m, law)
    return x + t_p / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def shift_warm_start(u_seq, steps: int = 1) -> np.ndarray:
    """Drop the first ``steps`` inputs and repeat the last one."""
    u_seq = np.asarray(u_seq, dtype=float)
    if steps <= 0:
        return u_seq.copy()
    steps = min(steps, len(u_seq))
    return np.vstack([u_seq[steps:], np.repeat(u_seq[-1:], steps, axis=0)])


def thrust_law(rho_c: float, rho_f: float, cfg: VmpcConfig) -> Optional[ThrustLaw]:
    """The rollout thrust law for ``cfg``, or ``None`` when thrust is frozen."""
    if cfg.thrust_model == "frozen":
        return None
    return ThrustLaw(terrain_adaptive_vz(rho_c, rho_f, cfg), cfg.k_c, cfg.thrust_limits)


def solve_vmpc(x0, d_hat, rho_c: float, rho_f: float, J, cfg: VmpcConfig,
               warm_start=None) -> VmpcSolution:
    """Solve the finite-horizon problem for the body-rate sequence.

    ``VmpcSolution.thrust`` is the auxiliary thrust at ``x0``, the value to
    apply now.
    """
    x0 = x0.as_vector() if isinstance(x0, PredState) else np.asarray(x0, dtype=float)
    d_hat = np.ascontiguousarray(d_hat, dtype=float)
    J = np.ascontiguousarray(J, dtype=float)
    xod = desired_state(rho_c, rho_f, cfg)
    c = auxiliary_thrust(x0[4], xod[3], d_hat[4], x0[5:8], cfg.mass, cfg.k_c, cfg.thrust_limits)
    U0 = (np.zeros((cfg.N, 3)) if warm_start is None
          else np.ascontiguousarray(warm_start, dtype=float))
    th = np.array([cfg.thrust_model == "feedback", c, xod[3], cfg.k_c, *cfg.thrust_limits],
                  dtype=float)
    U, X, J_opt, iters, converged, ok, trace = core.gauss_newton(
        x0, U0, th, d_hat, J, cfg.mass, -GRAVITY, cfg.t_p, xod, cfg.Phi, cfg.Phi_N, cfg.Psi,
        cfg.rate_bound, cfg.max_iters, cfg.step_tol, cfg.cost_tol)
    e0 = core.output(x0) - xod
    stage = float(e0 @ cfg.Phi @ e0 + U[0] @ cfg.Psi @ U[0])
    return VmpcSolution(U, X, float(J_opt), int(iters), bool(converged), c, stage,
                        trace[~np.isnan(trace)], bool(ok))


class VmpcController:
    """Stateful wrapper: warm starts and the cost history for the monitor.

    Solves run every control tick. The warm start is shifted by one
    prediction step each time ``t_p`` of control time has elapsed.
    """

    def __init__(self, cfg: VmpcConfig, control_dt: float):
        self.cfg = cfg
        self.control_dt = control_dt
        self.u_seq: Optional[np.ndarray] = None
        self._elapsed = 0.0
        self.costs: list = []
        self.stage_costs: list = []

    def control(self, x0, d_hat, rho_c, rho_f, J):
        warm = None
        if self.u_seq is not None:
            self._elapsed += self.control_dt
            steps = int(self._elapsed / self.cfg.t_p + 1e-9)
            self._elapsed -= steps * self.cfg.t_p
            warm = shift_warm_start(self.u_seq, steps)
        sol = solve_vmpc(x0, d_hat, rho_c, rho_f, J, self.cfg, warm)
        self.u_seq = sol.u_seq
        self.costs.append(sol.cost)
        self.stage_costs.append(sol.stage_cost)
        return ControlInput(sol.u_seq[0].copy(), sol.thrust), sol


# ---------------------------------------------------------------------------
# Cost-decrease diagnostic
# ---------------------------------------------------------------------------

class MonitorReport(NamedTuple):
    violations: int
    max_excess: float
    checked: int
    flagged: np.ndarray


def cost_decrease_monitor(costs, stage_costs, stride: int = 1,
                          tol: float = 1e-6) -> MonitorReport:
    """Check ``J*(k+stride) - J*(k) <= -stage(k) + tol`` along a run.

    ``stride`` is the number of solves per prediction step, so the comparison
    is made one horizon shift apart.
    """
    costs = np.asarray(costs, dtype=float)
    stage_costs = np.asarray(stage_costs, dtype=float)
    if costs.size < 2:
        raise ValueError("need at least two recorded solves")
    if costs.size <= stride:
        return MonitorReport(0, 0.0, 0, np.zeros(0, dtype=int))
    excess = costs[stride:] - costs[:-stride] + stage_costs[:-stride]
    flagged = np.nonzero(excess > tol)[0]
    max_excess = float(np.max(excess)) if excess.size else 0.0
    return MonitorReport(int(flagged.size), max_excess, int(excess.size), flagged)
