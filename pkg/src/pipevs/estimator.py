"""Extended-state Kalman filter with high-rate image-feature prediction.

The filter state is ``[chi (2); v (3); d (5)]`` where ``d`` lumps every
unmodelled effect acting on the feature and velocity channels. Between camera
frames the feature is propagated open-loop with the Jacobian latched at the
last image, and that prediction is fed to the filter as a pseudo-measurement
with an inflated noise covariance.

Two equivalent forms of the recursion are provided:

* :func:`eskf_step` is the one-step predictor form
  ``x[k+1] = A x[k] + B u[k] + G g - K (y[k] - C x[k])``.
* :func:`measurement_update` followed by :func:`time_update` splits the same
  step so that a controller can consume the filtered estimate at tick ``k``
  before ``u[k]`` is known. Composing the two reproduces :func:`eskf_step`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NotInitialized, SingularInnovation
from .frames import GRAVITY, rotation_world_from_body
from .vision import CameraExtrinsics, FeatureObservation, full_feature_jacobian

NX = 5
NE = 10
SIGNED_GRAVITY = -GRAVITY
COND_LIMIT = 1e12


@dataclass(frozen=True)
class ExtendedState:
    x: np.ndarray
    P: np.ndarray

    @property
    def chi_hat(self) -> np.ndarray:
        return self.x[0:2].copy()

    @property
    def v_hat(self) -> np.ndarray:
        return self.x[2:5].copy()

    @property
    def d_hat(self) -> np.ndarray:
        return self.x[5:10].copy()


@dataclass(frozen=True)
class EskfConfig:
    R0: np.ndarray = field(default_factory=lambda: np.diag([0.01] * 5))
    R1: np.ndarray = field(default_factory=lambda: np.diag([0.1, 0.1, 0.01, 0.01, 0.01]))
    S: np.ndarray = field(default_factory=lambda: 0.001 * np.eye(5))
    q: np.ndarray = field(default_factory=lambda: np.full(5, 1e-4))
    P0: np.ndarray = field(default_factory=lambda: np.diag([0.5] * 5 + [1.0] * 5))
    Ts: float = 0.01

    def __post_init__(self):
        for name in ("R0", "R1", "S", "q", "P0"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not self.Ts > 0:
            raise ValueError("Ts must be positive")
        for name in ("R0", "R1", "S", "P0"):
            M = getattr(self, name)
            if not np.allclose(M, M.T) or np.linalg.eigvalsh(M).min() < -1e-12:
                raise ValueError(f"{name} must be symmetric positive semidefinite")
        if np.linalg.eigvalsh(self.R1 - self.R0).min() < -1e-12:
            raise ValueError("R1 - R0 must be positive semidefinite")
        if np.any(self.q < 0):
            raise ValueError("q must be nonnegative")

    @property
    def Q1(self) -> np.ndarray:
        Q1 = np.zeros((NE, NE))
        Q1[NX:, NX:] = 4.0 * 5.0 * np.diag(self.q)
        return Q1

    @property
    def Q2(self) -> np.ndarray:
        Q2 = np.zeros((NE, NE))
        Q2[:NX, :NX] = self.S
        return Q2

    @property
    def alpha(self) -> float:
        """Covariance inflation, fixed from the initial Q1 and P0."""
        return float(np.sqrt(np.trace(self.Q1) / np.trace(self.P0)))


def measurement_noise(cfg: EskfConfig, fresh: bool) -> np.ndarray:
    """``R0`` for a freshly measured feature, ``R1`` for a predicted one."""
    return cfg.R0 if fresh else cfg.R1


def eskf_matrices(J, psi, m: float, Ts: float):
    """Discrete ``(A_bar, B_bar, G_bar, C_bar)`` of the extended model."""
    J = np.asarray(J, dtype=float)
    A_s = np.zeros((NX, NX))
    A_s[0:2, 2:5] = J[:, 0:3]
    B_s = np.zeros((NX, 4))
    B_s[0:2, 0:3] = J[:, 3:6]
    B_s[2:5, 3] = rotation_world_from_body(psi)[:, 2] / m
    A_bar = np.eye(NE)
    A_bar[:NX, :NX] += Ts * A_s
    A_bar[:NX, NX:] = Ts * np.eye(NX)
    B_bar = np.zeros((NE, 4))
    B_bar[:NX] = Ts * B_s
    G_bar = np.zeros(NE)
    G_bar[4] = Ts
    C_bar = np.hstack([np.eye(NX), np.zeros((NX, NX))])
    return A_bar, B_bar, G_bar, C_bar


def _solve_innovation(S_inn, rhs):
    if np.linalg.cond(S_inn) > COND_LIMIT:
        raise SingularInnovation("innovation covariance is numerically singular")
    return np.linalg.solve(S_inn, rhs)


def eskf_recursion(x, P, A_bar, B_bar, G_bar, C_bar, u, y, R, Q1, Q2, alpha, g):
    """One predictor-form step on arbitrary-size matrices. Returns ``(x, P)``."""
    S_inn = C_bar @ P @ C_bar.T + R / (1.0 + alpha)
    K = -A_bar @ _solve_innovation(S_inn, C_bar @ P).T
    D_hat = 0.0
    x_next = A_bar @ x + B_bar @ u + G_bar * g + D_hat - K @ (y - C_bar @ x)
    F = A_bar + K @ C_bar
    P_next = (1.0 + alpha) * F @ P @ F.T + K @ R @ K.T + Q1 + Q2
    return x_next, 0.5 * (P_next + P_next.T)


def eskf_step(est: ExtendedState, cfg: EskfConfig, J, psi, m: float, u, y, R_k,
              g: float = SIGNED_GRAVITY) -> ExtendedState:
    """Predictor-form ESKF step.

    ``u = [omega (3); c]`` and ``y = [chi; v]``. ``g`` is the signed
    vertical gravity component (z-up world).
    """
    A_bar, B_bar, G_bar, C_bar = eskf_matrices(J, psi, m, cfg.Ts)
    x, P = eskf_recursion(est.x, est.P, A_bar, B_bar, G_bar, C_bar, np.asarray(u, float),
                          np.asarray(y, float), np.asarray(R_k, float), cfg.Q1, cfg.Q2,
                          cfg.alpha, g)
    return ExtendedState(x, P)


def measurement_update(est: ExtendedState, cfg: EskfConfig, y, R_k,
                       channels=None) -> ExtendedState:
    """Correction half of :func:`eskf_step`; ``channels`` selects measured rows."""
    rows = np.arange(NX) if channels is None else np.asarray(channels)
    C = np.zeros((rows.size, NE))
    C[np.arange(rows.size), rows] = 1.0
    R = np.asarray(R_k, float)[np.ix_(rows, rows)]
    y = np.asarray(y, float)[rows]
    alpha = cfg.alpha
    S_inn = C @ est.P @ C.T + R / (1.0 + alpha)
    L = _solve_innovation(S_inn, C @ est.P).T
    x = est.x + L @ (y - C @ est.x)
    IL = np.eye(NE) - L @ C
    P = (1.0 + alpha) * IL @ est.P @ IL.T + L @ R @ L.T
    return ExtendedState(x, 0.5 * (P + P.T))


def time_update(est: ExtendedState, cfg: EskfConfig, J, psi, m: float, u,
                g: float = SIGNED_GRAVITY) -> ExtendedState:
    """Propagation half of :func:`eskf_step` (disturbance held constant)."""
    A_bar, B_bar, G_bar, _ = eskf_matrices(J, psi, m, cfg.Ts)
    x = A_bar @ est.x + B_bar @ np.asarray(u, float) + G_bar * g
    P = A_bar @ est.P @ A_bar.T + cfg.Q1 + cfg.Q2
    return ExtendedState(x, 0.5 * (P + P.T))


# ---------------------------------------------------------------------------
# Feature prediction
# ---------------------------------------------------------------------------

@dataclass
class PredictorState:
    chi_p: np.ndarray
    J_latched: np.ndarray
    last_image_time: float


def predict_features(pred: Optional[PredictorState], fresh: Optional[FeatureObservation],
                     nu, Ts: float, J_fresh=None):
    """Advance the feature prediction one high-rate tick.

    A fresh valid observation replaces the prediction (and latches
    ``J_fresh``); otherwise ``chi_p += Ts * J_latched @ nu``. Returns
    ``(new_state, fresh_flag)``.
    """
    if fresh is not None and fresh.valid:
        J = pred.J_latched if J_fresh is None else np.asarray(J_fresh, float)
        return PredictorState(np.array(fresh.chi, float), J, fresh.timestamp), True
    if pred is None:
        raise NotInitialized("no valid image received yet")
    chi_p = pred.chi_p + Ts * pred.J_latched @ np.asarray(nu, float)
    return PredictorState(chi_p, pred.J_latched, pred.last_image_time), False


class EskfEstimator:
    """Closed-loop estimator: prediction, adaptive noise, and the ESKF.

    With ``predict=False`` no feature prediction is made: between images only
    the velocity channels are corrected and the feature handed to the
    controller is held at its value from the last image tick.
    """

    def __init__(self, cfg: EskfConfig, ext: CameraExtrinsics, mass: float,
                 predict: bool = True, use_commanded_rates: bool = True):
        self.cfg = cfg
        self.ext = ext
        self.mass = mass
        self.predict = predict
        self.use_commanded_rates = use_commanded_rates
        self.state: Optional[ExtendedState] = None
        self.pred: Optional[PredictorState] = None
        self.chi_control: Optional[np.ndarray] = None
        self.last_fresh = False
        self._prev = None

    @property
    def initialized(self) -> bool:
        return self.state is not None

    def tick(self, obs: Optional[FeatureObservation], meas, last_command=None):
        """Process one state tick; returns ``(filtered_state, chi_for_control)``.

        ``obs`` is the observation delivered at this tick (``None`` or an
        invalid one when there is no usable image). ``last_command`` is the
        control applied since the previous tick.
        """
        fresh = obs is not None and obs.valid
        if not self.initialized:
            if not fresh:
                raise NotInitialized("no valid image received yet")
            J = full_feature_jacobian(obs, meas.psi, self.ext)
            self.pred = PredictorState(np.array(obs.chi, float), J, obs.timestamp)
            x0 = np.concatenate([obs.chi, meas.v, np.zeros(5)])
            prior = ExtendedState(x0, self.cfg.P0.copy())
        else:
            J_prev, psi_prev, v_prev = self._prev
            u = (np.zeros(4) if last_command is None
                 else np.concatenate([last_command.omega, [last_command.c]]))
            prior = time_update(self.state, self.cfg, J_prev, psi_prev, self.mass, u)
            if fresh:
                J = full_feature_jacobian(obs, meas.psi, self.ext)
                self.pred, _ = predict_features(self.pred, obs, None, self.cfg.Ts, J)
            elif self.predict:
                nu = np.concatenate([v_prev, u[:3] if self.use_commanded_rates else np.zeros(3)])
                self.pred, _ = predict_features(self.pred, None, nu, self.cfg.Ts)

        y = np.concatenate([self.pred.chi_p, meas.v])
        if fresh or self.predict:
            R = measurement_noise(self.cfg, fresh)
            self.state = measurement_update(prior, self.cfg, y, R)
        else:
            self.state = measurement_update(prior, self.cfg, y, self.cfg.R0, channels=[2, 3, 4])
        if fresh or self.predict or self.chi_control is None:
            self.chi_control = self.state.chi_hat
        self.last_fresh = fresh
        self._prev = (self.pred.J_latched, np.array(meas.psi, float), np.array(meas.v, float))
        return self.state, self.chi_control.copy()
