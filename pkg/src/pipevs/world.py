"""Simulation truth: pipeline geometry, quadrotor plant, wind and state sensing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .errors import NonFinite, OutOfRange
from .frames import GRAVITY, euler_rate_matrix, rotation_world_from_body

GRAVITY_VEC = np.array([0.0, 0.0, -GRAVITY])
DEFAULT_MASS = 1.5
SPEED_LIMIT = 50.0


# ---------------------------------------------------------------------------
# Pipeline geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PipelineSegment:
    """One piece of centerline.

    ``elevation_change`` is distributed linearly in arclength, so a segment
    climbs at the constant angle ``asin(elevation_change / length)``. Arcs
    turn at constant horizontal curvature.
    """

    kind: str
    length: float
    heading_change: float = 0.0
    elevation_change: float = 0.0

    def __post_init__(self):
        if self.kind not in ("straight", "arc"):
            raise ValueError(f"unknown segment kind {self.kind!r}")
        if not self.length > 0:
            raise ValueError("segment length must be positive")
        if self.kind == "arc" and self.heading_change == 0:
            raise ValueError("arc segment needs a nonzero heading change")
        if self.kind == "straight" and self.heading_change != 0:
            raise ValueError("straight segment cannot change heading")
        if abs(self.elevation_change) >= self.length:
            raise ValueError("elevation change must be smaller than the length")


@dataclass(frozen=True, eq=False)
class PipelineModel:
    start_point: np.ndarray
    start_heading: float
    diameter: float
    segments: tuple

    def __post_init__(self):
        object.__setattr__(self, "start_point", np.asarray(self.start_point, dtype=float))
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ValueError("pipeline needs at least one segment")
        if not self.diameter > 0:
            raise ValueError("pipe diameter must be positive")
        starts = [self.start_point]
        headings = [float(self.start_heading)]
        s0 = [0.0]
        for seg in self.segments:
            p, h = _segment_eval(seg, starts[-1], headings[-1], seg.length)[0:2]
            starts.append(p)
            headings.append(h)
            s0.append(s0[-1] + seg.length)
        object.__setattr__(self, "_starts", np.array(starts))
        object.__setattr__(self, "_headings", np.array(headings))
        object.__setattr__(self, "_s0", np.array(s0))

    @property
    def total_length(self) -> float:
        return float(self._s0[-1])

    @property
    def joins(self) -> np.ndarray:
        """Arclengths of segment boundaries, including both ends."""
        return self._s0.copy()

    def segment_index(self, s: float) -> int:
        i = int(np.searchsorted(self._s0, s, side="right")) - 1
        return min(max(i, 0), len(self.segments) - 1)


def _segment_eval(seg: PipelineSegment, p0, h0, sigma):
    """Point, heading and unit tangent at local arclength ``sigma``."""
    sin_g = seg.elevation_change / seg.length
    cos_g = np.sqrt(1.0 - sin_g * sin_g)
    sh = sigma * cos_g
    if seg.kind == "straight":
        h = h0
        xy = np.array([np.cos(h0), np.sin(h0)]) * sh
    else:
        kappa = seg.heading_change / (seg.length * cos_g)
        h = h0 + kappa * sh
        xy = np.array([np.sin(h) - np.sin(h0), np.cos(h0) - np.cos(h)]) / kappa
    p = np.asarray(p0, dtype=float) + np.array([xy[0], xy[1], sigma * sin_g])
    t = np.array([cos_g * np.cos(h), cos_g * np.sin(h), sin_g])
    return p, h, t


def pipeline_point(model: PipelineModel, s: float):
    """Centerline point and unit tangent at arclength ``s``."""
    if not (0.0 <= s <= model.total_length):
        raise OutOfRange(f"arclength {s} outside [0, {model.total_length}]")
    i = model.segment_index(s)
    p, _, t = _segment_eval(model.segments[i], model._starts[i], model._headings[i],
                            s - model._s0[i])
    return p, t


def sample_centerline(model: PipelineModel, s_values) -> np.ndarray:
    """Centerline points for an array of arclengths (clipped to the pipe)."""
    s_values = np.clip(np.asarray(s_values, dtype=float), 0.0, model.total_length)
    out = np.empty((s_values.size, 3))
    idx = np.clip(np.searchsorted(model._s0, s_values, side="right") - 1,
                  0, len(model.segments) - 1)
    for i in np.unique(idx):
        mask = idx == i
        seg = model.segments[i]
        sigma = s_values[mask] - model._s0[i]
        sin_g = seg.elevation_change / seg.length
        cos_g = np.sqrt(1.0 - sin_g * sin_g)
        h0 = model._headings[i]
        sh = sigma * cos_g
        if seg.kind == "straight":
            x = np.cos(h0) * sh
            y = np.sin(h0) * sh
        else:
            kappa = seg.heading_change / (seg.length * cos_g)
            h = h0 + kappa * sh
            x = (np.sin(h) - np.sin(h0)) / kappa
            y = (np.cos(h0) - np.cos(h)) / kappa
        out[mask] = model._starts[i] + np.column_stack([x, y, sigma * sin_g])
    return out


def nearest_arclength(model: PipelineModel, point, s_hint: float | None = None,
                      window: float = 4.0, step: float = 0.02) -> float:
    """Arclength of the centerline point horizontally closest to ``point``.

    With ``s_hint`` only a window around the hint is searched.
    """
    if s_hint is None:
        lo, hi = 0.0, model.total_length
    else:
        lo, hi = max(0.0, s_hint - window), min(model.total_length, s_hint + window)
    s = np.linspace(lo, hi, max(int((hi - lo) / step), 1) + 1)
    pts = sample_centerline(model, s)
    d2 = np.sum((pts[:, :2] - np.asarray(point)[:2]) ** 2, axis=1)
    return float(s[int(np.argmin(d2))])


def straight(length=8.0, slope_deg=0.0) -> PipelineSegment:
    return PipelineSegment("straight", length, 0.0, length * np.sin(np.radians(slope_deg)))


def arc(length=8.0, turn_deg=45.0, slope_deg=0.0) -> PipelineSegment:
    return PipelineSegment("arc", length, np.radians(turn_deg),
                           length * np.sin(np.radians(slope_deg)))


def default_pipeline() -> PipelineModel:
    """Eight 8 m segments: level, climbs, bends and descents."""
    segments = (
        straight(8.0),
        straight(8.0, +10.0),
        arc(8.0, +45.0),
        straight(8.0, +10.0),
        arc(8.0, -45.0),
        straight(8.0, -10.0),
        straight(8.0, -10.0),
        straight(8.0),
    )
    return PipelineModel(np.zeros(3), 0.0, 1.5, segments)


# ---------------------------------------------------------------------------
# Plant
# ---------------------------------------------------------------------------

@dataclass
class PlantState:
    """Truth state. ``omega_act`` and ``thrust_act`` are the lagged actuator outputs."""

    p: np.ndarray
    v: np.ndarray
    psi: np.ndarray
    omega_act: np.ndarray = field(default_factory=lambda: np.zeros(3))
    thrust_act: float = DEFAULT_MASS * GRAVITY

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.psi = np.asarray(self.psi, dtype=float)
        self.omega_act = np.asarray(self.omega_act, dtype=float)
        self.thrust_act = float(self.thrust_act)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.v, self.psi, self.omega_act, [self.thrust_act]])

    @classmethod
    def from_vector(cls, y) -> "PlantState":
        return cls(y[0:3].copy(), y[3:6].copy(), y[6:9].copy(), y[9:12].copy(), float(y[12]))


@dataclass(frozen=True)
class ActuatorModel:
    """First-order inner-loop lag on body rates and thrust, then saturation."""

    rate_time_constant: float = 0.02
    thrust_time_constant: float = 0.04
    rate_limit: float = 3.0
    thrust_limits: tuple = (0.0, 36.0)

    def __post_init__(self):
        if self.rate_time_constant < 0 or self.thrust_time_constant < 0:
            raise ValueError("time constants must be >= 0")
        if not self.thrust_limits[0] < self.thrust_limits[1]:
            raise ValueError("thrust limits must satisfy min < max")
        if not self.rate_limit > 0:
            raise ValueError("rate limit must be positive")


IDEAL_ACTUATOR = ActuatorModel(0.0, 0.0, 1e9, (-1e9, 1e9))


def _plant_rhs(y, omega_cmd, c_cmd, act: ActuatorModel, mass, wind_velocity,
               drag_coeff, disturbance_accel):
    v = y[3:6]
    psi = y[6:9]
    omega = np.clip(y[9:12], -act.rate_limit, act.rate_limit)
    c = min(max(y[12], act.thrust_limits[0]), act.thrust_limits[1])
    dy = np.empty(13)
    dy[0:3] = v
    dy[3:6] = (rotation_world_from_body(psi)[:, 2] * (c / mass) + GRAVITY_VEC
               + drag_coeff * (wind_velocity - v) + disturbance_accel)
    dy[6:9] = euler_rate_matrix(psi) @ omega
    dy[9:12] = (omega_cmd - y[9:12]) / act.rate_time_constant if act.rate_time_constant > 0 else 0.0
    dy[12] = (c_cmd - y[12]) / act.thrust_time_constant if act.thrust_time_constant > 0 else 0.0
    return dy


def step_plant(state: PlantState, u, dt: float, act: ActuatorModel = ActuatorModel(), *,
               mass: float = DEFAULT_MASS, wind_velocity=None, drag_coeff: float = 0.0,
               disturbance_accel=None) -> PlantState:
    """Advance the plant one RK4 step with inputs held over the step.

    ``u`` is any object with ``omega`` (3,) and ``c`` attributes. The wind
    velocity and extra disturbance acceleration are held constant over ``dt``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    omega_cmd = np.asarray(u.omega, dtype=float)
    c_cmd = float(u.c)
    if not (np.all(np.isfinite(omega_cmd)) and np.isfinite(c_cmd)):
        raise NonFinite("non-finite control input")
    wind_velocity = np.zeros(3) if wind_velocity is None else np.asarray(wind_velocity, float)
    disturbance_accel = (np.zeros(3) if disturbance_accel is None
                         else np.asarray(disturbance_accel, float))

    y = state.as_vector()
    if act.rate_time_constant == 0:
        y[9:12] = omega_cmd
    if act.thrust_time_constant == 0:
        y[12] = c_cmd
    args = (omega_cmd, c_cmd, act, mass, wind_velocity, drag_coeff, disturbance_accel)
    k1 = _plant_rhs(y, *args)
    k2 = _plant_rhs(y + 0.5 * dt * k1, *args)
    k3 = _plant_rhs(y + 0.5 * dt * k2, *args)
    k4 = _plant_rhs(y + dt * k3, *args)
    y_next = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(y_next)) or np.linalg.norm(y_next[3:6]) >= SPEED_LIMIT:
        raise NonFinite("plant state diverged")
    return PlantState.from_vector(y_next)


def hover_state(p, yaw: float = 0.0, v=(0.0, 0.0, 0.0), mass: float = DEFAULT_MASS) -> PlantState:
    return PlantState(np.asarray(p, float), np.asarray(v, float), np.array([0.0, 0.0, yaw]),
                      np.zeros(3), mass * GRAVITY)


# ---------------------------------------------------------------------------
# Wind
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WindModel:
    """Ornstein-Uhlenbeck wind: per-axis stationary variance around ``mean``.

    ``drag_coeff`` couples air-relative velocity into the plant as linear drag.
    """

    mean: tuple = (0.0, 0.0, 0.0)
    variance: float = 0.0
    correlation_time: float = 1.0
    drag_coeff: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("wind variance must be >= 0")
        if self.drag_coeff < 0:
            raise ValueError("drag coefficient must be >= 0")
        if not self.correlation_time > 0:
            raise ValueError("correlation time must be positive")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def initial(self, rng: np.random.Generator) -> np.ndarray:
        """Draw from the stationary distribution."""
        return np.asarray(self.mean, float) + np.sqrt(self.variance) * rng.standard_normal(3)


CALM = WindModel(mean=(0.0, 0.0, 0.0), variance=0.0)


def crosswind(seed: int = 0) -> WindModel:
    """3 m/s mean along world y with 0.04 (m/s)^2 variance."""
    return WindModel(mean=(0.0, 3.0, 0.0), variance=0.04, correlation_time=1.0,
                     drag_coeff=0.3, seed=seed)


def _ou_coeffs(wind: WindModel, dt: float):
    a = np.exp(-dt / wind.correlation_time)
    b = np.sqrt(wind.variance * (1.0 - a * a))
    return a, b


def sample_wind(wind: WindModel, dt: float, rng: np.random.Generator, current=None) -> np.ndarray:
    """Next wind velocity of the OU process (exact discretization).

    ``current=None`` starts from the mean.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    mean = np.asarray(wind.mean, dtype=float)
    current = mean if current is None else np.asarray(current, dtype=float)
    a, b = _ou_coeffs(wind, dt)
    return mean + a * (current - mean) + b * rng.standard_normal(3)


def wind_path(wind: WindModel, dt: float, n: int, rng: np.random.Generator,
              current=None) -> np.ndarray:
    """``n`` consecutive :func:`sample_wind` draws, vectorized. Shape (n, 3)."""
    mean = np.asarray(wind.mean, dtype=float)
    current = mean if current is None else np.asarray(current, dtype=float)
    a, b = _ou_coeffs(wind, dt)
    xi = rng.standard_normal((n, 3))
    dev, _ = lfilter([b], [1.0, -a], xi, axis=0, zi=(a * (current - mean))[None, :])
    return mean + dev


# ---------------------------------------------------------------------------
# Sensing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StateMeasurement:
    t: float
    p: np.ndarray
    v: np.ndarray
    psi: np.ndarray


def measure_state(state: PlantState, sigma2: float, rng: np.random.Generator,
                  t: float = 0.0) -> StateMeasurement:
    """Velocity and attitude with additive N(0, sigma2 I) noise.

    Six normals are drawn on every call, whatever ``sigma2`` is, so runs with
    different noise levels stay aligned on the same random stream. Position is
    returned exact and is for logging only.
    """
    if sigma2 < 0:
        raise ValueError("sigma2 must be >= 0")
    n = np.sqrt(sigma2) * rng.standard_normal(6)
    return StateMeasurement(t, state.p.copy(), state.v + n[:3], state.psi + n[3:])

