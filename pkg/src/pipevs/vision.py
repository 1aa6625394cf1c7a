"""Pinhole camera, synthetic pipeline line-feature extraction, and feature Jacobians.

The line feature is ``chi = (theta, r)``: the direction angle of the projected
pipe centerline in the normalized image plane, folded into [0, pi), and its
signed offset in Hessian normal form ``r = x sin(theta) + y cos(theta)``.
The regulation target is a vertical, centered line ``(pi/2, 0)``.

The default camera looks straight down with image-up pointing forward, so a
pipe running along the heading appears vertical. A vehicle displaced to its
right of the pipe sees the pipe left of center, i.e. ``r < 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np

from .errors import (BehindCamera, DegenerateLine, InvalidDepth, InvalidObservation,
                     InvalidWidth)
from .frames import rotation_world_from_body, skew

CHI_DESIRED = np.array([np.pi / 2, 0.0])
FRONT_ROW_FRACTION = 0.35


@dataclass(frozen=True)
class CameraIntrinsics:
    f_u: float = 400.0
    f_v: float = 400.0
    c_u: float = 424.0
    c_v: float = 240.0
    width: int = 848
    height: int = 480

    def __post_init__(self):
        if not (self.f_u > 0 and self.f_v > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.c_u < self.width and 0 < self.c_v < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.f_u, 0.0, self.c_u], [0.0, self.f_v, self.c_v], [0.0, 0.0, 1.0]])

    @property
    def front_row(self) -> float:
        """Pixel row of the look-ahead scan line."""
        return self.c_v - FRONT_ROW_FRACTION * self.height


DOWNWARD_R_BC = np.array([
    [0.0, -1.0, 0.0],
    [-1.0, 0.0, 0.0],
    [0.0, 0.0, -1.0],
])


@dataclass(frozen=True)
class CameraExtrinsics:
    R_BC: np.ndarray = field(default_factory=lambda: DOWNWARD_R_BC.copy())
    t_BC: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -0.05]))

    def __post_init__(self):
        object.__setattr__(self, "R_BC", np.asarray(self.R_BC, dtype=float))
        object.__setattr__(self, "t_BC", np.asarray(self.t_BC, dtype=float))


class FeaturePoint(NamedTuple):
    """Normalized image coordinates and camera-frame depth of a line point."""

    x: float
    y: float
    z: float


@dataclass(frozen=True)
class FeatureObservation:
    chi: Optional[np.ndarray]
    eta1: Optional[FeaturePoint]
    eta2: Optional[FeaturePoint]
    rho_c: Optional[float]
    rho_f: Optional[float]
    timestamp: float
    valid: bool
    s_center: Optional[float] = None

    @classmethod
    def invalid(cls, timestamp: float) -> "FeatureObservation":
        return cls(None, None, None, None, None, timestamp, False)

    def with_chi(self, chi) -> "FeatureObservation":
        return FeatureObservation(np.asarray(chi, float), self.eta1, self.eta2, self.rho_c,
                                  self.rho_f, self.timestamp, self.valid, self.s_center)


# ---------------------------------------------------------------------------
# Projection
# ---------------------------------------------------------------------------

def project_point(K: CameraIntrinsics, p_C):
    """Return ``(pixel, normalized)`` for a camera-frame point."""
    x, y, z = p_C
    if z <= 1e-6:
        raise BehindCamera(f"depth {z} is not in front of the camera")
    normalized = np.array([x / z, y / z])
    pixel = np.array([K.f_u * normalized[0] + K.c_u, K.f_v * normalized[1] + K.c_v])
    return pixel, normalized


def pixel_to_normalized(K: CameraIntrinsics, pixel) -> np.ndarray:
    u, v = pixel
    return np.array([(u - K.c_u) / K.f_u, (v - K.c_v) / K.f_v])


def normalized_to_pixel(K: CameraIntrinsics, normalized) -> np.ndarray:
    x, y = normalized
    return np.array([K.f_u * x + K.c_u, K.f_v * y + K.c_v])


def depth_from_width(K: CameraIntrinsics, D: float, rho: float) -> float:
    """Depth of a pipe point whose apparent width is ``rho`` pixels."""
    if not rho > 0:
        raise InvalidWidth(f"width {rho} must be positive")
    return K.f_u * D / rho


def width_from_depth(K: CameraIntrinsics, D: float, z: float) -> float:
    if not z > 0:
        raise InvalidDepth(f"depth {z} must be positive")
    return K.f_u * D / z


# ---------------------------------------------------------------------------
# Line feature
# ---------------------------------------------------------------------------

def chi_from_points(eta1, eta2) -> np.ndarray:
    """Line feature ``(theta, r)`` through two normalized points.

    ``theta = atan(-(y2 - y1) / (x2 - x1))`` folded into [0, pi); ``r`` in
    Hessian normal form so horizontal lines are handled.
    """
    x1, y1 = eta1[0], eta1[1]
    dx, dy = eta2[0] - x1, eta2[1] - y1
    if dx * dx + dy * dy <= 1e-18:
        raise DegenerateLine("feature points coincide")
    theta = np.arctan2(-dy, dx) % np.pi
    if theta >= np.pi:
        theta = 0.0
    return np.array([theta, x1 * np.sin(theta) + y1 * np.cos(theta)])


def chi_jacobian_wrt_points(eta1, eta2) -> np.ndarray:
    """d(theta, r) / d(x1, y1, x2, y2), shape (2, 4)."""
    theta = chi_from_points(eta1, eta2)[0]
    x1, y1 = eta1[0], eta1[1]
    dx, dy = eta2[0] - x1, eta2[1] - y1
    L2 = dx * dx + dy * dy
    dth = np.array([-dy, dx, dy, -dx]) / L2
    s, c = np.sin(theta), np.cos(theta)
    q = x1 * c - y1 * s
    dr = q * dth
    dr[0] += s
    dr[1] += c
    return np.vstack([dth, dr])


def point_interaction_matrix(eta) -> np.ndarray:
    """Classical 2x6 point interaction matrix for a camera twist (v; w) in C."""
    x, y, z = eta[0], eta[1], eta[2]
    if not z > 0:
        raise InvalidDepth(f"depth {z} must be positive")
    return np.array([
        [-1.0 / z, 0.0, x / z, x * y, -(1.0 + x * x), y],
        [0.0, -1.0 / z, y / z, 1.0 + y * y, -x * y, -x],
    ])


def body_camera_twist_transform(psi, ext: CameraExtrinsics) -> np.ndarray:
    """6x6 ``T`` with ``nu = T @ nu_C``.

    ``nu = [v (world-expressed); omega (body)]`` and ``nu_C`` is the camera
    twist in the camera frame. The lever-arm block carries ``R_WB`` so the
    linear part stays world-expressed at any attitude; at level attitude it
    reduces to ``skew(t_BC) @ R_BC``.
    """
    R_WB = rotation_world_from_body(psi)
    T = np.zeros((6, 6))
    T[:3, :3] = R_WB @ ext.R_BC
    T[:3, 3:] = R_WB @ skew(ext.t_BC) @ ext.R_BC
    T[3:, 3:] = ext.R_BC
    return T


def invert_twist_transform(T: np.ndarray) -> np.ndarray:
    """Inverse of a block upper-triangular ``T`` with rotation diagonal blocks."""
    A_inv = T[:3, :3].T
    C_inv = T[3:, 3:].T
    T_inv = np.zeros((6, 6))
    T_inv[:3, :3] = A_inv
    T_inv[:3, 3:] = -A_inv @ T[:3, 3:] @ C_inv
    T_inv[3:, 3:] = C_inv
    return T_inv


def full_feature_jacobian(obs: FeatureObservation, psi, ext: CameraExtrinsics) -> np.ndarray:
    """``J`` with ``d(chi)/dt = J @ nu``, shape (2, 6)."""
    if not obs.valid:
        raise InvalidObservation("Jacobian needs a valid observation")
    J_eta = chi_jacobian_wrt_points(obs.eta1, obs.eta2)
    L = np.vstack([point_interaction_matrix(obs.eta1), point_interaction_matrix(obs.eta2)])
    T_inv = invert_twist_transform(body_camera_twist_transform(psi, ext))
    return J_eta @ L @ T_inv


# ---------------------------------------------------------------------------
# Synthetic detector
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8)
def _dense_centerline(pipe, step: float):
    from .world import sample_centerline
    n = max(int(np.ceil(pipe.total_length / step)), 1)
    s = np.linspace(0.0, pipe.total_length, n + 1)
    return s, sample_centerline(pipe, s)


def camera_pose(p, psi, ext: CameraExtrinsics):
    """World position and ``R_WC`` of the camera."""
    R_WB = rotation_world_from_body(psi)
    return np.asarray(p, float) + R_WB @ ext.t_BC, R_WB @ ext.R_BC


def _row_crossing(P, s, y_row, K: CameraIntrinsics):
    """Crossing of the camera-frame polyline ``P`` with normalized row ``y_row``.

    Returns ``(point, arclength)`` of the in-image crossing closest to the
    image center column, or ``None``.
    """
    g = P[:, 1] - y_row * P[:, 2]
    g0, g1 = g[:-1], g[1:]
    cand = np.nonzero(((g0 <= 0) & (g1 > 0)) | ((g0 >= 0) & (g1 < 0)))[0]
    if cand.size == 0:
        return None
    lam = g0[cand] / (g0[cand] - g1[cand])
    pts = P[cand] + lam[:, None] * (P[cand + 1] - P[cand])
    ok = pts[:, 2] > 1e-6
    if not np.any(ok):
        return None
    pts, lam, cand = pts[ok], lam[ok], cand[ok]
    x = pts[:, 0] / pts[:, 2]
    u = K.f_u * x + K.c_u
    inside = (u >= 0) & (u < K.width)
    if not np.any(inside):
        return None
    j = np.argmin(np.where(inside, np.abs(x), np.inf))
    i = cand[j]
    return pts[j], s[i] + lam[j] * (s[i + 1] - s[i])


def extract_features(truth, pipe, K: CameraIntrinsics, ext: CameraExtrinsics, t: float,
                     step: float = 0.02) -> FeatureObservation:
    """Synthesize the line feature seen by the camera from true geometry.

    The projected centerline is intersected with the image center row (giving
    ``eta1`` and ``rho_c``) and the look-ahead row (``eta2`` and ``rho_f``).
    Widths follow from the true depths of those two centerline points.
    """
    s, pts_W = _dense_centerline(pipe, step)
    p_cam, R_WC = camera_pose(truth.p, truth.psi, ext)
    P = (pts_W - p_cam) @ R_WC
    hits = []
    for v_row in (K.c_v, K.front_row):
        y_row = (v_row - K.c_v) / K.f_v
        hit = _row_crossing(P, s, y_row, K)
        if hit is None:
            return FeatureObservation.invalid(t)
        hits.append(hit)
    (P1, s1), (P2, _) = hits
    eta1 = FeaturePoint(P1[0] / P1[2], P1[1] / P1[2], P1[2])
    eta2 = FeaturePoint(P2[0] / P2[2], P2[1] / P2[2], P2[2])
    try:
        chi = chi_from_points(eta1, eta2)
    except DegenerateLine:
        return FeatureObservation.invalid(t)
    return FeatureObservation(chi, eta1, eta2, width_from_depth(K, pipe.diameter, eta1.z),
                              width_from_depth(K, pipe.diameter, eta2.z), t, True, float(s1))
