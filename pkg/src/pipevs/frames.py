"""Rotation and Euler-kinematics utilities.

Conventions used throughout the package:

* World frame W is z-up; gravity is ``(0, 0, -GRAVITY)``.
* Body frame B is forward-left-up.
* Attitude is the ZYX (yaw-pitch-roll) Euler triple ``(phi, beta, alpha)`` =
  (roll, pitch, yaw). ``R_WB = Rz(alpha) @ Ry(beta) @ Rx(phi)``; its columns
  are the body axes expressed in W.
"""

from typing import NamedTuple

import numpy as np

from .errors import GimbalLock

GRAVITY = 9.81
GIMBAL_GUARD = np.pi / 2 - 1e-6


class EulerAngles(NamedTuple):
    phi: float
    beta: float
    alpha: float


def rotation_world_from_body(psi) -> np.ndarray:
    """Return ``R_WB`` for Euler angles ``psi = (phi, beta, alpha)``."""
    phi, beta, alpha = psi
    cp, sp = np.cos(phi), np.sin(phi)
    cb, sb = np.cos(beta), np.sin(beta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    return np.array([
        [ca * cb, ca * sb * sp - sa * cp, ca * sb * cp + sa * sp],
        [sa * cb, ca * cp + sa * sb * sp, sa * sb * cp - ca * sp],
        [-sb, cb * sp, cb * cp],
    ])


def euler_rate_matrix(psi) -> np.ndarray:
    """Matrix ``M`` with ``d(psi)/dt = M @ omega_body``.

    Raises
    ------
    GimbalLock
        If ``|beta| >= pi/2 - 1e-6``.
    """
    phi, beta, _ = psi
    if abs(beta) >= GIMBAL_GUARD:
        raise GimbalLock(f"pitch {beta!r} at the gimbal guard")
    cp, sp = np.cos(phi), np.sin(phi)
    cb, tb = np.cos(beta), np.tan(beta)
    return np.array([
        [1.0, sp * tb, cp * tb],
        [0.0, cp, -sp],
        [0.0, sp / cb, cp / cb],
    ])


def body_rate_matrix(psi) -> np.ndarray:
    """Inverse of :func:`euler_rate_matrix`: ``omega_body = W @ d(psi)/dt``."""
    phi, beta, _ = psi
    cp, sp = np.cos(phi), np.sin(phi)
    cb, sb = np.cos(beta), np.sin(beta)
    return np.array([
        [1.0, 0.0, -sb],
        [0.0, cp, sp * cb],
        [0.0, -sp, cp * cb],
    ])


def skew(v) -> np.ndarray:
    """Cross-product matrix: ``skew(v) @ w == np.cross(v, w)``."""
    x, y, z = v
    return np.array([
        [0.0, -z, y],
        [z, 0.0, -x],
        [-y, x, 0.0],
    ])


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


def is_rotation(R, tol: float = 1e-10) -> bool:
    R = np.asarray(R, dtype=float)
    return (R.shape == (3, 3)
            and np.allclose(R.T @ R, np.eye(3), atol=tol, rtol=0)
            and abs(np.linalg.det(R) - 1.0) <= tol)
