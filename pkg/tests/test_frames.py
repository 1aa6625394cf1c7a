import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pipevs.errors import GimbalLock
from pipevs.frames import (body_rate_matrix, euler_rate_matrix, is_rotation,
                           rotation_world_from_body, skew, wrap_angle)

angle = st.floats(-np.pi, np.pi)
pitch = st.floats(-1.4, 1.4)
vec = st.lists(st.floats(-10, 10), min_size=3, max_size=3)


def test_zero_attitude_is_identity():
    np.testing.assert_array_equal(rotation_world_from_body((0, 0, 0)), np.eye(3))


def test_yaw_quarter_turn_maps_body_x_to_world_y():
    R = rotation_world_from_body((0, 0, np.pi / 2))
    np.testing.assert_allclose(R[:, 0], [0, 1, 0], atol=1e-15)


def test_random_attitudes_are_rotations(rng):
    for psi in rng.uniform(-np.pi, np.pi, size=(1000, 3)):
        R = rotation_world_from_body(psi)
        np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
        assert is_rotation(R)


def test_matches_composition_of_elementary_rotations(rng):
    def rx(a):
        c, s = np.cos(a), np.sin(a)
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])

    def ry(a):
        c, s = np.cos(a), np.sin(a)
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])

    def rz(a):
        c, s = np.cos(a), np.sin(a)
        return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])

    for phi, beta, alpha in rng.uniform(-np.pi, np.pi, size=(100, 3)):
        np.testing.assert_allclose(rotation_world_from_body((phi, beta, alpha)),
                                   rz(alpha) @ ry(beta) @ rx(phi), atol=1e-14)


@given(angle, angle)
def test_yaw_composition_is_additive(a1, a2):
    R = rotation_world_from_body((0, 0, a1)) @ rotation_world_from_body((0, 0, a2))
    np.testing.assert_allclose(R, rotation_world_from_body((0, 0, a1 + a2)), atol=1e-10)


def test_euler_rate_matrix_identity_at_level():
    np.testing.assert_array_equal(euler_rate_matrix((0, 0, 0)), np.eye(3))


def test_gimbal_guard_raises():
    with pytest.raises(GimbalLock):
        euler_rate_matrix((0, np.pi / 2 - 1e-9, 0))


@given(angle, pitch, angle)
def test_euler_rate_matrix_inverts_body_rate_map(phi, beta, alpha):
    psi = (phi, beta, alpha)
    np.testing.assert_allclose(euler_rate_matrix(psi) @ body_rate_matrix(psi), np.eye(3),
                               atol=1e-10)


def test_euler_rates_match_finite_differenced_trajectory():
    # Body rates recovered from R^T dR/dt must map back to the Euler rates.
    def psi_of(t):
        return np.array([0.4 * np.sin(1.3 * t), 0.7 * np.cos(0.9 * t), 2.0 * t + 0.3 * t * t])

    h = 1e-6
    for t in np.linspace(0.0, 3.0, 25):
        R = rotation_world_from_body(psi_of(t))
        dR = (rotation_world_from_body(psi_of(t + h)) - rotation_world_from_body(psi_of(t - h))) / (2 * h)
        W = R.T @ dR
        omega = np.array([W[2, 1], W[0, 2], W[1, 0]])
        psi_dot = (psi_of(t + h) - psi_of(t - h)) / (2 * h)
        np.testing.assert_allclose(euler_rate_matrix(psi_of(t)) @ omega, psi_dot, atol=1e-6)


def test_skew_examples():
    np.testing.assert_array_equal(skew((0, 0, 0)), np.zeros((3, 3)))
    np.testing.assert_array_equal(skew((1, 0, 0)) @ np.array([0, 1, 0]), [0, 0, 1])


@given(vec, vec)
def test_skew_is_cross_product(v, w):
    S = skew(v)
    np.testing.assert_allclose(S @ w, np.cross(v, w), atol=1e-12)
    np.testing.assert_array_equal(S.T, -S)
    assert np.trace(S) == 0.0 and np.all(np.diag(S) == 0.0)


@given(st.floats(-50, 50))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -np.pi < w <= np.pi
    assert np.isclose(np.cos(w), np.cos(a), atol=1e-9) and np.isclose(np.sin(w), np.sin(a), atol=1e-9)
