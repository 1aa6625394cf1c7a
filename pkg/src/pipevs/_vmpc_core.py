"""Compiled kernels for the VMPC single-shooting Gauss-Newton solve.

State ``x = [theta, r, vx, vy, vz, phi, beta, alpha]``, input ``u = omega``
(body rates). The disturbance estimate and feature Jacobian are frozen over
the horizon; thrust is either frozen or given by a state-feedback law.
"""

import numpy as np
from numba import njit

GIMBAL_GUARD = np.pi / 2 - 1e-6


@njit(cache=True)
def thrust(x, th, d, m, g):
    """Collective thrust and its gradient w.r.t. the state.

    ``th = [feedback, c_frozen, vz_ref, k_c, c_min, c_max]``. With
    ``feedback == 0`` the thrust is the frozen value; otherwise the
    tilt-compensated vertical-speed law is re-evaluated at ``x``.
    """
    dc = np.zeros(8)
    if th[0] == 0.0:
        return th[1], dc
    cp, cb = np.cos(x[5]), np.cos(x[6])
    tilt = cp * cb
    clamped = tilt < 0.3
    if clamped:
        tilt = 0.3
    c = m * (-g + th[3] * (th[2] - x[4]) - d[4]) / tilt
    if c < th[4]:
        return th[4], dc
    if c > th[5]:
        return th[5], dc
    dc[4] = -m * th[3] / tilt
    if not clamped:
        dc[5] = c * np.tan(x[5])
        dc[6] = c * np.tan(x[6])
    return c, dc


@njit(cache=True)
def dynamics(x, u, th, d, J, m, g):
    """Continuous dynamics and their Jacobians ``(f, A, B)``."""
    phi, beta, alpha = x[5], x[6], x[7]
    cp, sp = np.cos(phi), np.sin(phi)
    cb, sb = np.cos(beta), np.sin(beta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    tb = sb / cb
    wx, wy, wz = u[0], u[1], u[2]
    c, dc = thrust(x, th, d, m, g)
    k = c / m

    f = np.empty(8)
    for i in range(2):
        f[i] = (J[i, 0] * x[2] + J[i, 1] * x[3] + J[i, 2] * x[4]
                + J[i, 3] * wx + J[i, 4] * wy + J[i, 5] * wz + d[i])
    f[2] = (ca * sb * cp + sa * sp) * k + d[2]
    f[3] = (sa * sb * cp - ca * sp) * k + d[3]
    f[4] = cb * cp * k + g + d[4]
    f[5] = wx + sp * tb * wy + cp * tb * wz
    f[6] = cp * wy - sp * wz
    f[7] = (sp * wy + cp * wz) / cb

    A = np.zeros((8, 8))
    for i in range(2):
        for j in range(3):
            A[i, 2 + j] = J[i, j]
    # d(R e3)/d(phi, beta, alpha) * c/m
    A[2, 5] = (-ca * sb * sp + sa * cp) * k
    A[3, 5] = (-sa * sb * sp - ca * cp) * k
    A[4, 5] = -cb * sp * k
    A[2, 6] = ca * cb * cp * k
    A[3, 6] = sa * cb * cp * k
    A[4, 6] = -sb * cp * k
    A[2, 7] = (-sa * sb * cp + ca * sp) * k
    A[3, 7] = (ca * sb * cp + sa * sp) * k
    e0 = ca * sb * cp + sa * sp
    e1 = sa * sb * cp - ca * sp
    e2 = cb * cp
    for j in range(4, 7):
        A[2, j] += e0 * dc[j] / m
        A[3, j] += e1 * dc[j] / m
        A[4, j] += e2 * dc[j] / m
    # d(M omega)/d(phi, beta)
    sec2 = 1.0 / (cb * cb)
    A[5, 5] = cp * tb * wy - sp * tb * wz
    A[6, 5] = -sp * wy - cp * wz
    A[7, 5] = (cp * wy - sp * wz) / cb
    A[5, 6] = (sp * wy + cp * wz) * sec2
    A[7, 6] = (sp * wy + cp * wz) * sb * sec2

    B = np.zeros((8, 3))
    for i in range(2):
        for j in range(3):
            B[i, j] = J[i, 3 + j]
    B[5, 0] = 1.0
    B[5, 1] = sp * tb
    B[5, 2] = cp * tb
    B[6, 1] = cp
    B[6, 2] = -sp
    B[7, 1] = sp / cb
    B[7, 2] = cp / cb
    return f, A, B


@njit(cache=True)
def rk4_step(x, u, th, d, J, m, g, h):
    """One RK4 step with its discrete sensitivities ``(x_next, Ad, Bd)``."""
    k1, A1, B1 = dynamics(x, u, th, d, J, m, g)
    k2, A2, B2 = dynamics(x + 0.5 * h * k1, u, th, d, J, m, g)
    k3, A3, B3 = dynamics(x + 0.5 * h * k2, u, th, d, J, m, g)
    k4, A4, B4 = dynamics(x + h * k3, u, th, d, J, m, g)
    I = np.eye(8)
    dk1x = A1
    dk1u = B1
    dk2x = A2 @ (I + 0.5 * h * dk1x)
    dk2u = A2 @ (0.5 * h * dk1u) + B2
    dk3x = A3 @ (I + 0.5 * h * dk2x)
    dk3u = A3 @ (0.5 * h * dk2u) + B3
    dk4x = A4 @ (I + h * dk3x)
    dk4u = A4 @ (h * dk3u) + B4
    x_next = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    Ad = I + h / 6.0 * (dk1x + 2.0 * dk2x + 2.0 * dk3x + dk4x)
    Bd = h / 6.0 * (dk1u + 2.0 * dk2u + 2.0 * dk3u + dk4u)
    return x_next, Ad, Bd


@njit(cache=True)
def rk4_state(x, u, th, d, J, m, g, h):
    k1 = dynamics(x, u, th, d, J, m, g)[0]
    k2 = dynamics(x + 0.5 * h * k1, u, th, d, J, m, g)[0]
    k3 = dynamics(x + 0.5 * h * k2, u, th, d, J, m, g)[0]
    k4 = dynamics(x + h * k3, u, th, d, J, m, g)[0]
    return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@njit(cache=True)
def output(x):
    """Optimization state ``[theta, r, v_h, v_z]``."""
    ca, sa = np.cos(x[7]), np.sin(x[7])
    return np.array([x[0], x[1], ca * x[2] + sa * x[3], x[4]])


@njit(cache=True)
def output_jacobian(x):
    ca, sa = np.cos(x[7]), np.sin(x[7])
    Co = np.zeros((4, 8))
    Co[0, 0] = 1.0
    Co[1, 1] = 1.0
    Co[2, 2] = ca
    Co[2, 3] = sa
    Co[2, 7] = -sa * x[2] + ca * x[3]
    Co[3, 4] = 1.0
    return Co


@njit(cache=True)
def weighted(e, W):
    return e @ (W @ e)


@njit(cache=True)
def rollout(x0, U, th, d, J, m, g, h):
    """Predicted states, shape (N+1, 8); ``ok`` is False past the gimbal guard."""
    N = U.shape[0]
    X = np.empty((N + 1, 8))
    X[0] = x0
    ok = abs(x0[6]) < GIMBAL_GUARD
    for i in range(N):
        X[i + 1] = rk4_state(X[i], U[i], th, d, J, m, g, h)
        if not (abs(X[i + 1, 6]) < GIMBAL_GUARD) or not np.all(np.isfinite(X[i + 1])):
            ok = False
    return X, ok


@njit(cache=True)
def cost(X, U, xod, Phi, PhiN, Psi):
    N = U.shape[0]
    total = 0.0
    for i in range(N):
        total += weighted(output(X[i]) - xod, Phi) + weighted(U[i], Psi)
    total += weighted(output(X[N]) - xod, PhiN)
    return total


@njit(cache=True)
def gauss_newton(x0, U0, th, d, J, m, g, h, xod, Phi, PhiN, Psi, umax,
                 max_iters, step_tol, cost_tol):
    """Projected Gauss-Newton with halving line search.

    Returns ``(U, X, cost, iterations, converged, ok, cost_trace)``. Only
    cost-decreasing iterates are accepted, so ``cost_trace`` is monotone.
    """
    N = U0.shape[0]
    nu = 3 * N
    U = np.minimum(np.maximum(U0.copy(), -umax), umax)
    X, ok = rollout(x0, U, th, d, J, m, g, h)
    if not ok:
        U = np.zeros_like(U)
        X, ok = rollout(x0, U, th, d, J, m, g, h)
    J_cur = cost(X, U, xod, Phi, PhiN, Psi) if ok else np.inf
    trace = np.full(max_iters + 1, np.nan)
    trace[0] = J_cur
    converged = False
    iters = 0
    if not ok:
        return U, X, J_cur, iters, converged, ok, trace

    for it in range(max_iters):
        H = np.zeros((nu, nu))
        grad = np.zeros(nu)
        for i in range(N):
            for a in range(3):
                for b in range(3):
                    H[3 * i + a, 3 * i + b] += Psi[a, b]
            grad[3 * i:3 * i + 3] += Psi @ U[i]
        S = np.zeros((8, nu))
        for i in range(N):
            _, Ad, Bd = rk4_step(X[i], U[i], th, d, J, m, g, h)
            S = Ad @ S
            S[:, 3 * i:3 * i + 3] += Bd
            W = PhiN if i == N - 1 else Phi
            G = output_jacobian(X[i + 1]) @ S
            e = output(X[i + 1]) - xod
            WG = W @ G
            H += G.T @ WG
            grad += WG.T @ e
        step = -np.linalg.solve(H, grad)

        accepted = False
        t = 1.0
        U_new = U
        X_new = X
        J_new = J_cur
        for _ in range(30):
            U_try = U.copy()
            for i in range(N):
                for a in range(3):
                    v = U[i, a] + t * step[3 * i + a]
                    U_try[i, a] = min(max(v, -umax), umax)
            X_try, ok_try = rollout(x0, U_try, th, d, J, m, g, h)
            if ok_try:
                J_try = cost(X_try, U_try, xod, Phi, PhiN, Psi)
                if J_try < J_cur:
                    U_new, X_new, J_new = U_try, X_try, J_try
                    accepted = True
                    break
            t *= 0.5
        iters = it + 1
        if not accepted:
            converged = True
            trace[it + 1] = J_cur
            break
        du = np.max(np.abs(U_new - U))
        dJ = J_cur - J_new
        U, X, J_cur = U_new, X_new, J_new
        trace[it + 1] = J_cur
        if du < step_tol or dJ < cost_tol:
            converged = True
            break
    return U, X, J_cur, iters, converged, ok, trace
