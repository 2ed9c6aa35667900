"""Independent reference implementations used as test oracles.

Written with explicit loops or textbook closed forms, deliberately sharing no
code with the package.
"""
import math

import numpy as np


def cholesky_loops(P):
    n = len(P)
    L = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            s = sum(L[i, k] * L[j, k] for k in range(j))
            if i == j:
                L[i, j] = math.sqrt(P[i, i] - s)
            else:
                L[i, j] = (P[i, j] - s) / L[j, j]
    return L


def udu_loops(P):
    """Bierman's upper UD factorization, column by column from the right."""
    P = np.array(P, dtype=float)
    n = len(P)
    U = np.eye(n)
    D = np.zeros(n)
    for j in range(n - 1, -1, -1):
        D[j] = P[j, j] - sum(D[k] * U[j, k] ** 2 for k in range(j + 1, n))
        for i in range(j):
            U[i, j] = (P[i, j] - sum(D[k] * U[i, k] * U[j, k] for k in range(j + 1, n))) / D[j]
    return U, D


def ekf_update_inv(x, P, H, R, r):
    """Textbook update with an explicit inverse."""
    S = H @ P @ H.T + R
    K = P @ H.T @ np.linalg.inv(S)
    return x + K @ r, (np.eye(len(x)) - K @ H) @ P, K


def partial_update_elementwise(x_m, x_p, P_m, P_p, beta):
    n = len(x_m)
    x = np.empty(n)
    P = np.empty((n, n))
    for i in range(n):
        gi = 1.0 - beta[i]
        x[i] = gi * x_m[i] + (1.0 - gi) * x_p[i]
        for j in range(n):
            gj = 1.0 - beta[j]
            P[i, j] = gi * gj * P_m[i, j] + (1.0 - gi * gj) * P_p[i, j]
    return x, P


def schmidt_literal(x, P, n_core, H, R, r):
    """Consider update from the partitioned block equations."""
    Pxx, Pxp = P[:n_core, :n_core], P[:n_core, n_core:]
    Ppx, Ppp = P[n_core:, :n_core], P[n_core:, n_core:]
    Hx, Hp = H[:, :n_core], H[:, n_core:]
    W = Hx @ Pxx @ Hx.T + Hx @ Pxp @ Hp.T + Hp @ Ppx @ Hx.T + Hp @ Ppp @ Hp.T + R
    Kx = (Pxx @ Hx.T + Pxp @ Hp.T) @ np.linalg.inv(W)
    x_new = x.copy()
    x_new[:n_core] += Kx @ r
    Pxx_n = (np.eye(n_core) - Kx @ Hx) @ Pxx - Kx @ Hp @ Ppx
    Pxp_n = (np.eye(n_core) - Kx @ Hx) @ Pxp - Kx @ Hp @ Ppp
    P_new = np.block([[Pxx_n, Pxp_n], [Pxp_n.T, Ppp]])
    return x_new, P_new


def axis_angle_dcm(axis, angle):
    """Passive rotation matrix (frame rotation) about a unit axis."""
    a = np.asarray(axis, float) / np.linalg.norm(axis)
    K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    # passive = transpose of the active Rodrigues rotation
    return (np.eye(3) + math.sin(angle) * K + (1 - math.cos(angle)) * K @ K).T


def central_jacobian(fun, x, eps=1e-6):
    x = np.asarray(x, float)
    f0 = np.atleast_1d(fun(x))
    J = np.zeros((f0.size, x.size))
    for i in range(x.size):
        h = eps * max(1.0, abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        J[:, i] = (np.atleast_1d(fun(x + e)) - np.atleast_1d(fun(x - e))) / (2 * h)
    return J


def hessian_fd(fun, x, eps=1e-4):
    """Hessians of each output from central differences of an analytic gradient-free fun."""
    x = np.asarray(x, float)
    n = x.size
    m = np.atleast_1d(fun(x)).size
    Hs = np.zeros((m, n, n))
    for i in range(n):
        hi = eps * max(1.0, abs(x[i]))
        for j in range(n):
            hj = eps * max(1.0, abs(x[j]))
            ei = np.zeros(n)
            ej = np.zeros(n)
            ei[i], ej[j] = hi, hj
            Hs[:, i, j] = (np.atleast_1d(fun(x + ei + ej)) - np.atleast_1d(fun(x + ei - ej))
                           - np.atleast_1d(fun(x - ei + ej)) + np.atleast_1d(fun(x - ei - ej))) / (4 * hi * hj)
    return Hs


def flops_terms_batch(n, m):
    """Batch update flops summed row by row from the stage costs."""
    from fractions import Fraction as Fr
    rows = [m * n * n, n * Fr(m * m + m, 2), m ** 3 + Fr(m * m + m, 2), n * m * m,
            (Fr(n * n - n, 2) + n) * m]
    return sum(rows, Fr(0))


def flops_terms_sequential(n, m):
    from fractions import Fraction as Fr
    per = n * n + n + 1 + n + Fr(n * n - n, 2) + n
    dec = Fr(2, 3) * m ** 3 + m * m - Fr(5, 3) * m + Fr(m * m * n, 2) - Fr(m * n, 2)
    return per * m + dec
