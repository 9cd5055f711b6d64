"""Compiled single-step updates and whole-trajectory loops.

Each ``*_step`` mutates its state arrays in place; the ``run_*`` loops call
the same step functions so the Python and batch paths share one code path.
Scalar traces live in 1-element arrays so they can be updated in place.
"""
import numpy as np
from numba import njit

from ..exceptions import SingularUpdateError

SINGULAR_TOL = 1e-12


@njit(cache=True)
def rate(i, r0, rc, power):
    return r0 * rc / (rc + i ** power)


@njit(cache=True)
def trace_step(z, phi, coef):
    for k in range(z.shape[0]):
        z[k] = coef * z[k] + phi[k]


# ---------------------------------------------------------------- least squares

@njit(cache=True)
def lstd_step(theta, M, z, phi, phi_next, r, rho, rho_prev, lam, gamma):
    trace_step(z, phi, gamma * lam * rho_prev)
    dphi = phi - gamma * rho * phi_next
    Mz = M @ z
    denom = 1.0 + dphi @ Mz
    if abs(denom) < SINGULAR_TOL:
        raise SingularUpdateError("LSTD: 1 + dphi' M z vanished")
    gain = Mz / denom
    theta += gain * (rho * r - dphi @ theta)
    M -= np.outer(gain, M.T @ dphi)


@njit(cache=True)
def _sm_symmetric(N, phi):
    Nphi = N @ phi
    denom = 1.0 + phi @ Nphi
    if abs(denom) < SINGULAR_TOL:
        raise SingularUpdateError("1 + phi' N phi vanished")
    N -= np.outer(Nphi, Nphi) / denom


@njit(cache=True)
def lspe_step(theta, N, A, b, z, phi, phi_next, r, rho, rho_prev, lam, gamma):
    trace_step(z, phi, gamma * lam * rho_prev)
    dphi = phi - gamma * rho * phi_next
    _sm_symmetric(N, phi)
    A += np.outer(z, dphi)
    b += rho * r * z
    theta += N @ (b - A @ theta)


@njit(cache=True)
def fpkf_step(theta, N, z, Z, phi, phi_next, r, rho, rho_prev, lam, gamma):
    coef = gamma * lam * rho_prev
    trace_step(z, phi, coef)
    Z *= coef
    Z += np.outer(phi, theta)
    dphi = phi - gamma * rho * phi_next
    _sm_symmetric(N, phi)
    theta += N @ (rho * r * z - Z @ dphi)


@njit(cache=True)
def brm_step(theta, C, D, sc, phi, phi_next, r, rho, rho_prev, lam, gamma):
    # sc = [y, reward trace]
    coef = gamma * lam * rho_prev
    y = coef * coef * sc[0] + 1.0
    sc[0] = y
    sy = np.sqrt(y)
    dphi = phi - gamma * rho * phi_next
    u = sy * dphi
    v = (coef / sy) * D
    p = theta.shape[0]
    U = np.empty((p, 2))
    Vt = np.empty((2, p))
    U[:, 0] = u + v
    U[:, 1] = v
    Vt[0] = u + v
    Vt[1] = -v
    w0 = sy * rho * r + (coef / sy) * sc[1]
    w1 = -(coef / sy) * sc[1]
    CU = C @ U
    G = Vt @ CU
    g00 = 1.0 + G[0, 0]
    g01 = G[0, 1]
    g10 = G[1, 0]
    g11 = 1.0 + G[1, 1]
    det = g00 * g11 - g01 * g10
    if abs(det) < SINGULAR_TOL:
        raise SingularUpdateError("BRM: I2 + V' C U is singular")
    Vth = Vt @ theta
    e0 = w0 - Vth[0]
    e1 = w1 - Vth[1]
    k0 = (g11 * e0 - g01 * e1) / det
    k1 = (-g10 * e0 + g00 * e1) / det
    theta += CU[:, 0] * k0 + CU[:, 1] * k1
    VC = Vt @ C
    Ginv = np.empty((2, 2))
    Ginv[0, 0] = g11 / det
    Ginv[0, 1] = -g01 / det
    Ginv[1, 0] = -g10 / det
    Ginv[1, 1] = g00 / det
    C -= CU @ (Ginv @ VC)
    D *= coef
    D += y * dphi
    sc[1] = coef * sc[1] + r * rho * y


# ---------------------------------------------------------------- gradient

@njit(cache=True)
def td_step(theta, z, phi, phi_next, r, rho, rho_prev, lam, gamma, a):
    trace_step(z, phi, gamma * lam * rho_prev)
    delta = rho * r - (phi - gamma * rho * phi_next) @ theta
    theta += (a * delta) * z


@njit(cache=True)
def tdc_step(theta, w, z, phi, phi_next, r, rho, rho_prev, lam, gamma, a, b):
    trace_step(z, phi, gamma * lam * rho_prev)
    dphi = phi - gamma * rho * phi_next
    delta = rho * r - dphi @ theta
    corr = gamma * rho * (1.0 - lam) * (z @ w)
    theta += (a * delta) * z
    # at lam == 1 the correction is identically zero; skipping it keeps TDC(1) == TD(1) bitwise
    if lam < 1.0:
        theta -= (a * corr) * phi_next
    w += b * ((rho * r - dphi @ theta) * z - (phi @ w) * phi)


@njit(cache=True)
def gtd2_step(theta, w, z, phi, phi_next, r, rho, rho_prev, lam, gamma, a, b):
    trace_step(z, phi, gamma * lam * rho_prev)
    dphi = phi - gamma * rho * phi_next
    theta += a * ((phi @ w) * phi - gamma * rho * (1.0 - lam) * (z @ w) * phi_next)
    w += b * ((rho * r - dphi @ theta) * z - (phi @ w) * phi)


@njit(cache=True)
def gbrm_step(theta, z, zeta, sc, phi, phi_next, r, rho, rho_prev, lam, gamma, a):
    # sc = [c, d]: both traces are scalars
    coef = gamma * lam * rho_prev
    trace_step(z, phi, coef)
    c = 1.0 + coef * coef * sc[0]
    nxt = gamma * rho * (1.0 - lam) * phi_next
    zeta *= coef
    zeta += c * nxt
    delta = rho * r - (phi - gamma * rho * phi_next) @ theta
    d = delta * c + coef * sc[1]
    sc[0] = c
    sc[1] = d
    theta += (a * delta) * z
    if lam < 1.0:
        theta += a * (delta * (c * nxt - zeta) - d * nxt)


# ---------------------------------------------------------------- trajectory loops
# phis has n + 1 rows; returns theta_1 .. theta_n as an (n, p) array.

@njit(cache=True)
def run_lstd(theta, M, z, phis, rewards, rhos, rho_prev, lam, gamma):
    n = rewards.shape[0]
    out = np.empty((n, theta.shape[0]))
    for i in range(n):
        lstd_step(theta, M, z, phis[i], phis[i + 1], rewards[i], rhos[i], rho_prev, lam, gamma)
        rho_prev = rhos[i]
        out[i] = theta
    return out


@njit(cache=True)
def run_lspe(theta, N, A, b, z, phis, rewards, rhos, rho_prev, lam, gamma):
    n = rewards.shape[0]
    out = np.empty((n, theta.shape[0]))
    for i in range(n):
        lspe_step(theta, N, A, b, z, phis[i], phis[i + 1], rewards[i], rhos[i], rho_prev, lam, gamma)
        rho_prev = rhos[i]
        out[i] = theta
    return out


@njit(cache=True)
def run_fpkf(theta, N, z, Z, phis, rewards, rhos, rho_prev, lam, gamma):
    n = rewards.shape[0]
    out = np.empty((n, theta.shape[0]))
    for i in range(n):
        fpkf_step(theta, N, z, Z, phis[i], phis[i + 1], rewards[i], rhos[i], rho_prev, lam, gamma)
        rho_prev = rhos[i]
        out[i] = theta
    return out


@njit(cache=True)
def run_brm(theta, C, D, sc, phis, rewards, rhos, rho_prev, lam, gamma):
    n = rewards.shape[0]
    out = np.empty((n, theta.shape[0]))
    for i in range(n):
        brm_step(theta, C, D, sc, phis[i], phis[i + 1], rewards[i], rhos[i], rho_prev, lam, gamma)
        rho_prev = rhos[i]
        out[i] = theta
    return out


@njit(cache=True)
def run_td(theta, z, phis, rewards, rhos, rho_prev, lam, gamma, i0, a0, ac, apow):
    n = rewards.shape[0]
    out = np.empty((n, theta.shape[0]))
    for i in range(n):
        a = rate(i0 + i + 1, a0, ac, apow)
        td_step(theta, z, phis[i], phis[i + 1], rewards[i], rhos[i], rho_prev, lam, gamma, a)
        rho_prev = rhos[i]
        out[i] = theta
    return out


@njit(cache=True)
def run_tdc(theta, w, z, phis, rewards, rhos, rho_prev, lam, gamma, i0, a0, ac, apow, b0, bc, bpow):
    n = rewards.shape[0]
    out = np.empty((n, theta.shape[0]))
    for i in range(n):
        a = rate(i0 + i + 1, a0, ac, apow)
        b = rate(i0 + i + 1, b0, bc, bpow)
        tdc_step(theta, w, z, phis[i], phis[i + 1], rewards[i], rhos[i], rho_prev, lam, gamma, a, b)
        rho_prev = rhos[i]
        out[i] = theta
    return out


@njit(cache=True)
def run_gtd2(theta, w, z, phis, rewards, rhos, rho_prev, lam, gamma, i0, a0, ac, apow, b0, bc, bpow):
    n = rewards.shape[0]
    out = np.empty((n, theta.shape[0]))
    for i in range(n):
        a = rate(i0 + i + 1, a0, ac, apow)
        b = rate(i0 + i + 1, b0, bc, bpow)
        gtd2_step(theta, w, z, phis[i], phis[i + 1], rewards[i], rhos[i], rho_prev, lam, gamma, a, b)
        rho_prev = rhos[i]
        out[i] = theta
    return out


@njit(cache=True)
def run_gbrm(theta, z, zeta, sc, phis, rewards, rhos, rho_prev, lam, gamma, i0, a0, ac, apow):
    n = rewards.shape[0]
    out = np.empty((n, theta.shape[0]))
    for i in range(n):
        a = rate(i0 + i + 1, a0, ac, apow)
        gbrm_step(theta, z, zeta, sc, phis[i], phis[i + 1], rewards[i], rhos[i], rho_prev, lam, gamma, a)
        rho_prev = rhos[i]
        out[i] = theta
    return out
