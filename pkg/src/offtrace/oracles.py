"""Reference computations used to validate the learners.

Nothing here shares code with ``offtrace.learners``: batch solutions are
built from explicit double sums over the trajectory, forward views are
evaluated from the future of the trajectory, and model quantities come from
the MDP itself.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import linalg

from .exceptions import HypothesisUnmet
from .garnet import FeatureMap
from .mdp import Mdp, Policy, importance_ratios, induce_chain, stationary_distribution
from .sampling import Trajectory


# ------------------------------------------------------------------ batch oracles

def trace_weights(traj: Trajectory, lam: float, gamma: float | None = None) -> np.ndarray:
    """Upper-triangular W with W[j, k] = (gamma*lam)^(k-j) * rho_j ... rho_{k-1} for k >= j."""
    gamma = traj.gamma if gamma is None else gamma
    n = len(traj)
    W = np.zeros((n, n))
    step = gamma * lam * traj.rhos
    for j in range(n):
        W[j, j] = 1.0
        if j + 1 < n:
            W[j, j + 1:] = np.cumprod(step[j:n - 1])
    return W


def _weighted_rewards(traj):
    return traj.rhos * traj.rewards


def lstd_system(traj: Trajectory, lam: float, gamma: float | None = None):
    """(A_n, b_n) = (sum_j z_j dphi_j', sum_j z_j rho_j r_j), z_j summed explicitly."""
    gamma = traj.gamma if gamma is None else gamma
    W = trace_weights(traj, lam, gamma)
    Z = W.T @ traj.phis[:-1]
    dphi = traj.phis[:-1] - gamma * traj.rhos[:, None] * traj.phis[1:]
    return Z.T @ dphi, Z.T @ _weighted_rewards(traj)


def batch_lstd(traj: Trajectory, lam: float, gamma: float | None = None, reg: float = 1e-3):
    A, b = lstd_system(traj, lam, gamma)
    return linalg.solve(reg * np.eye(len(b)) + A, b)


def batch_lspe_n(traj: Trajectory, reg: float = 1e-3) -> np.ndarray:
    """Direct inverse of reg*I + sum_j phi_j phi_j'."""
    Phi = traj.phis[:-1]
    return linalg.inv(reg * np.eye(Phi.shape[1]) + Phi.T @ Phi)


def batch_lspe(traj: Trajectory, lam: float, theta_prev, gamma: float | None = None, reg: float = 1e-3):
    """LSPE iterate after the last transition, given the previous iterate.

    Minimises sum_j (phi_j' xi + sum_{k>=j} w_jk (rho_k r_k - dphi_k' xi) - phi_j' omega)^2
    + reg * |omega - xi|^2 with xi = theta_prev.
    """
    gamma = traj.gamma if gamma is None else gamma
    xi = np.asarray(theta_prev, dtype=float)
    W = trace_weights(traj, lam, gamma)
    Phi = traj.phis[:-1]
    dphi = Phi - gamma * traj.rhos[:, None] * traj.phis[1:]
    targets = Phi @ xi + W @ (_weighted_rewards(traj) - dphi @ xi)
    lhs = reg * np.eye(len(xi)) + Phi.T @ Phi
    return linalg.solve(lhs, reg * xi + Phi.T @ targets)


def batch_fpkf(traj: Trajectory, lam: float, thetas_prev, gamma: float | None = None, reg: float = 1e-3):
    """FPKF iterate after the last transition; ``thetas_prev[j]`` is theta_{j} (theta_0 first).

    Sample j bootstraps on theta_{j-1}; the regulariser pulls towards theta_0.
    """
    gamma = traj.gamma if gamma is None else gamma
    n = len(traj)
    thetas_prev = np.asarray(thetas_prev, dtype=float)
    if thetas_prev.shape[0] < n:
        raise ValueError("need theta_0 .. theta_{n-1}")
    W = trace_weights(traj, lam, gamma)
    Phi = traj.phis[:-1]
    dphi = Phi - gamma * traj.rhos[:, None] * traj.phis[1:]
    wr = _weighted_rewards(traj)
    targets = np.empty(n)
    for j in range(n):
        xi = thetas_prev[j]
        targets[j] = Phi[j] @ xi + W[j] @ (wr - dphi @ xi)
    lhs = reg * np.eye(Phi.shape[1]) + Phi.T @ Phi
    return linalg.solve(lhs, reg * thetas_prev[0] + Phi.T @ targets)


def brm_system(traj: Trajectory, lam: float, gamma: float | None = None):
    """(A~_n, b~_n) from psi_{j->n} and z_{j->n} materialised for every j."""
    gamma = traj.gamma if gamma is None else gamma
    W = trace_weights(traj, lam, gamma)
    dphi = traj.phis[:-1] - gamma * traj.rhos[:, None] * traj.phis[1:]
    Psi = W @ dphi
    zz = W @ _weighted_rewards(traj)
    return Psi.T @ Psi, Psi.T @ zz


def batch_brm(traj: Trajectory, lam: float, gamma: float | None = None, reg: float = 1e-3):
    A, b = brm_system(traj, lam, gamma)
    return linalg.solve(reg * np.eye(len(b)) + A, b)


# ------------------------------------------------------------------ running statistics

@njit(cache=True)
def _lstd_stats(phis, rewards, rhos, lam, gamma):
    n, p = rewards.shape[0], phis.shape[1]
    A = np.zeros((p, p))
    b = np.zeros(p)
    z = np.zeros(p)
    rho_prev = 1.0
    for i in range(n):
        z = gamma * lam * rho_prev * z + phis[i]
        dphi = phis[i] - gamma * rhos[i] * phis[i + 1]
        A += np.outer(z, dphi)
        b += rhos[i] * rewards[i] * z
        rho_prev = rhos[i]
    return A, b


@njit(cache=True)
def _brm_stats(phis, rewards, rhos, lam, gamma):
    n, p = rewards.shape[0], phis.shape[1]
    A = np.zeros((p, p))
    b = np.zeros(p)
    D = np.zeros(p)
    y = 0.0
    zr = 0.0
    rho_prev = 1.0
    for i in range(n):
        eta = gamma * lam * rho_prev
        y = eta * eta * y + 1.0
        dphi = phis[i] - gamma * rhos[i] * phis[i + 1]
        wr = rhos[i] * rewards[i]
        A += y * np.outer(dphi, dphi) + eta * (np.outer(dphi, D) + np.outer(D, dphi))
        b += wr * y * dphi + eta * (zr * dphi + wr * D)
        D = eta * D + y * dphi
        zr = eta * zr + wr * y
        rho_prev = rhos[i]
    return A, b


def lstd_statistics(traj: Trajectory, lam: float):
    """(A_n, b_n) accumulated in O(n p^2); for trajectories too long for ``lstd_system``."""
    return _lstd_stats(traj.phis.astype(float), traj.rewards.astype(float), traj.rhos.astype(float),
                       lam, traj.gamma)


def brm_statistics(traj: Trajectory, lam: float):
    """(A~_n, b~_n) accumulated through the scalar/vector traces y, D and the reward trace."""
    return _brm_stats(traj.phis.astype(float), traj.rewards.astype(float), traj.rhos.astype(float),
                      lam, traj.gamma)


# ------------------------------------------------------------------ model quantities

@dataclass(frozen=True, eq=False)
class ModelQuantities:
    A: np.ndarray
    b: np.ndarray
    P: np.ndarray
    R: np.ndarray
    mu0: np.ndarray
    Q: np.ndarray
    Pi0: np.ndarray
    P_tilde: np.ndarray
    T_lambda_spectral_radius: float
    rho_max: float
    brm_hypothesis: bool
    D: np.ndarray | None = None
    Dprime: np.ndarray | None = None
    S: np.ndarray | None = None
    A_tilde: np.ndarray | None = None
    b_tilde: np.ndarray | None = None
    b_tilde_displayed: np.ndarray | None = None

    @property
    def theta_star(self) -> np.ndarray:
        return linalg.solve(self.A, self.b)

    @property
    def theta_brm(self) -> np.ndarray:
        if not self.brm_hypothesis:
            raise HypothesisUnmet("max lambda*gamma*rho >= 1: BRM limit undefined")
        return linalg.solve(self.A_tilde, self.b_tilde)


def model_quantities(
    mdp: Mdp,
    target: Policy,
    behavior: Policy,
    features: FeatureMap | np.ndarray,
    lam: float,
    *,
    require_brm: bool = False,
) -> ModelQuantities:
    """Limits of the empirical statistics built by the least-squares learners.

    ``b_tilde`` is the exact limit of b~_n / n for rewards R(s, a); it reduces
    to the closed form ``b_tilde_displayed`` = Phi'[(I - g P')Q' D + S] R^pi
    whenever rho * R(s, a) P(.|s, a) averages to R^pi(s) P^pi(s, .) -- e.g. on-policy
    with state rewards -- but not in general off-policy.
    """
    Phi = features.phi if isinstance(features, FeatureMap) else np.asarray(features, dtype=float)
    g = mdp.gamma
    n = mdp.n_states
    I = np.eye(n)
    chain = induce_chain(mdp, target)
    P, R = chain.p_pi, chain.r_pi
    mu0 = stationary_distribution(induce_chain(mdp, behavior))
    D0 = np.diag(mu0)
    if lam * g >= 1.0:
        raise HypothesisUnmet("lambda*gamma must be < 1 for (I - lambda*gamma*P)^-1")
    Q = linalg.inv(I - lam * g * P)
    A = Phi.T @ D0 @ (I - g * P) @ Q @ Phi
    b = Phi.T @ D0 @ Q @ R
    Pi0 = Phi @ linalg.solve(Phi.T @ D0 @ Phi, Phi.T @ D0)
    radius = float(np.abs(linalg.eigvals((1 - lam) * g * Pi0 @ P @ Q)).max())

    rho = importance_ratios(target, behavior)
    rho_max = float(rho.max())
    weight = target.probs * rho
    P_tilde = np.einsum("sa,sat->st", weight, mdp.transition)
    common = dict(A=A, b=b, P=P, R=R, mu0=mu0, Q=Q, Pi0=Pi0, P_tilde=P_tilde,
                  T_lambda_spectral_radius=radius, rho_max=rho_max)

    if lam * g * rho_max >= 1.0:
        if require_brm:
            raise HypothesisUnmet(
                f"max lambda*gamma*rho = {lam * g * rho_max:.3f} >= 1; BRM limit undefined"
            )
        return ModelQuantities(brm_hypothesis=False, **common)

    d = linalg.solve(I - (lam * g) ** 2 * P_tilde.T, mu0)
    D = np.diag(d)
    Dp = np.diag(P_tilde.T @ d)
    S = lam * g * (D @ P - g * Dp) @ Q
    A_tilde = Phi.T @ (
        D - g * D @ P - g * P.T @ D + g ** 2 * Dp + S @ (I - g * P) + (I - g * P.T) @ S.T
    ) @ Phi
    b_disp = Phi.T @ ((I - g * P.T) @ Q.T @ D + S) @ R
    # exact b~ limit: the rho^2 at the reward step routes through P_tilde weighted by R(s, a)
    h = np.einsum("sa,sat,s->t", weight * mdp.reward, mdp.transition, d)
    b_tilde = Phi.T @ (D @ R + S @ R - g * h + lam * g * (I - g * P.T) @ Q.T @ h)
    return ModelQuantities(
        brm_hypothesis=True, D=D, Dprime=Dp, S=S, A_tilde=A_tilde, b_tilde=b_tilde,
        b_tilde_displayed=b_disp, **common,
    )


def apply_t_lambda(mdp: Mdp, pi: Policy, V, lam: float) -> np.ndarray:
    """(I - lam*g*P)^-1 (R + (1 - lam) g P V) on the chain induced by ``pi``."""
    chain = induce_chain(mdp, pi)
    g = mdp.gamma
    if lam * g >= 1.0:
        raise HypothesisUnmet("lambda*gamma must be < 1")
    P = chain.p_pi
    rhs = chain.r_pi + (1.0 - lam) * g * P @ np.asarray(V, dtype=float)
    return linalg.solve(np.eye(mdp.n_states) - lam * g * P, rhs)


# ------------------------------------------------------------------ forward views

def empirical_operator(traj: Trajectory, j: int, i: int, V, lam: float, gamma: float | None = None) -> float:
    """Truncated forward estimate of (T^lambda V)(s_j) using transitions j..i (0-based, inclusive)."""
    n = len(traj)
    if not 0 <= j <= i < n:
        raise IndexError(f"need 0 <= j <= i < {n}, got j={j}, i={i}")
    gamma = traj.gamma if gamma is None else gamma
    V = np.asarray(V, dtype=float)
    s = traj.states
    total = V[s[j]]
    rho_before = 1.0  # rho_j ... rho_{k-1}
    for k in range(j, i + 1):
        rho_through = rho_before * traj.rhos[k]
        bellman = traj.rewards[k] + gamma * V[s[k + 1]]
        total += (gamma * lam) ** (k - j) * (rho_through * bellman - rho_before * V[s[k]])
        rho_before = rho_through
    return float(total)


@njit(cache=True)
def _backward_scan(a, eta):
    # x_i = a_i + eta_i * x_{i+1}, x_n = 0 past the end
    out = np.empty_like(a)
    acc = np.zeros(a.shape[1:]) if a.ndim > 1 else 0.0
    for i in range(a.shape[0] - 1, -1, -1):
        acc = a[i] + eta[i] * acc
        out[i] = acc
    return out


def td_errors(traj: Trajectory, omega) -> np.ndarray:
    """One-step off-policy TD errors delta_i(omega) = rho_i (r_i + g V(s_{i+1})) - V(s_i)."""
    v = traj.phis @ np.asarray(omega, dtype=float)
    return traj.rhos * (traj.rewards + traj.gamma * v[1:]) - v[:-1]


def lambda_td_errors(traj: Trajectory, omega, lam: float) -> np.ndarray:
    """delta^lambda_i(omega) truncated at the end of the trajectory."""
    return _backward_scan(td_errors(traj, omega), traj.gamma * lam * traj.rhos)


def lambda_gradients(traj: Trajectory, lam: float) -> np.ndarray:
    """g^lambda_i = g rho_i (1 - lam) phi_{i+1} + g lam rho_i g^lambda_{i+1}, truncated at the end."""
    g = traj.gamma
    b = (g * (1.0 - lam) * traj.rhos)[:, None] * traj.phis[1:]
    return _backward_scan(np.ascontiguousarray(b), g * lam * traj.rhos)


def lambda_return_system(traj: Trajectory, lam: float):
    """(c, E) with delta^lambda_i(omega) = c_i - E_i' omega for every omega."""
    g = traj.gamma
    eta = g * lam * traj.rhos
    dphi = traj.phis[:-1] - g * traj.rhos[:, None] * traj.phis[1:]
    c = _backward_scan(traj.rhos * traj.rewards, eta)
    E = _backward_scan(np.ascontiguousarray(dphi), eta)
    return c, E


def forward_view_updates(traj: Trajectory, kind: str, hyper) -> np.ndarray:
    """theta_1..theta_n of the forward-view update of a gradient learner.

    ``kind`` is one of td, tdc, gtd2, gbrm; ``hyper`` supplies lam and the
    alpha/beta schedules (see ``learners.Hyper``).
    """
    lam = hyper.lam
    c, E = lambda_return_system(traj, lam)
    G = lambda_gradients(traj, lam)
    Phi = traj.phis[:-1]
    n, p = Phi.shape
    theta = np.zeros(p)
    w = np.zeros(p)
    out = np.empty((n, p))
    for i in range(n):
        a = hyper.alpha(i + 1)
        dl = c[i] - E[i] @ theta
        if kind == "td":
            theta = theta + a * dl * Phi[i]
        elif kind in ("tdc", "gtd2"):
            w = w + hyper.beta(i + 1) * Phi[i] * (dl - Phi[i] @ w)
            if kind == "tdc":
                theta = theta + a * (dl * Phi[i] - G[i] * (Phi[i] @ w))
            else:
                theta = theta + a * (Phi[i] - G[i]) * (Phi[i] @ w)
        elif kind == "gbrm":
            theta = theta + a * (Phi[i] - G[i]) * dl
        else:
            raise ValueError(f"no forward view for {kind!r}")
        out[i] = theta
    return out


# ------------------------------------------------------------------ expectation identities

@njit(cache=True)
def _backward_traces(phis, rhos, delta, lam, gamma):
    n, p = delta.shape[0], phis.shape[1]
    z_delta = np.zeros((n, p))
    nxt_z = np.zeros((n, p, p))
    brm = np.zeros((n, p))
    z = np.zeros(p)
    zeta = np.zeros(p)
    c = 0.0
    d = 0.0
    rho_prev = 1.0
    for i in range(n):
        eta = gamma * lam * rho_prev
        z = eta * z + phis[i]
        c = 1.0 + eta * eta * c
        nxt = gamma * rhos[i] * (1.0 - lam) * phis[i + 1]
        zeta = eta * zeta + c * nxt
        d = delta[i] * c + eta * d
        z_delta[i] = z * delta[i]
        nxt_z[i] = np.outer(nxt, z)
        brm[i] = delta[i] * zeta + d * nxt - delta[i] * c * nxt
        rho_prev = rhos[i]
    return z_delta, nxt_z, brm


def expectation_identities(traj: Trajectory, omega, lam: float, margin: int = 500) -> dict:
    """Sample averages of both sides of the three forward/backward identities.

    Returns {"td": (fwd, bwd), "grad": (fwd, bwd), "residual": (fwd, bwd)} for
    E[phi d^l] = E[z d], E[g^l phi'] = E[g rho (1-l) phi' z'] and the
    residual-gradient identity. The first and last ``margin`` steps are
    dropped: traces start at zero and forward views are truncated.
    """
    omega = np.asarray(omega, dtype=float)
    g = traj.gamma
    delta = td_errors(traj, omega)
    delta_l = lambda_td_errors(traj, omega, lam)
    G = lambda_gradients(traj, lam)
    Phi = traj.phis[:-1]
    z_delta, nxt_z, brm = _backward_traces(
        np.ascontiguousarray(traj.phis, dtype=float), traj.rhos.astype(float), delta, lam, g
    )
    keep = slice(margin, len(traj) - margin)
    return {
        "td": ((Phi * delta_l[:, None])[keep].mean(0), z_delta[keep].mean(0)),
        "grad": (np.einsum("ip,iq->pq", G[keep], Phi[keep]) / len(range(*keep.indices(len(traj)))),
                 nxt_z[keep].mean(0)),
        "residual": ((G * delta_l[:, None])[keep].mean(0), brm[keep].mean(0)),
    }
