"""Finite MDPs, policies and exact model-based solvers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.sparse.csgraph import connected_components

from .exceptions import ChainError, CoverageError

ROW_TOL = 1e-12


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def _check_stochastic(rows, what):
    if np.any(rows < 0):
        raise ValueError(f"{what} has negative entries")
    err = np.abs(rows.sum(axis=-1) - 1.0).max(initial=0.0)
    if err > ROW_TOL:
        raise ValueError(f"{what} rows do not sum to 1 (max error {err:.3e})")


@dataclass(frozen=True, eq=False)
class Mdp:
    """A finite MDP.

    ``transition[s, a, s']`` is P(s'|s, a), ``reward[s, a]`` is R(s, a).
    """

    transition: np.ndarray
    reward: np.ndarray
    gamma: float

    def __post_init__(self):
        P = _frozen(self.transition)
        R = _frozen(self.reward)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {P.shape}")
        if R.shape != P.shape[:2]:
            raise ValueError(f"reward must have shape {P.shape[:2]}, got {R.shape}")
        _check_stochastic(P, "transition")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", R)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]


@dataclass(frozen=True, eq=False)
class Policy:
    """Stochastic policy; ``probs[s, a]`` is pi(a|s)."""

    probs: np.ndarray

    def __post_init__(self):
        p = _frozen(self.probs)
        if p.ndim != 2:
            raise ValueError(f"policy probs must be 2-D, got shape {p.shape}")
        _check_stochastic(p, "policy")
        object.__setattr__(self, "probs", p)

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]


@dataclass(frozen=True, eq=False)
class InducedChain:
    """Markov reward process obtained by following a policy in an MDP."""

    p_pi: np.ndarray
    r_pi: np.ndarray

    def __post_init__(self):
        P = _frozen(self.p_pi)
        _check_stochastic(P, "p_pi")
        object.__setattr__(self, "p_pi", P)
        object.__setattr__(self, "r_pi", _frozen(self.r_pi))


def _check_dims(mdp: Mdp, pi: Policy):
    if pi.probs.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(
            f"policy shape {pi.probs.shape} does not match MDP "
            f"({mdp.n_states}, {mdp.n_actions})"
        )


def induce_chain(mdp: Mdp, pi: Policy) -> InducedChain:
    _check_dims(mdp, pi)
    p_pi = np.einsum("sa,sat->st", pi.probs, mdp.transition)
    r_pi = np.einsum("sa,sa->s", pi.probs, mdp.reward)
    # re-normalise away summation round-off so the row invariant is exact
    p_pi = p_pi / p_pi.sum(axis=1, keepdims=True)
    return InducedChain(p_pi, r_pi)


def solve_value(chain: InducedChain, gamma: float) -> np.ndarray:
    n = chain.p_pi.shape[0]
    return linalg.solve(np.eye(n) - gamma * chain.p_pi, chain.r_pi)


def exact_value(mdp: Mdp, pi: Policy) -> np.ndarray:
    """V^pi as the solution of (I - gamma P^pi) V = R^pi (dense LU)."""
    chain = induce_chain(mdp, pi)
    v = solve_value(chain, mdp.gamma)
    resid = np.abs(v - mdp.gamma * chain.p_pi @ v - chain.r_pi).max()
    if not resid < 1e-10 * max(1.0, np.abs(v).max()):
        raise ArithmeticError(f"Bellman residual {resid:.3e} after dense solve")
    return v


def _closed_classes(P):
    n_comp, labels = connected_components(P > 0, directed=True, connection="strong")
    leaves = []
    for c in range(n_comp):
        members = labels == c
        if not np.any(P[np.ix_(members, ~members)] > 0):
            leaves.append(c)
    return leaves


def stationary_distribution(
    chain: InducedChain | np.ndarray,
    *,
    max_iter: int = 1_000_000,
    tol: float = 1e-12,
) -> np.ndarray:
    """Stationary distribution of a chain with a single closed class.

    Power iteration runs on the lazy chain (I + P) / 2, i.e. the Cesaro-style
    average, which shares the stationary law of P and is aperiodic. When the
    iteration budget runs out a direct null-space solve is used instead.
    Raises ChainError when the chain has several closed classes.
    """
    P = chain.p_pi if isinstance(chain, InducedChain) else np.asarray(chain, dtype=float)
    n = P.shape[0]
    if len(_closed_classes(P)) != 1:
        raise ChainError("chain has several closed classes; stationary law is not unique")

    lazy = 0.5 * (np.eye(n) + P)
    mu = np.full(n, 1.0 / n)
    for it in range(max_iter):
        mu = mu @ lazy
        if it % 64 == 0:
            mu /= mu.sum()
            if np.abs(mu @ P - mu).sum() < tol:
                break
    else:
        mu = _nullspace_solve(P)
    mu = np.clip(mu, 0.0, None)
    mu /= mu.sum()
    if np.abs(mu @ P - mu).max() > 1e-10:
        mu = _nullspace_solve(P)
    return mu


def _nullspace_solve(P):
    n = P.shape[0]
    lhs = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    mu, *_ = linalg.lstsq(lhs, rhs)
    mu = np.clip(mu, 0.0, None)
    return mu / mu.sum()


def importance_weight(target: Policy, behavior: Policy, s: int, a: int) -> float:
    num = target.probs[s, a]
    den = behavior.probs[s, a]
    if den == 0.0:
        if num > 0.0:
            raise CoverageError(f"pi0({a}|{s}) = 0 while pi({a}|{s}) = {num}")
        return 0.0
    return float(num / den)


def importance_ratios(target: Policy, behavior: Policy) -> np.ndarray:
    """Table of rho(s, a) for every state-action pair."""
    if target.probs.shape != behavior.probs.shape:
        raise ValueError("target and behavior policies have different shapes")
    num, den = target.probs, behavior.probs
    bad = (den == 0.0) & (num > 0.0)
    if bad.any():
        s, a = np.argwhere(bad)[0]
        raise CoverageError(f"pi0({a}|{s}) = 0 while pi({a}|{s}) = {num[s, a]}")
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0.0)
    return out
