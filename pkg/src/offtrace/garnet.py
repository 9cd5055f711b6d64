"""Random Garnet problems G(n_S, n_A, b, p)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import seeding
from .mdp import Mdp, Policy


@dataclass(frozen=True)
class GarnetSpec:
    n_states: int
    n_actions: int
    branching: int
    n_features: int
    seed: int = 0

    def __post_init__(self):
        if self.n_states < 1 or self.n_actions < 1:
            raise ValueError("n_states and n_actions must be positive")
        if not 1 <= self.branching <= self.n_states:
            raise ValueError(
                f"branching factor {self.branching} must lie in [1, n_states={self.n_states}]"
            )
        if self.n_features < 1:
            raise ValueError("n_features must be >= 1")


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """n_S x p feature matrix; column 0 is the constant feature."""

    phi: np.ndarray

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float, copy=True)
        if phi.ndim != 2:
            raise ValueError("phi must be a 2-D matrix")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @property
    def n_features(self) -> int:
        return self.phi.shape[1]


def cut_point_simplex(rng: np.random.Generator, k: int) -> np.ndarray:
    """Lengths of the k intervals cut from [0, 1] by k - 1 sorted uniform points."""
    cuts = np.sort(rng.random(k - 1))
    return np.diff(np.concatenate(([0.0], cuts, [1.0])))


def partial_fisher_yates(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    perm = np.arange(n)
    for i in range(k):
        j = i + int(rng.integers(n - i))
        perm[i], perm[j] = perm[j], perm[i]
    return perm[:k]


def generate_garnet(spec: GarnetSpec, gamma: float = 0.95) -> tuple[Mdp, FeatureMap]:
    n, m, b = spec.n_states, spec.n_actions, spec.branching

    rng = seeding.rng(spec.seed, "transitions")
    P = np.zeros((n, m, n))
    for s in range(n):
        for a in range(m):
            succ = partial_fisher_yates(rng, n, b)
            P[s, a, succ] = cut_point_simplex(rng, b)

    r_state = seeding.rng(spec.seed, "rewards").random(n)
    R = np.repeat(r_state[:, None], m, axis=1)

    phi = seeding.rng(spec.seed, "features").random((n, spec.n_features))
    phi[:, 0] = 1.0

    return Mdp(P, R, gamma), FeatureMap(phi)


def random_policy(n_states: int, n_actions: int, seed: int) -> Policy:
    if n_actions < 1:
        raise ValueError("n_actions must be >= 1")
    rng = seeding.rng(seed, "policy")
    return Policy(np.stack([cut_point_simplex(rng, n_actions) for _ in range(n_states)]))


def uniform_policy(n_states: int, n_actions: int) -> Policy:
    if n_actions < 1:
        raise ValueError("n_actions must be >= 1")
    return Policy(np.full((n_states, n_actions), 1.0 / n_actions))
