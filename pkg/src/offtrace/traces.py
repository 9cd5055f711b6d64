"""Importance-weighted eligibility traces and step-size schedules."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class TraceState:
    z: np.ndarray
    last_rho: float = 1.0

    @classmethod
    def zeros(cls, p: int) -> "TraceState":
        return cls(np.zeros(p))


def update_trace(state: TraceState, phi, lam: float, gamma: float, rho_prev: float | None = None):
    """z_i = gamma * lam * rho_{i-1} * z_{i-1} + phi_i, in place.

    ``rho_prev`` defaults to ``state.last_rho`` (1 before the first step).
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if rho_prev is None:
        rho_prev = state.last_rho
    state.z *= gamma * lam * rho_prev
    state.z += phi
    return state.z


LINEAR = "linear"
TWO_THIRDS = "two-thirds"
_POWERS = {LINEAR: 1.0, TWO_THIRDS: 2.0 / 3.0}


@dataclass(frozen=True)
class RateSchedule:
    """rate_i = a0 * ac / (ac + i**power), power 1 (linear) or 2/3."""

    a0: float
    ac: float
    mode: str = LINEAR
    power: float = field(init=False)

    def __post_init__(self):
        if self.mode not in _POWERS:
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if self.a0 <= 0 or self.ac <= 0:
            raise ValueError("a0 and ac must be positive")
        object.__setattr__(self, "power", _POWERS[self.mode])

    def __call__(self, i) -> float:
        return alpha(i, self)


def alpha(i, s: RateSchedule):
    return s.a0 * s.ac / (s.ac + np.power(i, s.power))
