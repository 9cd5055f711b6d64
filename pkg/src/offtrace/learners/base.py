from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..sampling import Trajectory, Transition
from ..traces import LINEAR, TWO_THIRDS, RateSchedule, TraceState

ALGORITHMS = ("lstd", "lspe", "fpkf", "brm", "td", "tdc", "gtd2", "gbrm")
LEAST_SQUARES = ("lstd", "lspe", "fpkf", "brm")
GRADIENT = ("td", "tdc", "gtd2", "gbrm")
TWO_TIMESCALE = ("tdc", "gtd2")

_REGISTRY: dict[str, type["Learner"]] = {}


@dataclass(frozen=True)
class Hyper:
    """Meta-parameters of one learner run.

    Least-squares learners only read ``lam``; TD and gBRM add the alpha
    schedule; TDC and GTD2 also use the beta schedule.
    """

    lam: float
    a0: float = 0.1
    ac: float = 1e3
    b0: float = 0.1
    bc: float = 1e3
    init: float = 1e3

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")

    @property
    def alpha(self) -> RateSchedule:
        return RateSchedule(self.a0, self.ac, LINEAR)

    @property
    def beta(self) -> RateSchedule:
        return RateSchedule(self.b0, self.bc, TWO_THIRDS)


def register(cls):
    _REGISTRY[cls.name] = cls
    return cls


class Learner:
    """Common interface: ``step(transition) -> theta``, ``run(trajectory)``, ``snapshot()``."""

    name = ""

    def __init__(self, p: int, gamma: float, hyper: Hyper):
        self.p = p
        self.gamma = float(gamma)
        self.hyper = hyper
        self.lam = float(hyper.lam)
        self.theta = np.zeros(p)
        self.rho_prev = 1.0
        self.steps = 0

    def _step(self, t: Transition) -> None:
        raise NotImplementedError

    def _run(self, traj: Trajectory) -> np.ndarray:
        raise NotImplementedError

    def step(self, t: Transition) -> np.ndarray:
        self._step(t)
        self.rho_prev = t.rho
        self.steps += 1
        return self.theta.copy()

    def run(self, traj: Trajectory) -> np.ndarray:
        """Consume every transition of ``traj``; returns theta_1..theta_n stacked."""
        if traj.n_features != self.p:
            raise ValueError(f"trajectory has {traj.n_features} features, learner expects {self.p}")
        if len(traj) == 0:
            return np.empty((0, self.p))
        out = self._run(traj)
        self.rho_prev = float(traj.rhos[-1])
        self.steps += len(traj)
        return out

    @property
    def trace(self) -> TraceState:
        """Live view of the eligibility trace z and rho_{i-1}."""
        return TraceState(self.z, self.rho_prev)

    def snapshot(self) -> np.ndarray:
        return self.theta.copy()

    def _args(self, traj):
        return (
            np.ascontiguousarray(traj.phis, dtype=float),
            np.ascontiguousarray(traj.rewards, dtype=float),
            np.ascontiguousarray(traj.rhos, dtype=float),
        )


def make_learner(name: str, p: int, gamma: float, hyper: Hyper) -> Learner:
    try:
        cls = _REGISTRY[name]
    except KeyError:
        raise ValueError(
            f"unknown algorithm {name!r}; valid names: {', '.join(ALGORITHMS)}"
        ) from None
    return cls(p, gamma, hyper)
