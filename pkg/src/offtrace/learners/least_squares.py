"""Recursive least-squares learners: LSTD, LSPE, FPKF and BRM with off-policy traces.

All four start from theta_0 = 0 and an initial inverse matrix ``init * I``, so
their iterates equal the batch solutions regularised by ``I / init``.
"""
from __future__ import annotations

import numpy as np

from . import _kernels as K
from .base import Learner, register


@register
class LSTD(Learner):
    name = "lstd"

    def __init__(self, p, gamma, hyper):
        super().__init__(p, gamma, hyper)
        self.M = hyper.init * np.eye(p)
        self.z = np.zeros(p)

    def _step(self, t):
        K.lstd_step(self.theta, self.M, self.z, t.phi, t.phi_next, t.r, t.rho,
                    self.rho_prev, self.lam, self.gamma)

    def _run(self, traj):
        return K.run_lstd(self.theta, self.M, self.z, *self._args(traj),
                          self.rho_prev, self.lam, self.gamma)


@register
class LSPE(Learner):
    name = "lspe"

    def __init__(self, p, gamma, hyper):
        super().__init__(p, gamma, hyper)
        self.N = hyper.init * np.eye(p)
        self.A = np.zeros((p, p))
        self.b = np.zeros(p)
        self.z = np.zeros(p)

    def _step(self, t):
        K.lspe_step(self.theta, self.N, self.A, self.b, self.z, t.phi, t.phi_next,
                    t.r, t.rho, self.rho_prev, self.lam, self.gamma)

    def _run(self, traj):
        return K.run_lspe(self.theta, self.N, self.A, self.b, self.z, *self._args(traj),
                          self.rho_prev, self.lam, self.gamma)


@register
class FPKF(Learner):
    name = "fpkf"

    def __init__(self, p, gamma, hyper):
        super().__init__(p, gamma, hyper)
        self.N = hyper.init * np.eye(p)
        self.z = np.zeros(p)
        self.Z = np.zeros((p, p))

    def _step(self, t):
        K.fpkf_step(self.theta, self.N, self.z, self.Z, t.phi, t.phi_next, t.r, t.rho,
                    self.rho_prev, self.lam, self.gamma)

    def _run(self, traj):
        return K.run_fpkf(self.theta, self.N, self.z, self.Z, *self._args(traj),
                          self.rho_prev, self.lam, self.gamma)


@register
class BRM(Learner):
    """Least-squares Bellman residual minimisation with a rank-2 Woodbury update per step."""

    name = "brm"

    def __init__(self, p, gamma, hyper):
        super().__init__(p, gamma, hyper)
        self.C = hyper.init * np.eye(p)
        self.D = np.zeros(p)
        self._sc = np.zeros(2)

    @property
    def y(self) -> float:
        return float(self._sc[0])

    @property
    def reward_trace(self) -> float:
        return float(self._sc[1])

    def _step(self, t):
        K.brm_step(self.theta, self.C, self.D, self._sc, t.phi, t.phi_next, t.r, t.rho,
                   self.rho_prev, self.lam, self.gamma)

    def _run(self, traj):
        return K.run_brm(self.theta, self.C, self.D, self._sc, *self._args(traj),
                         self.rho_prev, self.lam, self.gamma)
