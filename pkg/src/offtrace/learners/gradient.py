"""O(p) stochastic-gradient learners: TD, TDC (GQ), GTD2 and gBRM with off-policy traces."""
from __future__ import annotations

import numpy as np

from . import _kernels as K
from .base import Learner, register


class _Gradient(Learner):
    def __init__(self, p, gamma, hyper):
        super().__init__(p, gamma, hyper)
        self.z = np.zeros(p)
        self.alpha = hyper.alpha

    def _alpha_args(self):
        s = self.alpha
        return self.steps, s.a0, s.ac, s.power

    def _a(self):
        return self.alpha(self.steps + 1)


@register
class TD(_Gradient):
    name = "td"

    def _step(self, t):
        K.td_step(self.theta, self.z, t.phi, t.phi_next, t.r, t.rho, self.rho_prev,
                  self.lam, self.gamma, self._a())

    def _run(self, traj):
        return K.run_td(self.theta, self.z, *self._args(traj), self.rho_prev, self.lam,
                        self.gamma, *self._alpha_args())


class _TwoTimescale(_Gradient):
    def __init__(self, p, gamma, hyper):
        super().__init__(p, gamma, hyper)
        self.w = np.zeros(p)
        self.beta = hyper.beta

    def _rates(self):
        b = self.beta
        return (*self._alpha_args(), b.a0, b.ac, b.power)

    def _b(self):
        return self.beta(self.steps + 1)


@register
class TDC(_TwoTimescale):
    """Off-policy TDC(lambda), a.k.a. GQ(lambda). The w update uses the fresh theta_i."""

    name = "tdc"

    def _step(self, t):
        K.tdc_step(self.theta, self.w, self.z, t.phi, t.phi_next, t.r, t.rho, self.rho_prev,
                   self.lam, self.gamma, self._a(), self._b())

    def _run(self, traj):
        return K.run_tdc(self.theta, self.w, self.z, *self._args(traj), self.rho_prev,
                         self.lam, self.gamma, *self._rates())


@register
class GTD2(_TwoTimescale):
    name = "gtd2"

    def _step(self, t):
        K.gtd2_step(self.theta, self.w, self.z, t.phi, t.phi_next, t.r, t.rho, self.rho_prev,
                    self.lam, self.gamma, self._a(), self._b())

    def _run(self, traj):
        return K.run_gtd2(self.theta, self.w, self.z, *self._args(traj), self.rho_prev,
                          self.lam, self.gamma, *self._rates())


@register
class GBRM(_Gradient):
    """Residual-gradient learner; traces are updated in the order z, c, zeta, d."""

    name = "gbrm"

    def __init__(self, p, gamma, hyper):
        super().__init__(p, gamma, hyper)
        self.zeta = np.zeros(p)
        self._sc = np.zeros(2)

    @property
    def c(self) -> float:
        return float(self._sc[0])

    @property
    def d(self) -> float:
        return float(self._sc[1])

    def _step(self, t):
        K.gbrm_step(self.theta, self.z, self.zeta, self._sc, t.phi, t.phi_next, t.r, t.rho,
                    self.rho_prev, self.lam, self.gamma, self._a())

    def _run(self, traj):
        return K.run_gbrm(self.theta, self.z, self.zeta, self._sc, *self._args(traj),
                          self.rho_prev, self.lam, self.gamma, *self._alpha_args())
