"""Rectified Adam."""
from __future__ import annotations

import math

import numpy as np

from loci.errors import ConfigError

RHO_THRESHOLD = 4.0


class RAdam:
    """Adam with variance rectification.

    While the approximated length of the simple moving average ``rho_t`` is at
    most 4 the adaptive learning rate is not well defined and the update falls
    back to momentum SGD with bias-corrected first moments.
    """

    def __init__(self, params, lr: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros(p.shape, np.float64) for p in self.params]
        self.v = [np.zeros(p.shape, np.float64) for p in self.params]
        self.rho_inf = 2.0 / (1.0 - self.beta2) - 1.0

    def rho(self, t: int) -> float:
        b2t = self.beta2 ** t
        return self.rho_inf - 2.0 * t * b2t / (1.0 - b2t)

    def rectified(self, t: int) -> bool:
        return self.rho(t) > RHO_THRESHOLD

    def step(self, lr: float | None = None):
        lr = self.lr if lr is None else lr
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        self.t += 1
        t = self.t
        b1, b2 = self.beta1, self.beta2
        rho = self.rho(t)
        if rho > RHO_THRESHOLD:
            r = math.sqrt((rho - 4) * (rho - 2) * self.rho_inf / ((self.rho_inf - 4) * (self.rho_inf - 2) * rho))
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = np.asarray(p.grad, np.float64)
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1 ** t)
            if rho > RHO_THRESHOLD:
                v_hat = np.sqrt(v / (1 - b2 ** t))
                delta = lr * r * m_hat / (v_hat + self.eps)
            else:
                delta = lr * m_hat
            p.data = (p.data - delta).astype(p.data.dtype)

    def zero_grad(self):
        for p in self.params:
            p.grad = None
