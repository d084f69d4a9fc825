"""
Adam optimizer over named numpy parameter arrays.
"""

import logging

import numpy as np

from ..utils.errors import DomainError

logger = logging.getLogger(__name__)


class Adam:
    """Adam with bias correction and a constant learning rate.

    Parameters without a gradient in a step are left untouched, including
    their moment estimates, so a frozen parameter stays bit-exact.
    """

    def __init__(self, learning_rate=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        if not learning_rate > 0.0:
            raise DomainError(f"learning rate must be positive, got {learning_rate}")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise DomainError("Adam betas must lie in [0, 1)")
        self.learning_rate = float(learning_rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.m = {}
        self.v = {}
        self.t = {}

    def step(self, params, grads):
        """Update params[name] in place for every name in grads."""
        for name, grad in grads.items():
            grad = np.asarray(grad, dtype=np.float64)
            if name not in self.m:
                self.m[name] = np.zeros_like(grad)
                self.v[name] = np.zeros_like(grad)
                self.t[name] = 0
            self.t[name] += 1
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * grad
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * grad ** 2
            m_hat = self.m[name] / (1.0 - self.beta1 ** self.t[name])
            v_hat = self.v[name] / (1.0 - self.beta2 ** self.t[name])
            params[name] = params[name] - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
        return params
