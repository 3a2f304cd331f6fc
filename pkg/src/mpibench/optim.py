"""First-order optimizers over flat float64 parameter vectors."""

from __future__ import annotations

import numpy as np


class Adam:
    """Adam with bias correction; update x -= lr * mhat / (sqrt(vhat) + eps)."""

    def __init__(self, lr: float, momenta: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        b1, b2 = momenta
        if not (0 <= b1 < 1 and 0 <= b2 < 1):
            raise ValueError(f"momenta must lie in [0, 1), got {momenta}")
        self.lr = lr
        self.b1, self.b2 = b1, b2
        self.eps = eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, x: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(x)
            self.v = np.zeros_like(x)
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        mhat = self.m / (1 - self.b1**self.t)
        vhat = self.v / (1 - self.b2**self.t)
        return x - self.lr * mhat / (np.sqrt(vhat) + self.eps)


class AmsGrad(Adam):
    """AMSGrad variant: the second-moment estimate never decreases."""

    def __init__(self, lr: float, momenta: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8):
        super().__init__(lr, momenta, eps)
        self.vmax = None

    def step(self, x: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(x)
            self.v = np.zeros_like(x)
            self.vmax = np.zeros_like(x)
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        self.vmax = np.maximum(self.vmax, self.v)
        mhat = self.m / (1 - self.b1**self.t)
        vhat = self.vmax / (1 - self.b2**self.t)
        return x - self.lr * mhat / (np.sqrt(vhat) + self.eps)
