"""Plain-numpy optimizers for the parameter dataclass."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .model import PARAM_NAMES, ModelParams, zero_grads


class Adam:
    def __init__(self, params: ModelParams, lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = zero_grads(params)
        self.v = zero_grads(params)

    def step(self, params: ModelParams, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name in PARAM_NAMES:
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            getattr(params, name)[...] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class SGD:
    def __init__(self, params: ModelParams, lr: float):
        self.lr = lr

    def step(self, params: ModelParams, grads: dict[str, np.ndarray]) -> None:
        for name in PARAM_NAMES:
            getattr(params, name)[...] -= self.lr * grads[name]


def make_optimizer(kind: str, params: ModelParams, lr: float):
    if kind == "adam":
        return Adam(params, lr)
    if kind == "sgd":
        return SGD(params, lr)
    raise ConfigError(f"unknown optimizer '{kind}'")
