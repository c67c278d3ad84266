"""Optimizers and learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .tensor import NumericError, Tensor


@dataclass
class WarmupSchedule:
    """Linear warmup to ``base_lr`` over the first ``warmup_fraction`` of training, then flat."""

    base_lr: float
    warmup_fraction: float
    total_steps: int

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        if not 0.0 <= self.warmup_fraction <= 1.0:
            raise ValueError("warmup_fraction must lie in [0, 1]")
        if self.total_steps <= 0:
            raise ValueError("total_steps must be positive")

    def lr(self, step: int) -> float:
        ramp = self.warmup_fraction * self.total_steps
        if ramp <= 0:
            return self.base_lr
        return self.base_lr * min(1.0, step / ramp)


class Optimizer:
    """Shared bookkeeping: weight decay folded into gradients, NaN refusal, step count."""

    def __init__(self, lr: float, weight_decay: float = 0.0, schedule: WarmupSchedule | None = None):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        if weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        self.learning_rate = lr
        self.weight_decay = weight_decay
        self.schedule = schedule
        self.step_count = 0

    def current_lr(self) -> float:
        if self.schedule is None:
            return self.learning_rate
        return self.schedule.lr(self.step_count + 1)

    def step(self, params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray] | None = None) -> None:
        """Update ``params`` in place from ``grads`` (default: each param's ``.grad``).

        Parameters without a gradient are skipped. A non-finite gradient
        aborts the whole step before anything is modified.
        """
        if grads is None:
            grads = {name: p.grad for name, p in params.items() if p.grad is not None}
        for name, g in grads.items():
            if g.shape != params[name].shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {params[name].shape} for {name}")
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for parameter {name}")
        lr = self.current_lr()
        self.step_count += 1
        for name, g in grads.items():
            p = params[name]
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            self._update(name, p, g, lr)

    def _update(self, name: str, p: Tensor, g: np.ndarray, lr: float) -> None:
        raise NotImplementedError


class SGD(Optimizer):
    def _update(self, name, p, g, lr):
        p.data = p.data - lr * g


class Adam(Optimizer):
    def __init__(self, lr: float, weight_decay: float = 0.0, schedule: WarmupSchedule | None = None,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        super().__init__(lr, weight_decay, schedule)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t: dict[str, int] = {}

    def _update(self, name, p, g, lr):
        m = self.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            self.v[name] = np.zeros_like(p.data)
            self.t[name] = 0
        t = self.t[name] + 1
        self.t[name] = t
        m = self.beta1 * m + (1.0 - self.beta1) * g
        v = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
        self.m[name], self.v[name] = m, v
        m_hat = m / (1.0 - self.beta1 ** t)
        v_hat = v / (1.0 - self.beta2 ** t)
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)


def zero_grads(params: Mapping[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None
