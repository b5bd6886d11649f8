"""First-order optimizers operating in place on :class:`~hecka.tensor.Tensor` data."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tensor import Tensor

__all__ = ["OptimizerConfig", "SGD", "AdamW", "make_optimizer"]


@dataclass
class OptimizerConfig:
    name: str = "adamw"
    lr: float = 0.01
    momentum: float = 0.0
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    warmup_steps: int = 0

    def __post_init__(self):
        if self.name not in ("sgd", "adamw"):
            raise ValueError(f"unknown optimizer {self.name!r}")
        if not self.lr > 0:
            raise ValueError("lr must be positive")


class _Optimizer:
    def __init__(self, params: Sequence[Tensor], cfg: OptimizerConfig):
        self.params = list(params)
        self.cfg = cfg
        self.t = 0

    def current_lr(self) -> float:
        w = self.cfg.warmup_steps
        if w and self.t <= w:
            return self.cfg.lr * self.t / w
        return self.cfg.lr

    def step(self, grads: Sequence[np.ndarray] | None = None) -> None:
        """Update parameters from ``grads`` (defaults to each ``param.grad``)."""
        self.t += 1
        if grads is None:
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        lr = self.current_lr()
        for i, (p, g) in enumerate(zip(self.params, grads)):
            self._update(i, p, np.asarray(g), lr)


class SGD(_Optimizer):
    """SGD with heavy-ball momentum and L2 weight decay added to the gradient."""

    def __init__(self, params, cfg: OptimizerConfig):
        super().__init__(params, cfg)
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def _update(self, i, p, g, lr):
        if self.cfg.weight_decay:
            g = g + self.cfg.weight_decay * p.data
        if self.cfg.momentum:
            self.velocity[i] = self.cfg.momentum * self.velocity[i] + g
            g = self.velocity[i]
        p.data = p.data - lr * g


class AdamW(_Optimizer):
    """Adam with decoupled weight decay."""

    def __init__(self, params, cfg: OptimizerConfig):
        super().__init__(params, cfg)
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def _update(self, i, p, g, lr):
        c = self.cfg
        self.m[i] = c.beta1 * self.m[i] + (1 - c.beta1) * g
        self.v[i] = c.beta2 * self.v[i] + (1 - c.beta2) * g * g
        m_hat = self.m[i] / (1 - c.beta1**self.t)
        v_hat = self.v[i] / (1 - c.beta2**self.t)
        data = p.data * (1 - lr * c.weight_decay) if c.weight_decay else p.data
        p.data = data - lr * m_hat / (np.sqrt(v_hat) + c.eps)


def make_optimizer(params, cfg: OptimizerConfig):
    return (SGD if cfg.name == "sgd" else AdamW)(params, cfg)
