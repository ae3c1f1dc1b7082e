"""AdamW and the learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PEAK_LR = 1e-4


@dataclass
class AdamW:
    """Decoupled weight decay Adam.

    Weight decay applies only to tensors with two or more dims (matrices and
    the embedding table); gains and biases are left alone.
    """

    params: list
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    clip_norm: float | None = None
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        if not self.m:
            self.m = [np.zeros_like(p.data) for p in self.params]
            self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self, lr: float) -> float:
        """Apply one update; returns the pre-clipping global gradient norm."""
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        for p, g in zip(self.params, grads):
            if g.shape != p.data.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.data.shape}")
        norm = math.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads))
        if self.clip_norm is not None and norm > self.clip_norm:
            scale = self.clip_norm / (norm + 1e-6)
            grads = [g * scale for g in grads]
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if self.weight_decay and p.data.ndim >= 2:
                p.data *= 1.0 - lr * self.weight_decay
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            mhat = m / bc1
            vhat = v / bc2
            p.data -= (lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.data.dtype)
        return norm


def adamw_step(params, grads, state: AdamW, lr: float) -> None:
    """Functional form: install ``grads`` on ``params`` and update in place."""
    if len(params) != len(grads):
        raise ValueError("params and grads differ in count")
    for p, g in zip(params, grads):
        if np.shape(g) != p.data.shape:
            raise ValueError(f"gradient shape {np.shape(g)} != parameter shape {p.data.shape}")
        p.grad = np.asarray(g, dtype=p.data.dtype)
    state.step(lr)


def cosine_lr(step: int, decay_start: int, total_steps: int, peak: float = PEAK_LR) -> float:
    """Hold ``peak`` until ``decay_start``, then cosine-decay to 0 at ``total_steps``."""
    if step < decay_start:
        return peak
    if total_steps <= decay_start or step >= total_steps:
        return 0.0
    frac = (step - decay_start) / (total_steps - decay_start)
    return peak * 0.5 * (1.0 + math.cos(math.pi * frac))
