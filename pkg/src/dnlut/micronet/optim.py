from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class TrainConfig:
    iterations: int = 20_000
    batch_size: int = 12
    lr_max: float = 1e-3
    lr_min: float = 1e-5
    seed: int = 0
    sigma: float = 25.0
    patch_size: int = 48

    def __post_init__(self):
        if self.iterations <= 0:
            raise ValueError("iterations must be positive")
        if not 0 < self.lr_min <= self.lr_max:
            raise ValueError("need 0 < lr_min <= lr_max")
        if self.patch_size < 4:
            raise ValueError("patch_size must be at least 4")
        if self.batch_size <= 0:
            raise ValueError("batch_size must be positive")


def cosine_lr(t: int, cfg: TrainConfig) -> float:
    return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1 + math.cos(math.pi * t / cfg.iterations))


@dataclass
class AdamState:
    m: list
    v: list
    skipped: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


@dataclass
class Adam:
    """Adam with bias correction; a step with any non-finite gradient is skipped."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    state: AdamState | None = field(default=None, repr=False)

    def step(self, params, grads, t: int, lr: float) -> bool:
        if self.state is None:
            self.state = AdamState.zeros_like(params)
        if t < 1:
            raise ValueError("Adam iteration counter starts at 1")
        if not all(np.all(np.isfinite(g)) for g in grads):
            self.state.skipped += 1
            return False
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1 ** t
        c2 = 1 - b2 ** t
        for p, g, m, v in zip(params, grads, self.state.m, self.state.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * np.square(g)
            p -= (lr / c1) * m / (np.sqrt(v / c2) + self.eps)
        return True


def adam_step(params, grads, state: Adam, t: int, schedule: TrainConfig) -> bool:
    """One Adam update at the cosine-annealed rate for iteration ``t``."""
    return state.step(params, grads, t, cosine_lr(t, schedule))
