"""Inner optimizer: AdamW with decoupled weight decay, gradient-norm clipping,
and a linear-warmup + cosine-decay learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np


@dataclass
class AdamWState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-8
    weight_decay: float = 0.1

    @classmethod
    def zeros(cls, n_params, dtype=np.float32, **hparams) -> "AdamWState":
        return cls(np.zeros(n_params, dtype=dtype), np.zeros(n_params, dtype=dtype), **hparams)


def adamw_step(params: np.ndarray, grad: np.ndarray, state: AdamWState, lr: float):
    """One AdamW update. Returns (new_params, new_state); inputs untouched."""
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise ValueError("params/grad/state length mismatch")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    mhat = m / (1.0 - state.beta1**t)
    vhat = v / (1.0 - state.beta2**t)
    new_params = params - lr * (mhat / (np.sqrt(vhat) + state.eps) + state.weight_decay * params)
    return new_params.astype(params.dtype), replace(state, m=m, v=v, step=t)


def clip_grad_norm(grad: np.ndarray, max_norm: float) -> np.ndarray:
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    norm = float(np.sqrt(np.dot(grad, grad)))
    if norm <= max_norm:
        return grad
    return grad * grad.dtype.type(max_norm / norm)


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float
    warmup_steps: int
    total_steps: int
    min_lr: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.min_lr is None:
            object.__setattr__(self, "min_lr", 0.1 * self.base_lr)
        if self.warmup_steps < 0 or self.total_steps <= 0:
            raise ValueError("bad schedule lengths")
        if self.warmup_steps >= self.total_steps:
            raise ValueError("warmup must end before total_steps")


def lr_at(schedule: LrSchedule, step: int) -> float:
    """Linear warmup to base_lr, then cosine decay to min_lr at total_steps."""
    if not 0 <= step <= schedule.total_steps:
        raise ValueError(f"step {step} outside [0, {schedule.total_steps}]")
    if schedule.warmup_steps > 0 and step <= schedule.warmup_steps:
        return schedule.base_lr * step / schedule.warmup_steps
    progress = (step - schedule.warmup_steps) / (schedule.total_steps - schedule.warmup_steps)
    return schedule.min_lr + 0.5 * (schedule.base_lr - schedule.min_lr) * (
        1.0 + math.cos(math.pi * progress)
    )
