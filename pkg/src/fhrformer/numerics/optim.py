"""Adam with decoupled weight decay and a reduce-on-plateau learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..errors import ParameterError, TrainingError
from .tensor import Tensor


@dataclass
class AdamState:
    learning_rate: float = 1e-4
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ParameterError(f"learning rate must be positive, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ParameterError(f"weight decay must be non-negative, got {self.weight_decay}")


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray | None],
    state: AdamState,
) -> None:
    """Update ``params`` in place.

    Weight decay is decoupled: ``theta -= lr * wd * theta`` happens before the
    bias-corrected Adam update.  Parameters with a ``None`` gradient are left
    untouched but still see the step counter advance.
    """
    for name, grad in grads.items():
        if grad is not None and not np.isfinite(grad).all():
            raise TrainingError(f"non-finite gradient for parameter {name!r}")

    state.step_count += 1
    t = state.step_count
    lr = state.learning_rate
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t

    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            continue
        m = state.first_moment.get(name)
        if m is None:
            m = state.first_moment[name] = np.zeros_like(param.data)
            state.second_moment[name] = np.zeros_like(param.data)
        v = state.second_moment[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad

        data = param.data
        if state.weight_decay:
            data -= lr * state.weight_decay * data
        m_hat = m / correction1
        v_hat = v / correction2
        data -= lr * m_hat / (np.sqrt(v_hat) + state.epsilon)


@dataclass
class PlateauScheduler:
    """Multiply the learning rate by ``factor`` after ``patience`` stale epochs."""

    learning_rate: float = 1e-4
    patience: int = 5
    factor: float = 0.1
    best_loss: float = math.inf
    stale_count: int = 0

    def __post_init__(self):
        if not 0.0 < self.factor < 1.0:
            raise ParameterError(f"decay factor must lie in (0, 1), got {self.factor}")
        if self.patience < 1:
            raise ParameterError(f"patience must be >= 1, got {self.patience}")

    def step(self, val_loss: float) -> float:
        if not math.isfinite(val_loss):
            raise ParameterError(f"scheduler received a non-finite loss: {val_loss}")
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.stale_count = 0
        else:
            self.stale_count += 1
            if self.stale_count >= self.patience:
                self.learning_rate *= self.factor
                self.stale_count = 0
        return self.learning_rate


def scheduler_step(sched: PlateauScheduler, val_loss: float) -> float:
    return sched.step(val_loss)
