"""Adaptive-moment optimizer with decoupled weight decay and a linear
learning-rate decay schedule; shared by both trainers."""
from __future__ import annotations

import numpy as np


class TrainingDivergedError(RuntimeError):
    def __init__(self, step: int, what: str = "loss"):
        self.step = step
        super().__init__(f"non-finite {what} at step {step}")


class AdamW:
    """AdamW over a dict of named float64 parameter arrays.

    ``decay`` names the parameters that receive weight decay (weights yes,
    biases no).  The learning rate decays linearly from ``learning_rate``
    to 0 over ``total_steps``.
    """

    def __init__(self, params: dict[str, np.ndarray], learning_rate: float,
                 total_steps: int, weight_decay: float = 0.0,
                 decay: tuple[str, ...] = (), beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.learning_rate = float(learning_rate)
        self.total_steps = max(1, int(total_steps))
        self.weight_decay = float(weight_decay)
        self.decay = set(decay)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self._m = {k: np.zeros_like(v) for k, v in params.items()}
        self._v = {k: np.zeros_like(v) for k, v in params.items()}

    def current_lr(self) -> float:
        frac = 1.0 - self.step_count / self.total_steps
        return self.learning_rate * max(0.0, frac)

    def step(self, grads: dict[str, np.ndarray]) -> None:
        lr = self.current_lr()
        self.step_count += 1
        t = self.step_count
        for name, p in self.params.items():
            g = grads[name]
            if not np.all(np.isfinite(g)):
                raise TrainingDivergedError(t - 1, f"gradient for {name!r}")
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            mhat = m / (1.0 - self.beta1 ** t)
            vhat = v / (1.0 - self.beta2 ** t)
            p -= lr * (mhat / (np.sqrt(vhat) + self.eps))
            if name in self.decay and self.weight_decay:
                p -= lr * self.weight_decay * p
