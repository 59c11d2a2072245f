"""Adam optimizer with bias correction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor

__all__ = ["Adam"]


@dataclass
class Adam:
    """Standard Adam; updates parameter tensors in place.

    Deterministic given (state, gradients): the same gradient sequence
    always produces the same parameter trajectory.
    """

    learning_rate: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    state: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    def apply(self, params: dict[str, Tensor], grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        t = self.step_count
        for name in params:
            g = np.asarray(grads.get(name, 0.0), dtype=np.float64)
            if g.shape != params[name].data.shape:
                g = np.broadcast_to(g, params[name].data.shape)
            m, v = self.state.get(name, (np.zeros_like(params[name].data),) * 2)
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * g * g
            self.state[name] = (m, v)
            m_hat = m / (1.0 - self.beta1**t)
            v_hat = v / (1.0 - self.beta2**t)
            params[name].data -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
