"""AdamW with decoupled weight decay."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autograd import Tensor


class OptimizerError(RuntimeError):
    pass


@dataclass
class AdamWState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


class AdamW:
    """Adam moments with bias correction; weight decay applied to the weights directly.

    Per parameter::

        m = b1*m + (1-b1)*g
        v = b2*v + (1-b2)*g**2
        theta -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)
    """

    def __init__(self, params, lr=1e-4, betas=(0.9, 0.98), eps=1e-8, weight_decay=0.01):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        if not all(0.0 <= b < 1.0 for b in betas):
            raise ValueError(f"betas must lie in [0, 1), got {betas}")
        if weight_decay < 0:
            raise ValueError(f"weight decay must be non-negative, got {weight_decay}")
        self.params: dict[str, Tensor] = dict(params.items() if hasattr(params, "items") else params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.state = AdamWState(
            m={k: np.zeros_like(p.data) for k, p in self.params.items()},
            v={k: np.zeros_like(p.data) for k, p in self.params.items()},
        )

    def step(self) -> None:
        for name, p in self.params.items():
            if p.grad is None:
                raise OptimizerError(f"no gradient for {name!r}")
            if not np.all(np.isfinite(p.grad)):
                raise OptimizerError(f"non-finite gradient in {name!r}")

        st = self.state
        st.t += 1
        c1 = 1.0 - self.beta1**st.t
        c2 = 1.0 - self.beta2**st.t
        decay = 1.0 - self.lr * self.weight_decay
        for name, p in self.params.items():
            g = p.grad
            m = st.m[name]
            v = st.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data *= decay
            p.data -= self.lr * update

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None
