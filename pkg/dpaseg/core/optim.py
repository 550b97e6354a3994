"""
Adam optimiser and cosine-annealed learning rate
"""

import math
from typing import Dict, List, Sequence

import numpy as np

from ..errors import ContractError
from .tensor import Parameter


def cosine_lr(step: int, total: int, lr_max: float = 1e-4, lr_min: float = 1e-5) -> float:
    """Cosine decay from lr_max at step 0 to lr_min at step `total`"""
    if total <= 0:
        return lr_max
    progress = min(max(step, 0), total) / total
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * progress))


class Adam:
    """Adam with bias correction; state is keyed by parameter position"""

    def __init__(
        self,
        params: Sequence[Parameter],
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params: List[Parameter] = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: Dict[int, np.ndarray] = {i: np.zeros_like(p.data) for i, p in enumerate(self.params)}
        self.v: Dict[int, np.ndarray] = {i: np.zeros_like(p.data) for i, p in enumerate(self.params)}

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self, lr: float = None) -> None:
        lr = self.lr if lr is None else lr
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / bc1
            v_hat = self.v[i] / bc2
            p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)
            if not np.all(np.isfinite(p.data)):
                raise ContractError(f"parameter {p.name or i} became non-finite at step {self.t}")
