"""First-order optimisers updating named tensors in place, plus the cosine schedule."""

import math
from typing import Dict, Optional

import numpy as np

from utils.diffcore import Tensor


def cosine_lr(base_lr: float, step: int, total_steps: int) -> float:
    """Cosine decay from base_lr at step 0 towards 0 at total_steps."""
    if total_steps <= 0:
        return base_lr
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * min(step, total_steps) / total_steps))


def named_grads(params: Dict[str, Tensor], grads: Dict[Tensor, Tensor]) -> Dict[str, np.ndarray]:
    """Re-key a backward() result by parameter name."""
    return {name: grads[tensor].data for name, tensor in params.items() if tensor in grads}


class SGD:
    def __init__(self, params: Dict[str, Tensor], lr: float, momentum: float = 0.9, weight_decay: float = 0.0):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self._velocity = {name: np.zeros_like(t.data) for name, t in params.items()}

    def step(self, grads: Dict[str, np.ndarray], lr: Optional[float] = None) -> None:
        lr = self.lr if lr is None else lr
        for name, grad in grads.items():
            tensor = self.params[name]
            if self.weight_decay:
                grad = grad + self.weight_decay * tensor.data
            velocity = self.momentum * self._velocity[name] + grad
            self._velocity[name] = velocity.astype(tensor.data.dtype)
            tensor.data = (tensor.data - lr * velocity).astype(tensor.data.dtype)


class Adam:
    def __init__(self, params: Dict[str, Tensor], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self._m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self._v = {name: np.zeros_like(t.data) for name, t in params.items()}

    def _decay(self, tensor: Tensor, lr: float) -> None:
        pass

    def step(self, grads: Dict[str, np.ndarray], lr: Optional[float] = None) -> None:
        lr = self.lr if lr is None else lr
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for name, grad in grads.items():
            tensor = self.params[name]
            dtype = tensor.data.dtype
            self._m[name] = (self.beta1 * self._m[name] + (1 - self.beta1) * grad).astype(dtype)
            self._v[name] = (self.beta2 * self._v[name] + (1 - self.beta2) * grad * grad).astype(dtype)
            m_hat = self._m[name] / correction1
            v_hat = self._v[name] / correction2
            self._decay(tensor, lr)
            tensor.data = (tensor.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(dtype)


class AdamW(Adam):
    """Adam with decoupled weight decay."""

    def __init__(self, params: Dict[str, Tensor], lr: float, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.01):
        super().__init__(params, lr, betas, eps)
        self.weight_decay = weight_decay

    def _decay(self, tensor: Tensor, lr: float) -> None:
        if self.weight_decay:
            tensor.data = (tensor.data * (1.0 - lr * self.weight_decay)).astype(tensor.data.dtype)
