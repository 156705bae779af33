"""Training configuration and the Adam optimizer with epoch-based decay.

The effective learning rate at epoch e is lr / (1 + po * e): flat at epoch
0 and monotonically non-increasing afterwards. Decay is applied per epoch,
not per step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ademiner.errors import ConfigurationError, NumericError


@dataclass
class TrainConfig:
    learning_rate: float
    decay_po: float = 0.005
    batch_size: int = 8
    epochs: int = 30
    dropout_rate: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigurationError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.decay_po < 0:
            raise ConfigurationError(f"decay_po must be non-negative, got {self.decay_po}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be positive, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be positive, got {self.epochs}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigurationError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")

    def effective_learning_rate(self, epoch):
        return self.learning_rate / (1.0 + self.decay_po * epoch)


@dataclass
class Adam:
    """Standard Adam over a name -> Tensor parameter map.

    beta1=0.9, beta2=0.999, eps=1e-8 (eps added outside the square root).
    """

    params: dict
    config: TrainConfig
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    _m: dict = field(default_factory=dict, repr=False)
    _v: dict = field(default_factory=dict, repr=False)
    _t: int = 0

    def __post_init__(self):
        for name, p in self.params.items():
            self._m[name] = np.zeros_like(p.data)
            self._v[name] = np.zeros_like(p.data)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def step(self, epoch):
        lr = self.config.effective_learning_rate(epoch)
        self._t += 1
        bias1 = 1.0 - self.beta1 ** self._t
        bias2 = 1.0 - self.beta2 ** self._t
        for name, p in self.params.items():
            grad = p.grad
            if grad is None:
                continue
            if not np.isfinite(grad).all():
                raise NumericError(f"non-finite gradient for parameter {name!r}")
            m = self._m[name]
            v = self._v[name]
            m += (1.0 - self.beta1) * (grad - m)
            v += (1.0 - self.beta2) * (grad * grad - v)
            update = lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            p.data -= update.astype(p.data.dtype, copy=False)
