"""Adam for gradient ascent on the training objective."""

import logging

import numpy as np

from barrierstl.core.exceptions import NonFiniteGradientError

logger = logging.getLogger(__name__)

Params = dict[str, np.ndarray]


class Adam:
    """Adam with bias correction; ``step`` moves parameters *up* the gradient."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: Params = {}
        self.v: Params = {}
        self.t = 0

    def step(self, params: Params, grads: Params) -> None:
        """Update ``params`` in place."""
        for name, g in grads.items():
            if name not in params:
                raise KeyError(f"gradient for unknown parameter {name!r}")
            if g.shape != params[name].shape:
                raise ValueError(f"gradient of {name!r} has shape {g.shape}, parameter has {params[name].shape}")
            if not np.all(np.isfinite(g)):
                bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
                raise NonFiniteGradientError(
                    f"gradient of {name!r} has {bad} non-finite entries at step {self.t + 1}",
                    parameter=name,
                    step=self.t + 1,
                )
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(params[name])
                self.v[name] = np.zeros_like(params[name])
            self.m[name] *= self.beta1
            self.m[name] += (1.0 - self.beta1) * g
            self.v[name] *= self.beta2
            self.v[name] += (1.0 - self.beta2) * (g * g)
            params[name] += (self.lr / bc1) * self.m[name] / (np.sqrt(self.v[name] / bc2) + self.eps)


def adam_update(params: Params, grads: Params, optimizer: Adam) -> Params:
    """One ascent step; returns ``params`` for chaining."""
    optimizer.step(params, grads)
    return params
