"""Stochastic gradient descent with momentum and coupled weight decay.

Update rule (weight decay folds into the gradient, no decoupled variant):

    v <- momentum * v + grad + weight_decay * param
    param <- param - lr * v

Defaults follow the training recipe: lr 1e-4, momentum 0.9, weight decay 1e-4.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import NumericsError, Tensor


@dataclass
class OptimizerState:
    learning_rate: float = 1e-4
    momentum: float = 0.9
    weight_decay: float = 1e-4
    velocity: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")


def sgd_step(params, grads, state):
    """Apply one SGD update in place.

    params: name -> Tensor; grads: name -> ndarray (or Tensor).
    Velocity buffers are keyed by name and created lazily with matching shape.
    """
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        g = g.data if isinstance(g, Tensor) else np.asarray(g, dtype=np.float64)
        if g.shape != p.data.shape:
            raise NumericsError(f"gradient shape mismatch for '{name}': {g.shape} vs {p.data.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericsError(f"non-finite gradient for '{name}'")
        v = state.velocity.get(name)
        if v is None:
            v = np.zeros_like(p.data)
        elif v.shape != p.data.shape:
            raise NumericsError(f"velocity shape mismatch for '{name}'")
        v = state.momentum * v + g + state.weight_decay * p.data
        state.velocity[name] = v
        p.data = p.data - state.learning_rate * v
    return state


class SGD:
    """Convenience wrapper: collect grads from a backward pass and step."""

    def __init__(self, params, lr=1e-4, momentum=0.9, weight_decay=1e-4):
        self.params = dict(params)
        self.state = OptimizerState(lr, momentum, weight_decay)

    def step_from_loss(self, loss):
        """Backward on `loss`, then update every tracked trainable param."""
        loss.backward()
        grads = {}
        for name, p in self.params.items():
            if p.requires_grad and p.grad is not None:
                grads[name] = p.grad
                p.grad = None
        sgd_step({n: self.params[n] for n in grads}, grads, self.state)
        return float(loss.data)
