"""RMSprop over a model's trainable parameters."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ShapeError
from .model import Model

DEFAULT_BETA = 0.9
DEFAULT_EPSILON = 1e-8


@dataclass
class RMSpropState:
    """Running average of squared gradients, one tensor per trainable parameter.

    ``epsilon`` is added to the average before the square root so the first
    step from a zero average is finite.
    """

    avg_sq_grad: dict[str, np.ndarray] = field(default_factory=dict)
    lr: float = 1e-3
    beta: float = DEFAULT_BETA
    epsilon: float = DEFAULT_EPSILON
    step_count: int = 0

    def __post_init__(self):
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must be in [0, 1), got {self.beta}")
        if self.lr < 0:
            raise ValueError(f"lr must be non-negative, got {self.lr}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


def rmsprop_init(model: Model, lr: float = 1e-3, beta: float = DEFAULT_BETA,
                 epsilon: float = DEFAULT_EPSILON) -> RMSpropState:
    avg = {name: np.zeros_like(value) for name, value in model.get_weights(trainable_only=True).items()}
    return RMSpropState(avg, lr=lr, beta=beta, epsilon=epsilon)


def rmsprop_update(param, grad, avg_sq, lr, beta, epsilon):
    """Update ``param`` and ``avg_sq`` in place for one tensor."""
    avg_sq *= beta
    avg_sq += (1.0 - beta) * np.square(grad)
    param -= lr * grad / np.sqrt(avg_sq + epsilon)


def rmsprop_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: RMSpropState) -> None:
    """Apply one step to every parameter that has state; others are left alone.

    ``params`` maps names to the live arrays (mutated in place). Parameters
    with no gradient this step still see their average decay.
    """
    for name, avg in state.avg_sq_grad.items():
        param = params[name]
        grad = grads.get(name)
        if grad is None:
            avg *= state.beta
            continue
        if grad.shape != param.shape or avg.shape != param.shape:
            raise ShapeError(f"{name}: grad {grad.shape}, param {param.shape}, state {avg.shape}")
        rmsprop_update(param, grad.astype(param.dtype, copy=False), avg, state.lr, state.beta, state.epsilon)
    state.step_count += 1


class RMSprop:
    """Optimizer bound to a model's trainable parameters."""

    def __init__(self, model: Model, lr: float = 1e-3, beta: float = DEFAULT_BETA, epsilon: float = DEFAULT_EPSILON):
        self.model = model
        self.state = rmsprop_init(model, lr=lr, beta=beta, epsilon=epsilon)

    def step(self, grads: dict[str, np.ndarray]) -> None:
        rmsprop_step(self.model.get_weights(trainable_only=True), grads, self.state)
