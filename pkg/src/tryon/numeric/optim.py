"""
AdamW optimizer with decoupled weight decay.

The update order follows the common reference implementation: decay the
weights by lr * weight_decay first, then apply the bias-corrected adaptive
moment step. Parameters whose gradient is identically zero are skipped, so
a step never moves a parameter the loss did not touch. Bias correction
always uses the global step count, including for a parameter whose first
nonzero gradient arrives late.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List

import numpy as np

from ..error_handling import UsageError
from .layers import Parameter

logger = logging.getLogger(__name__)


@dataclass
class OptimizerState:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-2
    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)


def optimizer_step(state: OptimizerState, params: Iterable[Parameter]):
    """
    Apply one AdamW update and zero the gradients afterwards.

    Args:
        state: moment accumulators and hyperparameters, updated in place
        params: parameters with populated gradients

    Raises:
        UsageError: when a parameter has no gradient at all
    """
    params = list(params)
    for param in params:
        if param.tensor.grad is None:
            raise UsageError(
                f"Parameter '{param.id}' has no gradient; run backward() before optimizer_step()",
                code="LFT-E703",
            )

    state.step += 1
    for param in params:
        grad = param.tensor.grad
        if not np.any(grad):
            param.tensor.grad = np.zeros_like(param.tensor.data)
            continue

        m = state.first_moment.get(param.id)
        v = state.second_moment.get(param.id)
        if m is None:
            m = np.zeros_like(param.tensor.data)
            v = np.zeros_like(param.tensor.data)

        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        m_hat = m / (1.0 - state.beta1 ** state.step)
        v_hat = v / (1.0 - state.beta2 ** state.step)

        data = param.tensor.data
        data *= 1.0 - state.learning_rate * state.weight_decay
        data -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)

        state.first_moment[param.id] = m
        state.second_moment[param.id] = v
        param.tensor.grad = np.zeros_like(data)


class AdamW:
    """Binds an OptimizerState to a fixed list of parameters."""

    def __init__(self, params: Iterable[Parameter], learning_rate: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 1e-2):
        self.params: List[Parameter] = list(params)
        self.state = OptimizerState(learning_rate=learning_rate, beta1=beta1, beta2=beta2,
                                    eps=eps, weight_decay=weight_decay)
        logger.debug(f"AdamW over {len(self.params)} parameters, lr={learning_rate}")

    def zero_grad(self):
        for param in self.params:
            param.tensor.grad = None

    def step(self):
        for param in self.params:
            if param.tensor.grad is None:
                param.tensor.grad = np.zeros_like(param.tensor.data)
        optimizer_step(self.state, self.params)
