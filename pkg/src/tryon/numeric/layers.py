"""
Parameters and network building blocks.

Layers register their weights in a shared ParameterStore under dotted ids
(`gol.outer.stage0.down.weight`), which keeps checkpoints and optimizer
state keyed by stable names.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional

import numpy as np

from ..error_handling import CheckpointError, ConfigurationError
from . import ops
from .tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass
class Parameter:
    id: str
    tensor: Tensor

    @property
    def shape(self):
        return self.tensor.shape


class ParameterStore:
    """Registry of named parameters, iterated in sorted id order."""

    def __init__(self):
        self._params: Dict[str, Parameter] = {}

    def create(self, param_id: str, value: np.ndarray) -> Parameter:
        if param_id in self._params:
            raise ConfigurationError(f"Duplicate parameter id '{param_id}'", code="LFT-E204")
        param = Parameter(param_id, Tensor(value, requires_grad=True))
        self._params[param_id] = param
        return param

    def __getitem__(self, param_id: str) -> Parameter:
        return self._params[param_id]

    def __contains__(self, param_id: str) -> bool:
        return param_id in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[Parameter]:
        for key in sorted(self._params):
            yield self._params[key]

    def ids(self) -> List[str]:
        return sorted(self._params)

    def subset(self, *prefixes: str) -> List[Parameter]:
        """Parameters whose id starts with any of the prefixes."""
        return [p for p in self if any(p.id.startswith(prefix) for prefix in prefixes)]

    def zero_grad(self):
        for param in self._params.values():
            param.tensor.grad = None

    def num_values(self) -> int:
        return int(np.sum([p.tensor.size for p in self._params.values()]))

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {p.id: p.tensor.data.copy() for p in self}

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True):
        """
        Copy arrays into the registered parameters.

        Raises:
            CheckpointError: on shape mismatch, or in strict mode when ids are
                missing from `state` or `state` carries unknown ids.
        """
        missing = sorted(set(self._params) - set(state))
        unexpected = sorted(set(state) - set(self._params))
        if strict and (missing or unexpected):
            raise CheckpointError(
                "Checkpoint does not match the model",
                code="LFT-E604",
                details=f"missing={missing[:10]} unexpected={unexpected[:10]}",
                context={"missing": len(missing), "unexpected": len(unexpected)},
                suggestions=["Load the checkpoint with the config.json written next to it"],
            )
        for param_id, value in state.items():
            if param_id not in self._params:
                logger.warning(f"Ignoring unexpected checkpoint entry {param_id}")
                continue
            param = self._params[param_id]
            if tuple(value.shape) != param.shape:
                raise CheckpointError(
                    f"Shape mismatch for '{param_id}': checkpoint {tuple(value.shape)} vs model {param.shape}",
                    code="LFT-E604",
                )
            param.tensor.data = np.array(value, dtype=np.float64)


def fan_in_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv2d:
    def __init__(self, store: ParameterStore, name: str, in_channels: int, out_channels: int,
                 kernel_size: int, rng: np.random.Generator, stride: int = 1,
                 padding: Optional[int] = None, bias: bool = True, zero_init: bool = False):
        self.name = name
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.stride = stride
        self.padding = kernel_size // 2 if padding is None else padding
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        fan_in = in_channels * kernel_size * kernel_size
        weight = np.zeros(shape) if zero_init else fan_in_uniform(rng, shape, fan_in)
        self.weight = store.create(f"{name}.weight", weight)
        self.bias = store.create(f"{name}.bias", np.zeros(out_channels)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        bias = self.bias.tensor if self.bias is not None else None
        return ops.conv2d(x, self.weight.tensor, bias, stride=self.stride, padding=self.padding)


class Linear:
    def __init__(self, store: ParameterStore, name: str, in_features: int, out_features: int,
                 rng: np.random.Generator, bias: bool = True, zero_init: bool = False):
        self.name = name
        shape = (out_features, in_features)
        weight = np.zeros(shape) if zero_init else fan_in_uniform(rng, shape, in_features)
        self.weight = store.create(f"{name}.weight", weight)
        self.bias = store.create(f"{name}.bias", np.zeros(out_features)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        bias = self.bias.tensor if self.bias is not None else None
        return ops.linear(x, self.weight.tensor, bias)


def residual_block(x: Tensor, conv1: Conv2d, conv2: Conv2d, shift: Optional[Tensor] = None) -> Tensor:
    """
    x + conv2(silu(conv1(x) + shift)).

    `shift` is an optional per-channel (N, C) offset, used by the denoiser to
    inject the timestep embedding.

    Raises:
        ConfigurationError: if the block's channels do not match x.
    """
    if x.ndim != 4 or conv1.in_channels != x.shape[1] or conv2.out_channels != x.shape[1]:
        raise ConfigurationError(
            f"Residual block {conv1.name} expects {conv1.in_channels} channels, got input {x.shape}",
            code="LFT-E204",
        )
    h = conv1(x)
    if shift is not None:
        h = h + ops.reshape(shift, (shift.shape[0], shift.shape[1], 1, 1))
    return x + conv2(ops.silu(h))


class ResidualBlock:
    """conv3x3 -> SiLU -> conv3x3 with a zero-initialised second conv, so the block starts as identity."""

    def __init__(self, store: ParameterStore, name: str, channels: int, rng: np.random.Generator):
        self.conv1 = Conv2d(store, f"{name}.conv1", channels, channels, 3, rng)
        self.conv2 = Conv2d(store, f"{name}.conv2", channels, channels, 3, rng, zero_init=True)

    def __call__(self, x: Tensor, shift: Optional[Tensor] = None) -> Tensor:
        return residual_block(x, self.conv1, self.conv2, shift)


class SelfAttention:
    """Single-head spatial self-attention with a residual, zero-initialised output projection."""

    def __init__(self, store: ParameterStore, name: str, channels: int, rng: np.random.Generator):
        self.name = name
        self.channels = channels
        self.query = Linear(store, f"{name}.query", channels, channels, rng)
        self.key = Linear(store, f"{name}.key", channels, channels, rng)
        self.value = Linear(store, f"{name}.value", channels, channels, rng)
        self.out = Linear(store, f"{name}.out", channels, channels, rng, zero_init=True)

    def __call__(self, x: Tensor) -> Tensor:
        n, c, h, w = x.shape
        tokens = ops.transpose(ops.reshape(x, (n, c, h * w)), (0, 2, 1))
        q, k, v = self.query(tokens), self.key(tokens), self.value(tokens)
        scores = ops.matmul(q, ops.transpose(k, (0, 2, 1))) * (1.0 / np.sqrt(c))
        attended = self.out(ops.matmul(ops.softmax(scores, axis=-1), v))
        return x + ops.reshape(ops.transpose(attended, (0, 2, 1)), (n, c, h, w))
