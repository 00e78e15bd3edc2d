"""
Desk-scale denoising UNet.

Input is the channel concatenation [noisy target (4) | condition latents (4)
| mask (1)] over the spatially assembled person/outer/inner strip; output is
the 4-channel noise prediction at the same resolution. Parameter ids are
prefixed `gmf.unet.`; self-attention blocks carry `.attn` in their ids.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from ..error_handling import InputError
from ..numeric import ops
from ..numeric.layers import Conv2d, Linear, Parameter, ParameterStore, ResidualBlock, SelfAttention
from ..numeric.tensor import Tensor, as_tensor

logger = logging.getLogger(__name__)

TARGET_CHANNELS = 4
INPUT_CHANNELS = 9


@dataclass
class UNetConfig:
    channels: Tuple[int, ...] = (16, 32, 32)
    time_dim: int = 32
    attention_levels: Tuple[int, ...] = (2,)

    @classmethod
    def from_run_config(cls, config: dict) -> "UNetConfig":
        model = config["model"]
        return cls(
            channels=tuple(model["unet_channels"]),
            time_dim=model["unet_time_dim"],
            attention_levels=tuple(model["unet_attention_levels"]),
        )


def timestep_embedding(t: Sequence[int], dim: int) -> np.ndarray:
    """Sinusoidal embedding (N, dim): sin half then cos half."""
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    args = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


class DenoiserUNet:
    def __init__(self, store: ParameterStore, config: UNetConfig, rng: np.random.Generator,
                 name: str = "gmf.unet"):
        self.config = config
        self.store = store
        self.name = name
        channels = config.channels
        self.levels = len(channels)
        hidden = 2 * config.time_dim

        self.time_in = Linear(store, f"{name}.time.in", config.time_dim, hidden, rng)
        self.stem = Conv2d(store, f"{name}.stem", INPUT_CHANNELS, channels[0], 3, rng)

        self.down_blocks: List[ResidualBlock] = []
        self.down_time: List[Linear] = []
        self.down_attn = {}
        self.downsamples: List[Conv2d] = []
        for level, width in enumerate(channels):
            prefix = f"{name}.down{level}"
            self.down_blocks.append(ResidualBlock(store, f"{prefix}.res", width, rng))
            self.down_time.append(Linear(store, f"{prefix}.time", hidden, width, rng))
            if level in config.attention_levels:
                self.down_attn[level] = SelfAttention(store, f"{prefix}.attn", width, rng)
            if level < self.levels - 1:
                self.downsamples.append(
                    Conv2d(store, f"{prefix}.downsample", width, channels[level + 1], 3, rng, stride=2, padding=1))

        self.upsamples = {}
        self.merges = {}
        self.up_blocks = {}
        self.up_time = {}
        self.up_attn = {}
        for level in range(self.levels - 2, -1, -1):
            prefix = f"{name}.up{level}"
            width = channels[level]
            self.upsamples[level] = Conv2d(store, f"{prefix}.upsample", channels[level + 1], width, 3, rng)
            self.merges[level] = Conv2d(store, f"{prefix}.merge", 2 * width, width, 3, rng)
            self.up_blocks[level] = ResidualBlock(store, f"{prefix}.res", width, rng)
            self.up_time[level] = Linear(store, f"{prefix}.time", hidden, width, rng)
            if level in config.attention_levels:
                self.up_attn[level] = SelfAttention(store, f"{prefix}.attn", width, rng)

        self.out = Conv2d(store, f"{name}.out", channels[0], TARGET_CHANNELS, 3, rng, zero_init=True)

    @property
    def multiple(self) -> int:
        return 2 ** (self.levels - 1)

    @property
    def params(self) -> List[Parameter]:
        return self.store.subset(f"{self.name}.")

    @property
    def attention_params(self) -> List[Parameter]:
        return [p for p in self.params if ".attn." in p.id]

    def __call__(self, x, t) -> Tensor:
        """
        Predict the noise on the target channels.

        Args:
            x: (N, 9, h, W) denoiser input
            t: N timesteps

        Raises:
            InputError: wrong channel count or spatial size not divisible by 2^(levels-1)
        """
        x = as_tensor(x)
        if x.ndim != 4 or x.shape[1] != INPUT_CHANNELS:
            raise InputError(f"Denoiser input must be (N, {INPUT_CHANNELS}, h, W), got {x.shape}",
                             code="LFT-E803")
        if x.shape[2] % self.multiple or x.shape[3] % self.multiple:
            raise InputError(
                f"Denoiser input {x.shape[2]}x{x.shape[3]} is not a multiple of {self.multiple}",
                code="LFT-E802",
            )
        t = np.broadcast_to(np.asarray(t).reshape(-1), (x.shape[0],))
        temb = ops.silu(self.time_in(Tensor(timestep_embedding(t, self.config.time_dim))))

        h = self.stem(x)
        skips = {}
        for level in range(self.levels):
            h = self.down_blocks[level](h, shift=self.down_time[level](temb))
            if level in self.down_attn:
                h = self.down_attn[level](h)
            skips[level] = h
            if level < self.levels - 1:
                h = self.downsamples[level](h)

        for level in range(self.levels - 2, -1, -1):
            h = self.upsamples[level](ops.upsample_nearest(h, 2))
            h = self.merges[level](ops.concat([h, skips[level]], axis=1))
            h = self.up_blocks[level](h, shift=self.up_time[level](temb))
            if level in self.up_attn:
                h = self.up_attn[level](h)

        return self.out(ops.silu(h))
