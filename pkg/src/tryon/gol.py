"""
Garment occlusion learning.

Two role-specific garment encoders (outer, inner) reduce each garment image
by 32x. Their features are concatenated, brought back up to latent
resolution (H/8) by a small mapping network, and projected per position to
a single sigmoid channel: the attention map A. A multiplies the inner
garment latent, suppressing the parts the outer garment hides.

Parameter ids are prefixed `gol.`.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .codec import LatentCodec, LatentImage, average_pool_mask
from .error_handling import InputError
from .numeric import ops
from .numeric.layers import Conv2d, Parameter, ParameterStore, ResidualBlock
from .numeric.tensor import Tensor, as_tensor

logger = logging.getLogger(__name__)

ENCODER_STAGES = 5
REDUCTION = 2 ** ENCODER_STAGES


@dataclass
class GolConfig:
    channels: Tuple[int, ...] = (8, 16, 32, 32, 32)
    mapping_channels: int = 32
    head_bias: bool = True
    squared_loss: bool = False

    @classmethod
    def from_run_config(cls, config: dict) -> "GolConfig":
        model, train = config["model"], config["train"]
        return cls(
            channels=tuple(model["gol_channels"]),
            mapping_channels=model["gol_mapping_channels"],
            head_bias=model["gol_head_bias"],
            squared_loss=train["squared_locc"],
        )


@dataclass
class AttentionMap:
    """Visibility map (1, h, w) or (N, 1, h, w) with values in (0, 1)."""
    data: Tensor

    @property
    def spatial(self) -> Tuple[int, int]:
        return self.data.shape[-2], self.data.shape[-1]

    def numpy(self) -> np.ndarray:
        return self.data.data


class GarmentEncoder:
    """Five stages of {stride-2 conv, residual block, residual block}."""

    def __init__(self, store: ParameterStore, name: str, channels, rng: np.random.Generator):
        if len(channels) != ENCODER_STAGES:
            raise InputError(f"Garment encoder needs {ENCODER_STAGES} stage widths, got {list(channels)}")
        self.name = name
        self.channels = tuple(channels)
        self.stages = []
        in_channels = 3
        for index, width in enumerate(self.channels):
            prefix = f"{name}.stage{index}"
            down = Conv2d(store, f"{prefix}.down", in_channels, width, 3, rng, stride=2, padding=1)
            blocks = [ResidualBlock(store, f"{prefix}.res{k}", width, rng) for k in (1, 2)]
            self.stages.append((down, blocks))
            in_channels = width

    @property
    def out_channels(self) -> int:
        return self.channels[-1]

    def __call__(self, g: Tensor) -> Tensor:
        x = g
        for down, blocks in self.stages:
            x = down(x)
            for block in blocks:
                x = block(x)
        return x


class OcclusionHead:
    """Mapping network U (two x2 upsample + conv3x3 + SiLU stages) and the 1x1 sigmoid head."""

    def __init__(self, store: ParameterStore, name: str, in_channels: int, mapping_channels: int,
                 rng: np.random.Generator, bias: bool = True):
        self.up1 = Conv2d(store, f"{name}.up1", in_channels, mapping_channels, 3, rng)
        self.up2 = Conv2d(store, f"{name}.up2", mapping_channels, mapping_channels, 3, rng)
        self.linear = Conv2d(store, f"{name}.linear", mapping_channels, 1, 1, rng, bias=bias)

    def __call__(self, features: Tensor) -> Tensor:
        x = ops.silu(self.up1(ops.upsample_nearest(features, 2)))
        x = ops.silu(self.up2(ops.upsample_nearest(x, 2)))
        return ops.sigmoid(self.linear(x))


class GarmentOcclusionLearner:
    def __init__(self, store: ParameterStore, config: GolConfig, rng: np.random.Generator):
        self.config = config
        self.store = store
        self.outer_encoder = GarmentEncoder(store, "gol.outer", config.channels, rng)
        self.inner_encoder = GarmentEncoder(store, "gol.inner", config.channels, rng)
        self.head = OcclusionHead(store, "gol.head", 2 * config.channels[-1], config.mapping_channels,
                                  rng, bias=config.head_bias)

    @property
    def params(self) -> List[Parameter]:
        return self.store.subset("gol.")

    def __call__(self, g_i, g_o) -> AttentionMap:
        return attention_map(g_i, g_o, self)


def _check_garment(g: Tensor, what: str):
    if g.ndim not in (3, 4) or g.shape[-3] != 3:
        raise InputError(f"{what} must be (3, H, W) or (N, 3, H, W), got {g.shape}", code="LFT-E803")
    height, width = g.shape[-2:]
    if height % REDUCTION or width % REDUCTION:
        raise InputError(
            f"{what} size {height}x{width} is not a multiple of {REDUCTION}",
            code="LFT-E802",
            suggestions=[f"Use image sizes divisible by {REDUCTION}, e.g. 64x64"],
        )


def encode_garment(encoder: GarmentEncoder, g) -> Tensor:
    """
    Run one garment encoder.

    Returns:
        Tensor: features (C, H/32, W/32), or (N, C, H/32, W/32) for a batch
    """
    g = as_tensor(g)
    _check_garment(g, "Garment image")
    if g.ndim == 3:
        out = encoder(ops.reshape(g, (1,) + g.shape))
        return ops.reshape(out, out.shape[1:])
    return encoder(g)


def attention_map(g_i, g_o, gol: GarmentOcclusionLearner) -> AttentionMap:
    """
    A = sigmoid(Linear(U(E_o(g_o) ++ E_i(g_i)))) at latent resolution.

    Raises:
        InputError: when the two garments differ in shape or size
    """
    g_i, g_o = as_tensor(g_i), as_tensor(g_o)
    if g_i.shape != g_o.shape:
        raise InputError(f"Inner garment {g_i.shape} and outer garment {g_o.shape} differ in shape",
                         code="LFT-E803")
    _check_garment(g_i, "Inner garment")
    squeeze = g_i.ndim == 3
    if squeeze:
        g_i = ops.reshape(g_i, (1,) + g_i.shape)
        g_o = ops.reshape(g_o, (1,) + g_o.shape)
    features = ops.concat([gol.outer_encoder(g_o), gol.inner_encoder(g_i)], axis=1)
    a = gol.head(features)
    return AttentionMap(ops.reshape(a, a.shape[1:]) if squeeze else a)


def refine_inner(a: AttentionMap, z_i: LatentImage) -> LatentImage:
    """z_iv = A * z_i, broadcasting A over the four latent channels."""
    if a.spatial != z_i.spatial or a.data.ndim != z_i.data.ndim:
        raise InputError(
            f"Attention map {a.data.shape} does not match inner latent {z_i.shape}",
            code="LFT-E803",
        )
    return LatentImage(ops.mul(a.data, z_i.data), z_i.source_dims)


def occlusion_loss(z_iv: LatentImage, x_pi, codec: LatentCodec, squared: bool = False,
                   target: Optional[LatentImage] = None) -> Tensor:
    """
    L_OCC = ||encode(x_pi) - z_iv||_2, per sample, averaged over a batch.

    Args:
        z_iv: refined inner latent
        x_pi: visible inner-garment crop of the person image
        codec: encoder used for x_pi
        squared: use the squared norm instead
        target: pre-encoded x_pi, when the caller already has it
    """
    if target is None:
        target = codec.encode(x_pi)
    if target.shape != z_iv.shape:
        raise InputError(f"Encoded crop {target.shape} does not match refined latent {z_iv.shape}",
                         code="LFT-E803")
    diff = ops.sub(z_iv.data, target.data)
    if diff.ndim == 4:
        axes = (1, 2, 3)
        per_sample = ops.sum(ops.mul(diff, diff), axis=axes) if squared else ops.l2_norm(diff, axis=axes)
        return ops.mean(per_sample)
    return ops.sum(ops.mul(diff, diff)) if squared else ops.l2_norm(diff)


def _cells(a: np.ndarray, mask: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    target = average_pool_mask(mask)
    a = a.reshape(target.shape)
    return a, target


def occlusion_map_mae(a, inner_visibility: np.ndarray) -> float:
    """Mean |A - avgpool8(visibility)| over all latent cells."""
    a, target = _cells(a.numpy() if isinstance(a, AttentionMap) else a, inner_visibility)
    return float(np.mean(np.abs(a - target)))


def occlusion_contrast(a, inner_visibility: np.ndarray, inner_layer: np.ndarray) -> float:
    """
    Mean A over visible inner cells minus mean A over occluded inner cells.

    A cell counts as visible (occluded) when at least half its pixels are
    visible (occluded) inner-garment pixels. NaN when either set is empty.
    """
    a, visible = _cells(a.numpy() if isinstance(a, AttentionMap) else a, inner_visibility)
    occluded_mask = np.logical_and(np.asarray(inner_layer) > 0, np.asarray(inner_visibility) <= 0)
    occluded = average_pool_mask(occluded_mask)
    visible_cells, occluded_cells = visible >= 0.5, occluded >= 0.5
    if not visible_cells.any() or not occluded_cells.any():
        return float("nan")
    return float(a[visible_cells].mean() - a[occluded_cells].mean())
