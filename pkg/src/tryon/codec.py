"""
Latent codec.

Images (3, H, W) map to latents (4, H/8, W/8): space-to-depth by 8 gives a
192-vector per block (index c*64 + dy*8 + dx), which is projected to 4
values. The fixed projection is orthonormal: three block-mean colour
columns and one vertical ramp shared by all channels. In learned mode the
linear matrices start from that projection, a conv autoencoder runs
alongside them, and both are fitted by reconstruction error.

Masks never go through the codec; see `downsample_mask` and
`average_pool_mask`.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from .error_handling import InputError, UsageError
from .numeric import ops
from .numeric.layers import Conv2d, ParameterStore
from .numeric.optim import AdamW
from .numeric.tensor import Tensor, as_tensor

logger = logging.getLogger(__name__)

BLOCK = 8
LATENT_CHANNELS = 4
PATCH_DIM = 3 * BLOCK * BLOCK
STAGES = 3


def fixed_projection() -> np.ndarray:
    """The 192x4 orthonormal projection used in fixed mode."""
    projection = np.zeros((PATCH_DIM, LATENT_CHANNELS))
    block = BLOCK * BLOCK
    for channel in range(3):
        projection[channel * block:(channel + 1) * block, channel] = 1.0 / BLOCK
    ramp = np.repeat(np.arange(BLOCK) - (BLOCK - 1) / 2.0, BLOCK)
    column = np.tile(ramp, 3)
    projection[:, 3] = column / np.linalg.norm(column)
    return projection


@dataclass
class LatentImage:
    """Latent tensor (4, h, w) or (N, 4, h, w) and the pixel size it came from."""
    data: Tensor
    source_dims: Tuple[int, int]

    @property
    def shape(self):
        return self.data.shape

    @property
    def spatial(self) -> Tuple[int, int]:
        return self.data.shape[-2], self.data.shape[-1]


def _as_batch(x: Tensor, channels: int, what: str) -> Tuple[Tensor, bool]:
    if x.ndim == 3:
        x, squeeze = ops.reshape(x, (1,) + x.shape), True
    elif x.ndim == 4:
        squeeze = False
    else:
        raise InputError(f"{what} must be ({channels}, H, W) or (N, {channels}, H, W), got {x.shape}",
                         code="LFT-E803")
    if x.shape[1] != channels:
        raise InputError(f"{what} must have {channels} channels, got shape {x.shape}", code="LFT-E803")
    return x, squeeze


def _unbatch(x: Tensor, squeeze: bool) -> Tensor:
    return ops.reshape(x, x.shape[1:]) if squeeze else x


def space_to_depth(image: Tensor) -> Tensor:
    """(N, 3, H, W) -> (N, H/8, W/8, 192)."""
    n, c, height, width = image.shape
    h, w = height // BLOCK, width // BLOCK
    blocks = ops.reshape(image, (n, c, h, BLOCK, w, BLOCK))
    return ops.reshape(ops.transpose(blocks, (0, 2, 4, 1, 3, 5)), (n, h, w, c * BLOCK * BLOCK))


def depth_to_space(patches: Tensor) -> Tensor:
    """(N, h, w, 192) -> (N, 3, 8h, 8w)."""
    n, h, w, _ = patches.shape
    blocks = ops.reshape(patches, (n, h, w, 3, BLOCK, BLOCK))
    return ops.reshape(ops.transpose(blocks, (0, 3, 1, 4, 2, 5)), (n, 3, h * BLOCK, w * BLOCK))


class LatentCodec:
    """
    Encoder/decoder pair registered under the `codec.` prefix.

    Both modes store the linear matrices in the parameter store so the
    checkpoint carries them. Learned mode adds a small conv autoencoder:
    three stride-2 convs (3 -> width -> width -> 4) added to the linear
    encoding, and three nearest-upsample stages back to 3 channels added to
    the linear decoding. The last conv of each branch starts at zero, so a
    fresh learned codec encodes exactly like the fixed one.
    """

    def __init__(self, store: ParameterStore, mode: str = "fixed", rng: Optional[np.random.Generator] = None,
                 width: int = 8):
        if mode not in ("fixed", "learned"):
            raise UsageError(f"Unknown codec mode '{mode}'")
        self.mode = mode
        projection = fixed_projection()
        self.encoder = store.create("codec.encoder", projection.copy())
        self.decoder = store.create("codec.decoder", projection.copy())
        self.conv_encoder: List[Conv2d] = []
        self.conv_decoder: List[Conv2d] = []
        if mode == "learned":
            rng = rng if rng is not None else np.random.default_rng(0)
            plan = [3, width, width, LATENT_CHANNELS]
            self.conv_encoder = [
                Conv2d(store, f"codec.conv_encoder.{k}", plan[k], plan[k + 1], 3, rng, stride=2,
                       zero_init=k == STAGES - 1)
                for k in range(STAGES)
            ]
            plan = [LATENT_CHANNELS, width, width, width, 3]
            self.conv_decoder = [
                Conv2d(store, f"codec.conv_decoder.{k}", plan[k], plan[k + 1], 3, rng, zero_init=k == STAGES)
                for k in range(STAGES + 1)
            ]

    @property
    def params(self):
        convs = [p for conv in self.conv_encoder + self.conv_decoder
                 for p in ([conv.weight] + ([conv.bias] if conv.bias is not None else []))]
        return [self.decoder, self.encoder] + convs

    def gram(self) -> np.ndarray:
        e = self.encoder.tensor.data
        return e.T @ e

    def _encode_branch(self, image: Tensor) -> Tensor:
        x = image
        for k, conv in enumerate(self.conv_encoder):
            x = conv(x)
            if k < len(self.conv_encoder) - 1:
                x = ops.silu(x)
        return x

    def _decode_branch(self, latent: Tensor) -> Tensor:
        x = ops.silu(self.conv_decoder[0](latent))
        for conv in self.conv_decoder[1:-1]:
            x = ops.silu(conv(ops.upsample_nearest(x, 2)))
        return self.conv_decoder[-1](ops.upsample_nearest(x, 2))

    def encode(self, image) -> LatentImage:
        """
        Encode (3, H, W) or (N, 3, H, W) pixels into a LatentImage.

        Raises:
            InputError: if H or W is not a multiple of 8
        """
        image, squeeze = _as_batch(as_tensor(image), 3, "Image")
        height, width = image.shape[2], image.shape[3]
        if height % BLOCK or width % BLOCK:
            raise InputError(
                f"Image size {height}x{width} is not a multiple of {BLOCK}",
                code="LFT-E802",
                suggestions=[f"Resize or crop images to multiples of {BLOCK} pixels"],
            )
        latent = ops.matmul(space_to_depth(image), self.encoder.tensor)
        latent = ops.transpose(latent, (0, 3, 1, 2))
        if self.conv_encoder:
            latent = ops.add(latent, self._encode_branch(image))
        return LatentImage(_unbatch(latent, squeeze), (height, width))

    def decode(self, latent: LatentImage, clamp: bool = True) -> Tensor:
        """Decode back to pixels; `clamp` limits the output to [0, 1]."""
        data, squeeze = _as_batch(latent.data, LATENT_CHANNELS, "Latent")
        patches = ops.matmul(ops.transpose(data, (0, 2, 3, 1)),
                             ops.transpose(self.decoder.tensor, (1, 0)))
        image = depth_to_space(patches)
        if tuple(image.shape[2:]) != tuple(latent.source_dims):
            raise InputError(
                f"Latent {data.shape} decodes to {image.shape[2:]}, expected {latent.source_dims}",
                code="LFT-E803",
            )
        if self.conv_decoder:
            image = ops.add(image, self._decode_branch(data))
        if clamp:
            image = ops.clip(image, 0.0, 1.0)
        return _unbatch(image, squeeze)

    def reconstruction_loss(self, images: np.ndarray) -> Tensor:
        image = Tensor(images)
        return ops.mse(self.decode(self.encode(image), clamp=False), image)

    def fit(self, images: np.ndarray, steps: int, rng: np.random.Generator, batch_size: int = 8,
            learning_rate: float = 1e-3) -> List[float]:
        """
        Fit the learned encoder and decoder by reconstruction MSE.

        Returns:
            List[float]: the per-step losses
        """
        if self.mode != "learned":
            raise UsageError("Only a learned codec can be fitted", code="LFT-E700")
        optimizer = AdamW(self.params, learning_rate=learning_rate, weight_decay=0.0)
        losses = []
        for _ in tqdm(range(steps), desc="codec", unit="step", leave=False):
            index = rng.choice(len(images), size=min(batch_size, len(images)), replace=False)
            optimizer.zero_grad()
            loss = self.reconstruction_loss(images[index])
            loss.backward()
            optimizer.step()
            losses.append(loss.item())
        if losses:
            logger.info(f"Codec fit: reconstruction MSE {losses[0]:.5f} -> {losses[-1]:.5f}")
        return losses


def _pool(mask: np.ndarray, reducer) -> np.ndarray:
    mask = np.asarray(mask, dtype=np.float64)
    height, width = mask.shape[-2:]
    if height % BLOCK or width % BLOCK:
        raise InputError(f"Mask size {height}x{width} is not a multiple of {BLOCK}", code="LFT-E802")
    blocks = mask.reshape(mask.shape[:-2] + (height // BLOCK, BLOCK, width // BLOCK, BLOCK))
    return reducer(blocks, axis=(-3, -1))


def downsample_mask(mask: np.ndarray) -> np.ndarray:
    """8x8 max-pool: a latent cell is masked if any of its pixels is."""
    return _pool(np.asarray(mask) > 0, np.max)


def average_pool_mask(mask: np.ndarray) -> np.ndarray:
    """8x8 mean: fraction of each latent cell covered by the mask."""
    return _pool(np.asarray(mask) > 0, np.mean)
