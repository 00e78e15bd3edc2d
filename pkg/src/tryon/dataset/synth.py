"""
Synthetic layered-garment generator.

Each sample paints, back to front: background, a body silhouette, the inner
garment, then an open outer garment (a jacket whose central opening is
sized to hit a sampled occlusion fraction). Because layers are composited
in painter's order, the occlusion of the inner garment is known exactly.

Garment images are flat-lay renders on white in the person's frame. All
colours are quantised to multiples of 1/255 so PNG storage is lossless.
Sample `index` under `seed` always draws from `default_rng([seed, index])`.
"""

import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage
from tqdm import tqdm

from ..error_handling import ConfigurationError, InternalError
from .quadruplet import Quadruplet

logger = logging.getLogger(__name__)

SHAPES = ("rectangle", "ellipse", "tshirt")
TEXTURES = ("flat", "stripes", "checker")
GARMENT_COLOUR_RANGE = (0.1, 0.85)
MASK_DILATION = 2
MAX_ATTEMPTS = 32


@dataclass
class SynthConfig:
    size: int = 64
    occlusion_range: Tuple[float, float] = (0.2, 0.7)
    shapes: Tuple[str, ...] = SHAPES
    textures: Tuple[str, ...] = TEXTURES
    seed: int = 0
    train_fraction: float = 2783 / 3538

    def __post_init__(self):
        if self.size <= 0 or self.size % 32:
            raise ConfigurationError(
                f"Image size {self.size} must be a positive multiple of 32",
                code="LFT-E203",
                suggestions=["Use 64 or 96 for desk-scale runs"],
            )
        low, high = self.occlusion_range
        if not 0.0 <= low <= high < 1.0:
            raise ConfigurationError(f"Occlusion range {self.occlusion_range} must satisfy 0 <= low <= high < 1",
                                     code="LFT-E203")

    @classmethod
    def from_run_config(cls, config: dict) -> "SynthConfig":
        data = config["data"]
        return cls(
            size=data["image_size"],
            occlusion_range=(data["occlusion_min"], data["occlusion_max"]),
            shapes=tuple(data["shapes"]),
            textures=tuple(data["textures"]),
            seed=data["seed"],
            train_fraction=data["train_fraction"],
        )


def quantise(x: np.ndarray) -> np.ndarray:
    return np.round(np.asarray(x, dtype=np.float64) * 255.0) / 255.0


def _canvas(size: int) -> Tuple[Image.Image, ImageDraw.ImageDraw]:
    image = Image.new("L", (size, size), 0)
    return image, ImageDraw.Draw(image)


def _as_mask(image: Image.Image) -> np.ndarray:
    return np.asarray(image) > 0


def body_mask(size: int, rng: np.random.Generator) -> np.ndarray:
    image, draw = _canvas(size)
    cx = size / 2 + rng.uniform(-0.03, 0.03) * size
    head_r = size * rng.uniform(0.08, 0.1)
    head_cy = size * 0.15
    draw.ellipse([cx - head_r, head_cy - head_r, cx + head_r, head_cy + head_r], fill=255)
    draw.rectangle([cx - 0.05 * size, head_cy, cx + 0.05 * size, 0.3 * size], fill=255)
    half = size * rng.uniform(0.2, 0.24)
    draw.rounded_rectangle([cx - half, 0.27 * size, cx + half, size - 1], radius=int(0.06 * size), fill=255)
    return _as_mask(image)


def garment_mask(shape: str, box: Tuple[float, float, float, float], size: int) -> np.ndarray:
    x0, y0, x1, y1 = box
    image, draw = _canvas(size)
    if shape == "rectangle":
        draw.rectangle([x0, y0, x1, y1], fill=255)
    elif shape == "ellipse":
        draw.ellipse([x0, y0, x1, y1], fill=255)
    else:
        draw.rectangle([x0, y0, x1, y1], fill=255)
        sleeve_w, sleeve_h = 0.1 * size, 0.18 * size
        draw.polygon([(x0, y0), (x0 - sleeve_w, y0 + 0.3 * sleeve_h), (x0 - sleeve_w, y0 + sleeve_h),
                      (x0, y0 + sleeve_h)], fill=255)
        draw.polygon([(x1, y0), (x1 + sleeve_w, y0 + 0.3 * sleeve_h), (x1 + sleeve_w, y0 + sleeve_h),
                      (x1, y0 + sleeve_h)], fill=255)
    return _as_mask(image)


def _colour(rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(*GARMENT_COLOUR_RANGE, size=3)


def texture(kind: str, size: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """(3, size, size) texture and its mean colour."""
    first = _colour(rng)
    if kind == "flat":
        pattern = np.zeros((size, size))
        second = first
    else:
        second = _colour(rng)
        yy, xx = np.mgrid[0:size, 0:size]
        if kind == "stripes":
            period = int(rng.integers(4, 11))
            coord = yy if rng.random() < 0.5 else xx
            pattern = ((coord // max(1, period // 2)) % 2).astype(np.float64)
        else:
            cell = int(rng.integers(4, 9))
            pattern = ((yy // cell + xx // cell) % 2).astype(np.float64)
    image = first[:, None, None] * (1.0 - pattern) + second[:, None, None] * pattern
    return quantise(image), (first + second) / 2.0


def _jitter(rng: np.random.Generator, value: float, spread: float) -> float:
    return value + rng.uniform(-spread, spread)


def _occlusion(inner: np.ndarray, outer: np.ndarray) -> float:
    return float((inner & outer).sum() / max(1, inner.sum()))


def open_jacket(shape: str, box, size: int, inner: np.ndarray, target: float,
                occlusion_range: Tuple[float, float]) -> Tuple[np.ndarray, int, float]:
    """
    Cut a central vertical opening into the outer silhouette.

    Picks the opening width whose occlusion of `inner` is closest to
    `target` among the widths landing inside `occlusion_range`.

    Returns:
        (outer mask, opening width, achieved occlusion); width -1 when no width fits
    """
    full = garment_mask(shape, box, size)
    cx = (box[0] + box[2]) / 2.0
    low, high = occlusion_range
    best = (None, -1, float("nan"))
    best_gap = np.inf
    columns = np.arange(size)
    for width in range(0, size + 1):
        left = int(np.floor(cx - width / 2.0))
        opening = (columns >= left) & (columns < left + width)
        outer = full & ~opening[None, :]
        fraction = _occlusion(inner, outer)
        if low <= fraction <= high and abs(fraction - target) < best_gap:
            best, best_gap = (outer, width, fraction), abs(fraction - target)
    return best


def generate_sample(config: SynthConfig, index: int, split: str = "train") -> Quadruplet:
    """Render sample `index`; retries layouts until the occlusion fraction fits the configured range."""
    rng = np.random.default_rng([config.seed, index])
    size = config.size
    for _ in range(MAX_ATTEMPTS):
        background = quantise(rng.uniform(0.55, 0.95, size=3))
        skin = quantise(rng.uniform([0.55, 0.35, 0.25], [0.95, 0.75, 0.6]))
        body = body_mask(size, rng)

        inner_shape = config.shapes[int(rng.integers(len(config.shapes)))]
        outer_shape = config.shapes[int(rng.integers(len(config.shapes)))]
        inner_kind = config.textures[int(rng.integers(len(config.textures)))]
        outer_kind = config.textures[int(rng.integers(len(config.textures)))]

        box = (_jitter(rng, 0.3 * size, 0.03 * size), _jitter(rng, 0.32 * size, 0.03 * size),
               _jitter(rng, 0.7 * size, 0.03 * size), _jitter(rng, 0.84 * size, 0.05 * size))
        margin = rng.uniform(0.02, 0.06) * size
        outer_box = (box[0] - margin, box[1] - 0.5 * margin, box[2] + margin,
                     min(size - 1.0, box[3] + rng.uniform(0.0, 0.08) * size))

        inner = garment_mask(inner_shape, box, size)
        target = float(rng.uniform(*config.occlusion_range))
        outer, opening, achieved = open_jacket(outer_shape, outer_box, size, inner, target, config.occlusion_range)
        if outer is None or not inner.any():
            continue

        inner_tex, inner_mean = texture(inner_kind, size, rng)
        outer_tex, outer_mean = texture(outer_kind, size, rng)
        if np.abs(inner_mean - outer_mean).sum() < 0.25:
            continue

        person = np.broadcast_to(background[:, None, None], (3, size, size)).copy()
        person[:, body] = skin[:, None]
        person[:, inner] = inner_tex[:, inner]
        person[:, outer] = outer_tex[:, outer]

        upper = ndimage.binary_dilation(inner | outer, structure=np.ones((2 * MASK_DILATION + 1,) * 2, dtype=bool))
        visible = inner & ~outer
        g_i = np.ones((3, size, size))
        g_i[:, inner] = inner_tex[:, inner]
        g_o = np.ones((3, size, size))
        g_o[:, outer] = outer_tex[:, outer]

        upper_f, visible_f = upper.astype(np.float64), visible.astype(np.float64)
        return Quadruplet(
            id=f"s{index:05d}",
            inner=g_i,
            outer=g_o,
            person=person,
            agnostic=person * (1.0 - upper_f),
            upper_mask=upper_f,
            inner_crop=person * visible_f,
            layer_inner=inner.astype(np.float64),
            layer_outer=outer.astype(np.float64),
            inner_visibility=visible_f,
            split=split,
            meta={
                "inner_shape": inner_shape,
                "outer_shape": outer_shape,
                "inner_texture": inner_kind,
                "outer_texture": outer_kind,
                "target_occlusion": target,
                "occlusion": achieved,
                "opening": int(opening),
            },
        )
    raise InternalError(f"Could not lay out sample {index} within {MAX_ATTEMPTS} attempts",
                        context={"seed": config.seed, "index": index})


def split_assignment(n: int, seed: int, train_fraction: float) -> List[str]:
    """Seeded train/test assignment with round(n * train_fraction) training samples."""
    n_train = int(round(n * train_fraction))
    if n >= 2:
        n_train = min(max(n_train, 1), n - 1)
    else:
        n_train = n
    order = np.random.default_rng([seed, 2 ** 32 - 1]).permutation(n)
    splits = ["test"] * n
    for i in order[:n_train]:
        splits[int(i)] = "train"
    return splits


def generate(config: SynthConfig, n: int, progress: bool = True) -> List[Quadruplet]:
    """
    Generate n samples, deterministically per (seed, index).

    Raises:
        ConfigurationError: n < 1
    """
    if n < 1:
        raise ConfigurationError(f"Sample count must be at least 1, got {n}", code="LFT-E203")
    splits = split_assignment(n, config.seed, config.train_fraction)
    indices = tqdm(range(n), desc="gen-data", unit="sample", disable=not progress, leave=False)
    samples = [generate_sample(config, i, splits[i]) for i in indices]
    logger.info(f"Generated {n} samples ({splits.count('train')} train / {splits.count('test')} test)")
    return samples
