"""
Layered appearance coherence difference.

    lacd_i = λ1 · Σ_{j ∈ B_i} ||x_gt(j) - x_gen(j)||_2 + Σ_{k ∈ C_i} ||x_gt(k) - x_gen(k)||_2
    LACD   = mean_i lacd_i

The per-pixel norm is taken over the three colour channels. In `per-pixel`
mode each sum is divided by its region's pixel count; empty regions
contribute 0 in both modes.
"""

from dataclasses import dataclass, field
from typing import List

import numpy as np

from ..error_handling import InputError, UsageError
from .regions import LayerRegions

NORM_MODES = ("raw", "per-pixel")


@dataclass
class LacdReport:
    layers: List[float]
    lacd: float
    lambda1: float
    norm: str
    band_pixels: List[int] = field(default_factory=list)
    interior_pixels: List[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "lacd_layers": list(self.layers),
            "lacd": self.lacd,
            "lambda1": self.lambda1,
            "norm": self.norm,
            "band_pixels": list(self.band_pixels),
            "interior_pixels": list(self.interior_pixels),
        }


def pixel_error(x_gt: np.ndarray, x_gen: np.ndarray) -> np.ndarray:
    """(H, W) map of the Euclidean colour distance between two (3, H, W) images."""
    x_gt, x_gen = np.asarray(x_gt, dtype=np.float64), np.asarray(x_gen, dtype=np.float64)
    if x_gt.shape != x_gen.shape or x_gt.ndim != 3 or x_gt.shape[0] != 3:
        raise InputError(f"Images must both be (3, H, W); got {x_gt.shape} and {x_gen.shape}", code="LFT-E803")
    return np.sqrt(np.sum(np.square(x_gt - x_gen), axis=0))


def _region_term(error: np.ndarray, region: np.ndarray, norm: str) -> float:
    count = int(region.sum())
    if count == 0:
        return 0.0
    total = float(error[region].sum())
    return total / count if norm == "per-pixel" else total


def _layer_score(error: np.ndarray, regions: LayerRegions, i: int, lambda1: float, norm: str) -> float:
    return (lambda1 * _region_term(error, regions.bands[i], norm)
            + _region_term(error, regions.interiors[i], norm))


def _check(error: np.ndarray, regions: LayerRegions, norm: str):
    if norm not in NORM_MODES:
        raise InputError(f"Unknown normalisation '{norm}', expected one of {NORM_MODES}", code="LFT-E801")
    if error.shape != regions.shape:
        raise InputError(f"Images {error.shape} do not match layer masks {regions.shape}", code="LFT-E803")


def lacd_layer(x_gt, x_gen, regions: LayerRegions, i: int, lambda1: float = 3.0, norm: str = "raw") -> float:
    """
    Score of layer i (0-based, inner first).

    Raises:
        UsageError: i outside the layer range
    """
    if not 0 <= i < regions.n_layers:
        raise UsageError(f"Layer index {i} outside 0..{regions.n_layers - 1}", code="LFT-E704")
    error = pixel_error(x_gt, x_gen)
    _check(error, regions, norm)
    return _layer_score(error, regions, i, lambda1, norm)


def lacd(x_gt, x_gen, regions: LayerRegions, lambda1: float = 3.0, norm: str = "raw") -> LacdReport:
    """Average of the layer scores over all N layers."""
    if regions.n_layers == 0:
        raise InputError("LACD needs at least one layer", code="LFT-E801")
    error = pixel_error(x_gt, x_gen)
    _check(error, regions, norm)
    layers = [_layer_score(error, regions, i, lambda1, norm) for i in range(regions.n_layers)]
    return LacdReport(
        layers=layers,
        lacd=float(np.mean(layers)),
        lambda1=float(lambda1),
        norm=norm,
        band_pixels=[int(b.sum()) for b in regions.bands],
        interior_pixels=[int(c.sum()) for c in regions.interiors],
    )
