"""
Layer region derivation for the layered coherence metric.

For layers ordered inner -> outer, the band B_i is the part of A_i within
Chebyshev distance `band_radius` of the next layer, B_N is empty, and the
interior is C_i = A_i minus B_i.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
from scipy import ndimage

from ..error_handling import InputError

logger = logging.getLogger(__name__)


@dataclass
class LayerRegions:
    regions: List[np.ndarray]
    bands: List[np.ndarray]
    interiors: List[np.ndarray]
    band_radius: int

    @property
    def n_layers(self) -> int:
        return len(self.regions)

    @property
    def shape(self):
        return self.regions[0].shape


def dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Binary dilation by a (2r+1) x (2r+1) square, i.e. a Chebyshev ball."""
    structure = np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)
    return ndimage.binary_dilation(mask, structure=structure)


def derive_regions(layer_masks: Sequence[np.ndarray], band_radius: int = 3) -> LayerRegions:
    """
    Build A_i, B_i and C_i from binary layer masks ordered inner -> outer.

    Raises:
        InputError: no masks, masks of different sizes, or band_radius < 1
    """
    if len(layer_masks) == 0:
        raise InputError("At least one layer mask is required", code="LFT-E801")
    if band_radius < 1:
        raise InputError(f"band_radius must be at least 1, got {band_radius}", code="LFT-E801")
    regions = [np.asarray(m) > 0 for m in layer_masks]
    shape = regions[0].shape
    for index, region in enumerate(regions):
        if region.shape != shape or region.ndim != 2:
            raise InputError(f"Layer mask {index} has shape {region.shape}, expected {shape}", code="LFT-E803")
        if not region.any():
            logger.warning(f"Layer {index + 1} region is empty; its score is defined as 0")

    bands, interiors = [], []
    for index, region in enumerate(regions):
        if index + 1 < len(regions):
            band = region & dilate(regions[index + 1], band_radius)
        else:
            band = np.zeros(shape, dtype=bool)
        bands.append(band)
        interiors.append(region & ~band)
    return LayerRegions(regions, bands, interiors, band_radius)
