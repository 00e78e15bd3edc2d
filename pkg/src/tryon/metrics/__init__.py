"""Layered coherence metric, SSIM and batch evaluation."""

from .regions import LayerRegions, derive_regions
from .lacd import LacdReport, lacd, lacd_layer
from .ssim import ssim

__all__ = ["LayerRegions", "derive_regions", "LacdReport", "lacd", "lacd_layer", "ssim"]
