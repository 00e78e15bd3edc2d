"""
Structural similarity over a sliding 11x11 Gaussian window (sigma 1.5).

Computed per channel on [0, 1] images with C1 = 0.01^2 and C2 = 0.03^2,
keeping only windows that fit entirely inside the image, then averaged
over windows and channels.
"""

import numpy as np
from scipy import ndimage

from ..error_handling import InputError

WINDOW = 11
SIGMA = 1.5
C1 = 0.01 ** 2
C2 = 0.03 ** 2


def gaussian_window(size: int = WINDOW, sigma: float = SIGMA) -> np.ndarray:
    coords = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    window = np.outer(g, g)
    return window / window.sum()


def _filter_valid(image: np.ndarray, window: np.ndarray) -> np.ndarray:
    half = window.shape[0] // 2
    filtered = ndimage.correlate(image, window, mode="constant")
    return filtered[half:-half, half:-half]


def ssim_map(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-channel SSIM maps (C, H - 10, W - 10)."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 3:
        raise InputError(f"SSIM needs two (C, H, W) images of equal shape; got {x.shape} and {y.shape}",
                         code="LFT-E803")
    if x.shape[1] < WINDOW or x.shape[2] < WINDOW:
        raise InputError(f"Images {x.shape[1]}x{x.shape[2]} are smaller than the {WINDOW}x{WINDOW} SSIM window",
                         code="LFT-E801")
    window = gaussian_window()
    maps = []
    for xc, yc in zip(x, y):
        mu_x, mu_y = _filter_valid(xc, window), _filter_valid(yc, window)
        sigma_xx = _filter_valid(xc * xc, window) - mu_x * mu_x
        sigma_yy = _filter_valid(yc * yc, window) - mu_y * mu_y
        sigma_xy = _filter_valid(xc * yc, window) - mu_x * mu_y
        numerator = (2.0 * mu_x * mu_y + C1) * (2.0 * sigma_xy + C2)
        denominator = (mu_x * mu_x + mu_y * mu_y + C1) * (sigma_xx + sigma_yy + C2)
        maps.append(numerator / denominator)
    return np.stack(maps)


def ssim(x: np.ndarray, y: np.ndarray) -> float:
    return float(ssim_map(x, y).mean())
