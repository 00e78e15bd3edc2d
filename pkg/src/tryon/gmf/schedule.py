"""
Diffusion noise schedule and the forward noising process.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from ..error_handling import ConfigurationError, UsageError
from ..numeric import ops
from ..numeric.tensor import Tensor, as_tensor

logger = logging.getLogger(__name__)

REFERENCE_STEPS = 1000


@dataclass
class NoiseSchedule:
    """
    Linear beta schedule over t = 1..T.

    With `rescale` the reference 1e-4 -> 0.02 range (defined for 1000 steps)
    is multiplied by 1000 / T, which keeps the final step near pure noise
    when T is small. Arrays are 0-indexed: `alpha_bar[t - 1]` is ᾱ_t.
    """
    betas: np.ndarray

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=np.float64)
        if self.betas.ndim != 1 or len(self.betas) < 1:
            raise ConfigurationError("Noise schedule needs a non-empty 1-D beta array")
        if np.any(self.betas < 0.0) or np.any(self.betas >= 1.0):
            raise ConfigurationError("Noise schedule betas must lie in [0, 1)")
        self.alphas = 1.0 - self.betas
        self.alpha_bar = np.cumprod(self.alphas)

    @classmethod
    def linear(cls, steps: int = 200, beta_start: float = 1e-4, beta_end: float = 0.02,
               rescale: bool = True) -> "NoiseSchedule":
        scale = REFERENCE_STEPS / steps if rescale else 1.0
        if not 0.0 < beta_start * scale < beta_end * scale < 1.0:
            raise ConfigurationError(
                f"Beta range {beta_start}..{beta_end} (x{scale:g}) must satisfy 0 < start < end < 1",
                code="LFT-E203",
            )
        schedule = cls(np.linspace(beta_start * scale, beta_end * scale, steps))
        if schedule.alpha_bar[-1] >= 0.05:
            logger.warning(f"Final step keeps signal: alpha_bar_T = {schedule.alpha_bar[-1]:.3f}")
        return schedule

    @classmethod
    def from_run_config(cls, config: dict) -> "NoiseSchedule":
        model = config["model"]
        return cls.linear(model["timesteps"], model["beta_start"], model["beta_end"], model["rescale_betas"])

    @property
    def T(self) -> int:
        return len(self.betas)

    def check_timesteps(self, t) -> np.ndarray:
        t = np.asarray(t)
        if t.size == 0 or np.any(t < 1) or np.any(t > self.T) or not np.issubdtype(t.dtype, np.integer):
            raise UsageError(
                f"Timestep {t.tolist()} outside 1..{self.T}",
                code="LFT-E704",
            )
        return t

    def alpha_bar_at(self, t) -> np.ndarray:
        return self.alpha_bar[self.check_timesteps(t) - 1]

    def alpha_bar_prev(self, t: int) -> float:
        """ᾱ_{t-1}, with ᾱ_0 = 1."""
        return 1.0 if t <= 1 else float(self.alpha_bar[t - 2])


def forward_noise(y0, t: Union[int, np.ndarray], schedule: NoiseSchedule,
                  rng: Optional[np.random.Generator] = None,
                  noise: Optional[np.ndarray] = None) -> Tuple[Tensor, np.ndarray]:
    """
    y_t = sqrt(ᾱ_t) y0 + sqrt(1 - ᾱ_t) ε.

    Args:
        y0: clean tensor; a per-sample `t` array indexes its leading axis
        t: timestep in 1..T, or one timestep per sample
        schedule: the noise schedule
        rng: draws ε when `noise` is not given
        noise: pre-drawn ε of the same shape as y0

    Returns:
        (y_t, ε)

    Raises:
        UsageError: t outside 1..T
    """
    y0 = as_tensor(y0)
    alpha_bar = schedule.alpha_bar_at(t)
    if alpha_bar.ndim == 1:
        if alpha_bar.shape[0] != y0.shape[0]:
            raise UsageError(f"{alpha_bar.shape[0]} timesteps for a batch of {y0.shape[0]}", code="LFT-E704")
        alpha_bar = alpha_bar.reshape((-1,) + (1,) * (y0.ndim - 1))
    if noise is None:
        if rng is None:
            raise UsageError("forward_noise needs either rng or noise")
        noise = rng.standard_normal(y0.shape)
    noise = np.asarray(noise, dtype=np.float64)
    y_t = ops.add(ops.mul(y0, np.sqrt(alpha_bar)), np.sqrt(1.0 - alpha_bar) * noise)
    return y_t, noise
