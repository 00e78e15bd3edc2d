"""Latent diffusion garment fitting."""

from .schedule import NoiseSchedule, forward_noise
from .unet import DenoiserUNet, UNetConfig
from .pipeline import (AssemblyLayout, DenoiserBundle, TryOnModel, assemble, cfg_combine,
                       conditional_dropout, denoise_loss, sample)
from .trainer import Trainer

__all__ = [
    "NoiseSchedule", "forward_noise", "DenoiserUNet", "UNetConfig", "AssemblyLayout", "DenoiserBundle",
    "TryOnModel", "assemble", "cfg_combine", "conditional_dropout", "denoise_loss", "sample", "Trainer",
]
