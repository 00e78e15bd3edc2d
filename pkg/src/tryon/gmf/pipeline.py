"""
Garment morphing and fitting: assembly, training loss and guided sampling.

The denoising state is a 4-channel target track laid out along the width
axis as [person | outer | inner]. The denoiser sees it channel-concatenated
with the clean conditions z_in = [z_a | z_o | z_iv] and the mask
m_in = [m_a | 0 | 0]. Only the person third of the final latent is decoded.
"""

import logging
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from ..codec import LatentCodec, LatentImage, downsample_mask
from ..dataset.quadruplet import Batch
from ..error_handling import InputError, LayerfitError, UsageError
from ..gol import GarmentOcclusionLearner, GolConfig, attention_map, occlusion_loss, refine_inner
from ..numeric import ops
from ..numeric.checkpoint import load_checkpoint, save_checkpoint
from ..numeric.layers import Parameter, ParameterStore
from ..numeric.tensor import Tensor, as_tensor, no_grad
from .schedule import NoiseSchedule, forward_noise
from .unet import DenoiserUNet, UNetConfig

logger = logging.getLogger(__name__)

ABLATIONS = ("base", "gol", "gol+locc")
Predictor = Callable[[Tensor, np.ndarray], Tensor]


@dataclass(frozen=True)
class AssemblyLayout:
    """Width-axis slot order of the assembled strip."""
    slots: Tuple[str, ...] = ("person", "outer", "inner")
    axis: int = -1

    def index(self, slot: str) -> int:
        return self.slots.index(slot)

    def extract(self, z, slot: str, slot_width: int) -> Tensor:
        """Cut one slot back out of an assembled tensor."""
        start = self.index(slot) * slot_width
        return ops.slice_axis(as_tensor(z), self.axis, start, start + slot_width)


LAYOUT = AssemblyLayout()


@contextmanager
def _stage(name: str):
    try:
        yield
    except LayerfitError as error:
        error.error_info.context.setdefault("stage", name)
        raise


def _mask_batch(m_a, like: Tensor) -> np.ndarray:
    m = np.asarray(m_a, dtype=np.float64)
    if m.ndim == like.ndim - 1:
        m = np.expand_dims(m, -3)
    return m


def assemble(z_a: LatentImage, z_o: LatentImage, z_iv: LatentImage, m_a) -> Tuple[Tensor, np.ndarray]:
    """
    z_in = [z_a, z_o, z_iv] and m_in = [m_a, 0, 0] along the width axis.

    Args:
        z_a, z_o, z_iv: latents (4, h, w) or (N, 4, h, w)
        m_a: latent-resolution agnostic mask (1, h, w) / (h, w), batched alike

    Raises:
        InputError: when the three latents or the mask disagree in shape
    """
    shapes = {z.shape for z in (z_a, z_o, z_iv)}
    if len(shapes) != 1:
        raise InputError(f"Latents to assemble differ in shape: {[z.shape for z in (z_a, z_o, z_iv)]}",
                         code="LFT-E803")
    m = _mask_batch(m_a, z_a.data)
    expected = z_a.shape[:-3] + (1,) + z_a.shape[-2:]
    if m.shape != expected:
        raise InputError(f"Mask {m.shape} does not match latents {z_a.shape}", code="LFT-E803")
    z_in = ops.concat([z_a.data, z_o.data, z_iv.data], axis=LAYOUT.axis)
    zeros = np.zeros_like(m)
    m_in = np.concatenate([m, zeros, zeros], axis=LAYOUT.axis)
    return z_in, m_in


def conditional_dropout(z_o, z_iv, rng: np.random.Generator, p: float = 0.1) -> Tuple[Tensor, Tensor]:
    """
    Zero both garment conditions together with probability p, one draw per sample.

    Unbatched (4, h, w) inputs get a single draw.
    """
    if not 0.0 <= p <= 1.0:
        raise UsageError(f"Dropout probability {p} outside [0, 1]")
    z_o, z_iv = as_tensor(z_o), as_tensor(z_iv)
    if z_o.ndim == 4:
        keep = (rng.random(z_o.shape[0]) >= p).astype(np.float64).reshape(-1, 1, 1, 1)
    else:
        keep = np.float64(rng.random() >= p)
    return ops.mul(z_o, keep), ops.mul(z_iv, keep)


def cfg_combine(eps_uncond, eps_cond, s: float) -> Tensor:
    """eps_uncond + s * (eps_cond - eps_uncond)."""
    eps_uncond, eps_cond = as_tensor(eps_uncond), as_tensor(eps_cond)
    if eps_uncond.shape != eps_cond.shape:
        raise InputError(f"Guidance branches differ in shape: {eps_uncond.shape} vs {eps_cond.shape}",
                         code="LFT-E803")
    if s == 1.0:
        return eps_cond
    return ops.add(eps_uncond, ops.mul(ops.sub(eps_cond, eps_uncond), float(s)))


@dataclass
class DenoiserBundle:
    schedule: NoiseSchedule
    unet: DenoiserUNet
    layout: AssemblyLayout = LAYOUT


class TryOnModel:
    """Codec, occlusion learner and denoiser sharing one parameter store."""

    def __init__(self, config: dict, ablation: Optional[str] = None):
        self.config = config
        self.ablation = ablation or config["train"]["ablation"]
        if self.ablation not in ABLATIONS:
            raise UsageError(f"Unknown ablation '{self.ablation}'")
        rng = np.random.default_rng(config["model"]["init_seed"])
        self.store = ParameterStore()
        self.codec = LatentCodec(self.store, config["model"]["codec_mode"], rng, config["model"]["codec_width"])
        self.gol = GarmentOcclusionLearner(self.store, GolConfig.from_run_config(config), rng)
        unet = DenoiserUNet(self.store, UNetConfig.from_run_config(config), rng)
        self.bundle = DenoiserBundle(NoiseSchedule.from_run_config(config), unet)

    @property
    def uses_gol(self) -> bool:
        return self.ablation != "base"

    @property
    def lambda2(self) -> float:
        return 0.0 if self.ablation == "gol" else self.config["train"]["lambda2"]

    def trainable(self, stage: str = "joint", subset: str = "all") -> List[Parameter]:
        gol_params = self.gol.params if self.uses_gol or stage == "gol" else []
        if stage == "gol":
            return gol_params
        if subset == "gol+attention":
            return gol_params + self.bundle.unet.attention_params
        return gol_params + self.bundle.unet.params

    def save(self, path: str):
        save_checkpoint(path, self.store.state_dict())

    def load(self, path: str, strict: bool = True):
        self.store.load_state_dict(load_checkpoint(path), strict=strict)


@dataclass
class Conditions:
    z_a: LatentImage
    z_o: LatentImage
    z_i: LatentImage
    z_iv: LatentImage
    m_a: np.ndarray
    attention: Optional[Tensor] = None


def encode_conditions(model: TryOnModel, agnostic, outer, inner, upper_mask) -> Conditions:
    """Encode the condition images and refine the inner latent with A (skipped by the base ablation)."""
    with _stage("encode"):
        with no_grad():
            z_a = model.codec.encode(agnostic)
            z_o = model.codec.encode(outer)
            z_i = model.codec.encode(inner)
        m_a = _mask_batch(downsample_mask(upper_mask), z_a.data)
    if not model.uses_gol:
        return Conditions(z_a, z_o, z_i, z_i, m_a)
    with _stage("gol"):
        a = attention_map(inner, outer, model.gol)
        z_iv = refine_inner(a, z_i)
    return Conditions(z_a, z_o, z_i, z_iv, m_a, attention=a.data)


@dataclass
class LossBreakdown:
    total: Tensor
    gmf: float
    occ: float


def denoise_loss(batch: Batch, model: TryOnModel, rng: np.random.Generator,
                 noise: Optional[np.ndarray] = None, timesteps: Optional[np.ndarray] = None,
                 predictor: Optional[Predictor] = None, p_uncond: Optional[float] = None) -> LossBreakdown:
    """
    L = MSE(ε, ε_θ(y_t ++ z_in ++ m_in, t)) + λ2 · L_OCC.

    The target y0 is [encode(x_p) | z_o | z_iv]; conditions pass through
    conditional dropout before assembly. `noise`, `timesteps` and
    `predictor` replace the random draws and the UNet, for tests.
    """
    schedule, unet = model.bundle.schedule, model.bundle.unet
    p_uncond = model.config["train"]["p_uncond"] if p_uncond is None else p_uncond
    cond = encode_conditions(model, batch.agnostic, batch.outer, batch.inner, batch.upper_mask)

    with _stage("assemble"):
        with no_grad():
            z_p = model.codec.encode(batch.person)
        y0 = ops.concat([z_p.data, cond.z_o.data, cond.z_iv.data], axis=LAYOUT.axis)
        drop_o, drop_iv = conditional_dropout(cond.z_o.data, cond.z_iv.data, rng, p_uncond)
        z_in, m_in = assemble(cond.z_a, LatentImage(drop_o, cond.z_o.source_dims),
                              LatentImage(drop_iv, cond.z_iv.source_dims), cond.m_a)

    with _stage("denoise"):
        n = y0.shape[0]
        t = rng.integers(1, schedule.T + 1, size=n) if timesteps is None else np.asarray(timesteps)
        y_t, eps = forward_noise(y0, t, schedule, rng=rng, noise=noise)
        x_in = ops.concat([y_t, z_in, m_in], axis=1)
        eps_pred = predictor(x_in, t) if predictor is not None else unet(x_in, t)
        l_gmf = ops.mse(eps_pred, eps)

    total = l_gmf
    occ_value = 0.0
    if model.uses_gol:
        with _stage("occlusion"):
            with no_grad():
                target = model.codec.encode(batch.inner_crop)
            l_occ = occlusion_loss(cond.z_iv, None, model.codec, squared=model.gol.config.squared_loss,
                                   target=target)
            occ_value = l_occ.item()
            if model.lambda2 > 0.0:
                total = ops.add(l_gmf, ops.mul(l_occ, model.lambda2))
    return LossBreakdown(total, l_gmf.item(), occ_value)


def gol_loss(batch: Batch, model: TryOnModel) -> Tensor:
    """L_OCC alone, for training the occlusion learner by itself."""
    with no_grad():
        z_i = model.codec.encode(batch.inner)
        target = model.codec.encode(batch.inner_crop)
    a = attention_map(batch.inner, batch.outer, model.gol)
    return occlusion_loss(refine_inner(a, z_i), None, model.codec,
                          squared=model.gol.config.squared_loss, target=target)


def _predict(unet: DenoiserUNet, y: np.ndarray, z_in_cond: Tensor, z_in_uncond: Tensor, m_in: np.ndarray,
             t: int, s: float) -> np.ndarray:
    steps = np.full(y.shape[0], t)

    def branch(z_in):
        return unet(ops.concat([Tensor(y), z_in, m_in], axis=1), steps)

    if s == 0.0:
        return branch(z_in_uncond).data
    if s == 1.0:
        return branch(z_in_cond).data
    return cfg_combine(branch(z_in_uncond), branch(z_in_cond), s).data


def ddim_timesteps(T: int, steps: int) -> List[int]:
    """Descending, de-duplicated timesteps from T down to 1."""
    grid = np.round(np.linspace(T, 1, steps)).astype(int)
    return sorted(set(grid.tolist()), reverse=True)


def sample(model: TryOnModel, agnostic, outer, inner, upper_mask, s: float, rng: np.random.Generator,
           sampler: str = "ancestral", ddim_steps: int = 50, paste_unmasked: bool = True) -> np.ndarray:
    """
    Generate the try-on image x_g = decode(person slot of y_0).

    Runs the reverse chain from pure noise on the target track; the
    conditions stay fixed. The unconditional branch zeroes the outer and
    inner slots of z_in.

    Returns:
        np.ndarray: image(s) with the same shape as `agnostic`
    """
    if s < 0.0:
        raise UsageError(f"Guidance scale must be non-negative, got {s}")
    if sampler not in ("ancestral", "ddim"):
        raise UsageError(f"Unknown sampler '{sampler}'")
    agnostic = np.asarray(agnostic, dtype=np.float64)
    squeeze = agnostic.ndim == 3
    if squeeze:
        agnostic, outer, inner, upper_mask = (np.asarray(v)[None] for v in (agnostic, outer, inner, upper_mask))

    schedule, unet = model.bundle.schedule, model.bundle.unet
    with no_grad():
        cond = encode_conditions(model, agnostic, outer, inner, upper_mask)
        z_in_cond, m_in = assemble(cond.z_a, cond.z_o, cond.z_iv, cond.m_a)
        zero = LatentImage(Tensor(np.zeros(cond.z_o.shape)), cond.z_o.source_dims)
        z_in_uncond, _ = assemble(cond.z_a, zero, zero, cond.m_a)

        y = rng.standard_normal(z_in_cond.shape)
        if sampler == "ancestral":
            for t in range(schedule.T, 0, -1):
                eps = _predict(unet, y, z_in_cond, z_in_uncond, m_in, t, s)
                beta, alpha, alpha_bar = schedule.betas[t - 1], schedule.alphas[t - 1], schedule.alpha_bar[t - 1]
                mean = (y - beta / np.sqrt(1.0 - alpha_bar) * eps) / np.sqrt(alpha)
                if t > 1:
                    variance = beta * (1.0 - schedule.alpha_bar_prev(t)) / (1.0 - alpha_bar)
                    y = mean + np.sqrt(variance) * rng.standard_normal(y.shape)
                else:
                    y = mean
        else:
            steps = ddim_timesteps(schedule.T, ddim_steps)
            for index, t in enumerate(steps):
                eps = _predict(unet, y, z_in_cond, z_in_uncond, m_in, t, s)
                alpha_bar = schedule.alpha_bar[t - 1]
                alpha_bar_next = schedule.alpha_bar[steps[index + 1] - 1] if index + 1 < len(steps) else 1.0
                y0_pred = (y - np.sqrt(1.0 - alpha_bar) * eps) / np.sqrt(alpha_bar)
                y = np.sqrt(alpha_bar_next) * y0_pred + np.sqrt(1.0 - alpha_bar_next) * eps

        width = cond.z_a.shape[-1]
        person = LAYOUT.extract(Tensor(y), "person", width)
        image = model.codec.decode(LatentImage(person, cond.z_a.source_dims)).data

    if paste_unmasked:
        m = np.asarray(upper_mask, dtype=np.float64)[:, None]
        image = m * image + (1.0 - m) * agnostic
    return image[0] if squeeze else image
