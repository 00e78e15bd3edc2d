"""
Gradient verification suites for the networks.

Each suite builds a fully random instance of a network described by a run
configuration (zero-initialised layers are re-randomised so every path
carries gradient) and checks the tape against central differences.
Without a configuration the suites use `TINY_MODEL`. Pixel sizes are
always shrunk to the smallest the configured UNet depth accepts; channel
plans, attention levels, timesteps and codec mode are taken as given.
`run_all` combines these with the op suites.
"""

import copy
import functools
import logging
from typing import Any, Callable, Dict, Iterable, List, Optional

import numpy as np

from config import build_run_config, validate_run_config
from .codec import BLOCK, LatentCodec
from .dataset.quadruplet import Batch
from .dataset.synth import SynthConfig, generate
from .gmf.pipeline import TryOnModel, denoise_loss
from .gmf.unet import DenoiserUNet, UNetConfig
from .gol import GarmentOcclusionLearner, GolConfig, attention_map, occlusion_loss, refine_inner
from .numeric.gradcheck import OP_SUITES, GradcheckResult, SuiteBuilder, projected_loss, run_suite
from .numeric.layers import Parameter, ParameterStore, ResidualBlock, SelfAttention
from .numeric.tensor import Tensor

logger = logging.getLogger(__name__)

TINY_MODEL = {
    "data": {"image_size": 32},
    "model": {
        "gol_channels": [2, 2, 3, 3, 3],
        "gol_mapping_channels": 3,
        "unet_channels": [3, 4],
        "unet_time_dim": 4,
        "unet_attention_levels": [1],
        "timesteps": 40,
        "codec_width": 3,
    },
    "sample": {"ddim_steps": 10},
}

NetworkBuilder = Callable[[np.random.Generator, Dict[str, Any]], tuple]


def suite_config(config: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """The run config the network suites are built from, with the smallest valid image size."""
    if config is None:
        return build_run_config(copy.deepcopy(TINY_MODEL))
    config = copy.deepcopy(config)
    levels = len(config["model"]["unet_channels"])
    config["data"]["image_size"] = max(32, BLOCK * 2 ** (levels - 1))
    validate_run_config(config)
    return config


def _randomize(params: Iterable[Parameter], rng: np.random.Generator, bias_scale: float = 0.1):
    """Redraw weights with fan-in scaling and biases small, keeping activations O(1)."""
    for param in params:
        if len(param.shape) >= 2:
            fan_in = int(np.prod(param.shape[1:]))
            param.tensor.data = rng.normal(scale=1.0 / np.sqrt(fan_in), size=param.shape)
        else:
            param.tensor.data = rng.normal(scale=bias_scale, size=param.shape)


def _named(params: Iterable[Parameter]) -> Dict[str, Tensor]:
    return {p.id: p.tensor for p in params}


def _latent_size(config) -> int:
    return config["data"]["image_size"] // BLOCK


def _residual_suite(rng, config):
    channels = config["model"]["unet_channels"][0]
    store = ParameterStore()
    block = ResidualBlock(store, "res", channels, rng)
    _randomize(store, rng)
    x = Tensor(rng.normal(size=(2, channels, 5, 5)), requires_grad=True)
    shift = Tensor(rng.normal(size=(2, channels)), requires_grad=True)
    project = projected_loss(block(x, shift), rng)
    return (lambda: project(block(x, shift))), {"x": x, "shift": shift, **_named(store)}


def _attention_suite(rng, config):
    model = config["model"]
    levels = model["unet_attention_levels"] or [len(model["unet_channels"]) - 1]
    channels = model["unet_channels"][max(levels)]
    store = ParameterStore()
    attention = SelfAttention(store, "attn", channels, rng)
    _randomize(store, rng)
    x = Tensor(rng.normal(size=(1, channels, 2, 3)), requires_grad=True)
    project = projected_loss(attention(x), rng)
    return (lambda: project(attention(x))), {"x": x, **_named(store)}


def _codec_suite(rng, config):
    store = ParameterStore()
    codec = LatentCodec(store, "learned", rng, config["model"]["codec_width"])
    _randomize(store, rng)
    images = rng.uniform(size=(1, 3, 16, 16))
    return (lambda: codec.reconstruction_loss(images)), _named(codec.params)


def _gol_suite(rng, config):
    size = config["data"]["image_size"]
    store = ParameterStore()
    codec = LatentCodec(store, config["model"]["codec_mode"], rng, config["model"]["codec_width"])
    gol = GarmentOcclusionLearner(store, GolConfig.from_run_config(config), rng)
    _randomize(gol.params, rng)
    g_i, g_o, x_pi = (rng.uniform(size=(1, 3, size, size)) for _ in range(3))
    z_i = codec.encode(g_i)
    target = codec.encode(x_pi)

    def loss():
        z_iv = refine_inner(attention_map(g_i, g_o, gol), z_i)
        return occlusion_loss(z_iv, None, codec, target=target)

    return loss, _named(gol.params)


def _unet_suite(rng, config):
    h = _latent_size(config)
    store = ParameterStore()
    unet = DenoiserUNet(store, UNetConfig.from_run_config(config), rng)
    _randomize(store, rng)
    x = Tensor(rng.normal(size=(1, 9, h, 3 * h)), requires_grad=True)
    t = np.array([int(rng.integers(1, config["model"]["timesteps"] + 1))])
    project = projected_loss(unet(x, t), rng)
    return (lambda: project(unet(x, t))), {"x": x, **_named(store)}


def _pipeline_suite(rng, config):
    model = TryOnModel(config, ablation="gol+locc")
    _randomize(model.gol.params + model.bundle.unet.params, rng)
    size = config["data"]["image_size"]
    samples = generate(SynthConfig(size=size, seed=int(rng.integers(1 << 30))), 2, progress=False)
    batch = Batch.stack(samples)
    h = _latent_size(config)
    noise = rng.standard_normal((2, 4, h, 3 * h))
    timesteps = rng.integers(1, model.bundle.schedule.T + 1, size=2)

    def loss():
        return denoise_loss(batch, model, np.random.default_rng(0), noise=noise, timesteps=timesteps,
                            p_uncond=0.0).total

    return loss, _named(model.gol.params)


_NETWORK_BUILDERS: Dict[str, NetworkBuilder] = {
    "residual_block": _residual_suite,
    "self_attention": _attention_suite,
    "codec_learned": _codec_suite,
    "gol": _gol_suite,
    "unet": _unet_suite,
    "pipeline_gol": _pipeline_suite,
}


def network_suites(config: Optional[Dict[str, Any]] = None) -> Dict[str, SuiteBuilder]:
    """Network suites bound to `suite_config(config)`."""
    bound = suite_config(config)
    return {name: functools.partial(builder, config=bound) for name, builder in _NETWORK_BUILDERS.items()}


NETWORK_SUITES: Dict[str, SuiteBuilder] = network_suites()


def all_suites(config: Optional[Dict[str, Any]] = None) -> Dict[str, SuiteBuilder]:
    return {**OP_SUITES, **network_suites(config)}


def run_all(seeds: Iterable[int], max_coords: Optional[int] = 6, only: Optional[List[str]] = None,
            progress=None, config: Optional[Dict[str, Any]] = None) -> List[GradcheckResult]:
    """Run every suite (or the `only` subset) over `seeds`, networks shaped by `config`."""
    seeds = list(seeds)
    results = []
    for name, builder in all_suites(config).items():
        if only and name not in only:
            continue
        results.extend(run_suite(name, builder, seeds, max_coords=max_coords))
        if progress is not None:
            progress(name)
    return results


def summarize(results: List[GradcheckResult]) -> Dict[str, Dict[str, float]]:
    """Per-suite worst error, seed count and pass flag."""
    summary: Dict[str, Dict[str, float]] = {}
    for result in results:
        entry = summary.setdefault(result.suite, {"max_rel_error": 0.0, "seeds": 0, "passed": True})
        entry["max_rel_error"] = max(entry["max_rel_error"], result.max_rel_error)
        entry["seeds"] += 1
        entry["passed"] = entry["passed"] and result.passed
    return summary
