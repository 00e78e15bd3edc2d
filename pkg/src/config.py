"""
Configuration module for layerfit

This module provides the application settings and the run configuration
(sections data, model, train, sample, eval) with its defaults, loader and
validation.

Full-scale reference hyperparameters, for comparison with the desk-scale
defaults below: learning rate 1e-5 with batch size 8, guidance scale 2.5,
unconditional dropout 0.1, L_OCC weight 0.1 and band weight 3.
"""

import copy
import json
import logging
import os
from typing import Any, Dict, Optional

from tryon.error_handling import ConfigurationError

logger = logging.getLogger(__name__)

# Application settings
CONFIG = {
    'LOG_LEVEL': os.environ.get('LAYERFIT_LOG_LEVEL', 'INFO'),
    'THREADS_ENV': 'LAYERFIT_THREADS',
    'SLOW_ENV': 'LAYERFIT_SLOW',
    'DEFAULT_THREADS': min(8, os.cpu_count() or 1),
    'CHECKPOINT_NAME': 'model.lft',
}

# Run configuration defaults
DEFAULT_RUN_CONFIG: Dict[str, Dict[str, Any]] = {
    'data': {
        'image_size': 64,
        'count': 64,
        'seed': 0,
        'occlusion_min': 0.2,
        'occlusion_max': 0.7,
        'train_fraction': 2783 / 3538,
        'shapes': ['rectangle', 'ellipse', 'tshirt'],
        'textures': ['flat', 'stripes', 'checker'],
    },
    'model': {
        'codec_mode': 'fixed',
        'codec_width': 8,
        'gol_channels': [8, 16, 32, 32, 32],
        'gol_mapping_channels': 32,
        'gol_head_bias': True,
        'unet_channels': [16, 32, 32],
        'unet_time_dim': 32,
        'unet_attention_levels': [2],
        'timesteps': 200,
        'beta_start': 1e-4,
        'beta_end': 0.02,
        'rescale_betas': True,
        'init_seed': 0,
    },
    'train': {
        'stage': 'joint',
        'ablation': 'gol+locc',
        'trainable': 'all',
        'steps': 500,
        'batch_size': 8,
        'learning_rate': 1e-4,
        'beta1': 0.9,
        'beta2': 0.999,
        'eps': 1e-8,
        'weight_decay': 1e-2,
        'lambda2': 0.1,
        'p_uncond': 0.1,
        'squared_locc': False,
        'codec_fit_steps': 200,
        'seed': 0,
        'log_every': 25,
        'checkpoint_every': 0,
    },
    'sample': {
        'scale': 2.5,
        'sampler': 'ancestral',
        'ddim_steps': 50,
        'seed': 0,
        'paste_unmasked': True,
    },
    'eval': {
        'lambda1': 3.0,
        'band_radius': 3,
        'norm': 'per-pixel',
    },
}

_CHOICES = {
    'model.codec_mode': {'fixed', 'learned'},
    'train.stage': {'joint', 'gol'},
    'train.ablation': {'base', 'gol', 'gol+locc'},
    'train.trainable': {'all', 'gol+attention'},
    'sample.sampler': {'ancestral', 'ddim'},
    'eval.norm': {'raw', 'per-pixel'},
}


def _check_type(path: str, default: Any, value: Any):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif isinstance(default, list):
        ok = isinstance(value, list)
    else:
        ok = isinstance(value, type(default))
    if not ok:
        raise ConfigurationError(
            f"Config key '{path}' expects {type(default).__name__}, got {type(value).__name__}",
            code='LFT-E202',
            context={'key': path},
        )


def _merge(base: Dict[str, Any], override: Dict[str, Any], prefix: str = '') -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        path = f"{prefix}{key}"
        if key not in base:
            raise ConfigurationError(
                f"Unknown config key '{path}'",
                code='LFT-E201',
                context={'key': path},
                suggestions=[f"Valid keys here: {', '.join(sorted(base))}"],
            )
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigurationError(f"Config section '{path}' must be an object", code='LFT-E202')
            merged[key] = _merge(base[key], value, prefix=f"{path}.")
        else:
            _check_type(path, base[key], value)
            merged[key] = float(value) if isinstance(base[key], float) else copy.deepcopy(value)
    return merged


def _require(condition: bool, path: str, message: str):
    if not condition:
        raise ConfigurationError(f"Config key '{path}' {message}", code='LFT-E203', context={'key': path})


def validate_run_config(config: Dict[str, Any]):
    """
    Check value ranges of a merged run configuration.

    Raises:
        ConfigurationError: naming the first offending key
    """
    for path, choices in _CHOICES.items():
        section, key = path.split('.')
        _require(config[section][key] in choices, path, f"must be one of {sorted(choices)}")

    data, model, train, sample, ev = (config[k] for k in ('data', 'model', 'train', 'sample', 'eval'))
    _require(data['image_size'] > 0 and data['image_size'] % 32 == 0, 'data.image_size', "must be a positive multiple of 32")
    _require(data['count'] >= 1, 'data.count', "must be at least 1")
    _require(0.0 <= data['occlusion_min'] <= data['occlusion_max'] < 1.0, 'data.occlusion_min',
             "and data.occlusion_max must satisfy 0 <= min <= max < 1")
    _require(0.0 < data['train_fraction'] < 1.0, 'data.train_fraction', "must lie in (0, 1)")
    _require(set(data['shapes']) <= {'rectangle', 'ellipse', 'tshirt'} and data['shapes'], 'data.shapes',
             "must be a non-empty subset of rectangle, ellipse, tshirt")
    _require(set(data['textures']) <= {'flat', 'stripes', 'checker'} and data['textures'], 'data.textures',
             "must be a non-empty subset of flat, stripes, checker")

    _require(len(model['gol_channels']) == 5 and all(isinstance(c, int) and c > 0 for c in model['gol_channels']),
             'model.gol_channels', "must list 5 positive channel counts")
    _require(model['codec_width'] > 0, 'model.codec_width', "must be positive")
    _require(model['gol_mapping_channels'] > 0, 'model.gol_mapping_channels', "must be positive")
    levels = len(model['unet_channels'])
    _require(levels >= 1 and all(isinstance(c, int) and c > 0 for c in model['unet_channels']),
             'model.unet_channels', "must list positive channel counts")
    _require(model['unet_time_dim'] > 0 and model['unet_time_dim'] % 2 == 0, 'model.unet_time_dim',
             "must be a positive even number")
    _require(all(isinstance(lv, int) and 0 <= lv < levels for lv in model['unet_attention_levels']),
             'model.unet_attention_levels', f"must be level indices in [0, {levels - 1}]")
    multiple = 2 ** (levels - 1)
    _require((data['image_size'] // 8) % multiple == 0, 'model.unet_channels',
             f"has {levels} levels, so data.image_size / 8 must be a multiple of {multiple}")
    _require(model['timesteps'] >= 2, 'model.timesteps', "must be at least 2")
    _require(0.0 < model['beta_start'] < model['beta_end'] < 1.0, 'model.beta_start',
             "and model.beta_end must satisfy 0 < start < end < 1")
    if model['rescale_betas']:
        _require(model['beta_end'] * 1000.0 / model['timesteps'] < 1.0, 'model.beta_end',
                 "rescaled to the step count must stay below 1")

    _require(train['steps'] >= 0, 'train.steps', "must be non-negative")
    _require(train['batch_size'] >= 1, 'train.batch_size', "must be at least 1")
    _require(train['learning_rate'] > 0.0, 'train.learning_rate', "must be positive")
    _require(0.0 <= train['beta1'] < 1.0 and 0.0 <= train['beta2'] < 1.0, 'train.beta1', "and train.beta2 must lie in [0, 1)")
    _require(train['eps'] > 0.0, 'train.eps', "must be positive")
    _require(train['weight_decay'] >= 0.0, 'train.weight_decay', "must be non-negative")
    _require(train['lambda2'] >= 0.0, 'train.lambda2', "must be non-negative")
    _require(0.0 <= train['p_uncond'] <= 1.0, 'train.p_uncond', "must lie in [0, 1]")
    _require(train['codec_fit_steps'] >= 0, 'train.codec_fit_steps', "must be non-negative")
    _require(train['log_every'] >= 1, 'train.log_every', "must be at least 1")
    _require(train['checkpoint_every'] >= 0, 'train.checkpoint_every', "must be non-negative")

    _require(sample['scale'] >= 0.0, 'sample.scale', "must be non-negative")
    _require(1 <= sample['ddim_steps'] <= model['timesteps'], 'sample.ddim_steps', "must lie in [1, model.timesteps]")

    _require(ev['lambda1'] >= 0.0, 'eval.lambda1', "must be non-negative")
    _require(ev['band_radius'] >= 1, 'eval.band_radius', "must be at least 1")


def build_run_config(overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Merge `overrides` onto the defaults and validate the result."""
    config = _merge(DEFAULT_RUN_CONFIG, overrides or {})
    validate_run_config(config)
    return config


def load_run_config(path: Optional[str] = None) -> Dict[str, Any]:
    """
    Load a run configuration document

    Args:
        path: JSON file with any subset of the default sections; None uses the defaults

    Returns:
        Dict[str, Any]: the effective, validated configuration
    """
    if path is None:
        return build_run_config()
    if not os.path.isfile(path):
        raise ConfigurationError(f"Config file not found: {path}", code='LFT-E200')
    try:
        with open(path, 'r', encoding='utf-8') as f:
            user_config = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Config file {path} is not valid JSON: {e}", code='LFT-E200') from e
    if not isinstance(user_config, dict):
        raise ConfigurationError(f"Config file {path} must hold a JSON object", code='LFT-E200')
    config = build_run_config(user_config)
    logger.info(f"Loaded configuration from {path}")
    return config


def thread_cap() -> int:
    """Worker count for parallel evaluation, capped by LAYERFIT_THREADS when set."""
    raw = os.environ.get(CONFIG['THREADS_ENV'])
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            logger.warning(f"Ignoring non-integer {CONFIG['THREADS_ENV']}={raw!r}")
    return CONFIG['DEFAULT_THREADS']
