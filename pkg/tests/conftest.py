"""
Shared fixtures for the layerfit test suite.

Long-running acceptance checks are marked `slow` and only run with
LAYERFIT_SLOW=1.
"""

import copy
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "src"))

from config import CONFIG, build_run_config  # noqa: E402
from tryon.dataset.storage import save  # noqa: E402
from tryon.dataset.synth import SynthConfig, generate  # noqa: E402

TINY_OVERRIDES = {
    "data": {"image_size": 32, "count": 6},
    "model": {
        "gol_channels": [2, 2, 3, 3, 3],
        "gol_mapping_channels": 3,
        "unet_channels": [4, 4],
        "unet_time_dim": 4,
        "unet_attention_levels": [1],
        "timesteps": 50,
    },
    "train": {"steps": 3, "batch_size": 2, "codec_fit_steps": 2, "log_every": 1},
    "sample": {"ddim_steps": 4},
}


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long acceptance run, enabled with LAYERFIT_SLOW=1")


def pytest_collection_modifyitems(config, items):
    if os.environ.get(CONFIG["SLOW_ENV"]) == "1":
        return
    skip = pytest.mark.skip(reason=f"set {CONFIG['SLOW_ENV']}=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_overrides():
    return copy.deepcopy(TINY_OVERRIDES)


@pytest.fixture
def tiny_config(tiny_overrides):
    return build_run_config(tiny_overrides)


@pytest.fixture(scope="session")
def tiny_samples():
    return generate(SynthConfig(size=32, seed=7), 6, progress=False)


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory, tiny_samples):
    root = tmp_path_factory.mktemp("dataset")
    save(tiny_samples, str(root), config=build_run_config(copy.deepcopy(TINY_OVERRIDES)), seed=7)
    return str(root)
