import numpy as np
import pytest

from config import build_run_config
from tryon.numeric import ops
from tryon.numeric.gradcheck import OP_SUITES, check_gradients, relative_error, run_suite
from tryon.numeric.tensor import Tensor, make_result
from tryon.verify import NETWORK_SUITES, all_suites, network_suites, run_all, suite_config, summarize


def test_relative_error_floor():
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(1e-9, 0.0) == pytest.approx(1e-3)
    assert relative_error(2.0, 1.0) == pytest.approx(0.5)


@pytest.mark.parametrize("name", sorted(OP_SUITES))
def test_op_suites(name):
    for result in run_suite(name, OP_SUITES[name], seeds=range(3)):
        assert result.passed, result.to_dict()


@pytest.mark.parametrize("name", sorted(NETWORK_SUITES))
def test_network_suites(name):
    for result in run_suite(name, NETWORK_SUITES[name], seeds=[0], max_coords=3):
        assert result.passed, result.to_dict()


def test_a_wrong_gradient_is_caught(rng):
    def bad_square(x):
        return make_result(x.data ** 2, (x,), lambda g: (g * x.data,), "bad_square")

    x = Tensor(rng.normal(size=5), requires_grad=True)
    error, worst, checked = check_gradients(lambda: ops.sum(bad_square(x)), {"x": x})
    assert error > 0.1
    assert worst.startswith("x[")
    assert checked == 5


def test_summarize_groups_by_suite():
    results = run_all(seeds=[0, 1], only=["add", "silu"])
    summary = summarize(results)
    assert set(summary) == {"add", "silu"}
    assert summary["add"]["seeds"] == 2
    assert all(entry["passed"] for entry in summary.values())


def test_every_suite_is_registered():
    suites = all_suites()
    for name in ("conv2d", "softmax", "residual_block", "gol", "unet", "pipeline_gol", "codec_learned"):
        assert name in suites


def test_suite_config_shrinks_images_only():
    assert suite_config()["data"]["image_size"] == 32
    config = build_run_config({"model": {"unet_channels": [2, 3, 3, 3], "unet_attention_levels": [3]}})
    shrunk = suite_config(config)
    assert shrunk["data"]["image_size"] == 64
    assert shrunk["model"] == config["model"]
    assert suite_config(build_run_config({"data": {"image_size": 128}}))["data"]["image_size"] == 32


def test_network_suites_follow_the_config():
    config = build_run_config({"model": {"gol_channels": [3, 3, 3, 3, 5], "gol_mapping_channels": 4,
                                         "unet_channels": [2, 3, 3, 3], "unet_attention_levels": [3],
                                         "unet_time_dim": 4, "timesteps": 50}})
    suites = network_suites(config)
    _, tensors = suites["gol"](np.random.default_rng(0))
    assert tensors["gol.outer.stage4.down.weight"].shape == (5, 3, 3, 3)
    _, tensors = suites["unet"](np.random.default_rng(0))
    assert tensors["x"].shape == (1, 9, 8, 24)
    assert any(name.startswith("gmf.unet.down3.attn") for name in tensors)
    for result in run_suite("unet", suites["unet"], seeds=[0], max_coords=2):
        assert result.passed, result.to_dict()


@pytest.mark.slow
def test_full_suite_twenty_seeds():
    results = run_all(seeds=range(20))
    failed = [r.to_dict() for r in results if not r.passed]
    assert not failed
    assert np.isfinite([r.max_rel_error for r in results]).all()
