import numpy as np
import pytest

from tryon.error_handling import InputError, UsageError
from tryon.gmf.schedule import NoiseSchedule, forward_noise
from tryon.gmf.unet import DenoiserUNet, UNetConfig, timestep_embedding
from tryon.numeric import ops
from tryon.numeric.layers import ParameterStore
from tryon.numeric.tensor import Tensor


class TestNoiseSchedule:
    def test_default_schedule_reaches_noise(self):
        schedule = NoiseSchedule.linear(200)
        assert schedule.T == 200
        assert np.all(np.diff(schedule.betas) > 0.0)
        assert schedule.betas[0] > 0.0 and schedule.betas[-1] < 1.0
        assert schedule.alpha_bar[-1] < 0.05
        assert schedule.betas[0] == pytest.approx(1e-4 * 5)
        assert schedule.betas[-1] == pytest.approx(0.02 * 5)

    def test_unscaled_schedule_keeps_signal(self):
        assert NoiseSchedule.linear(200, rescale=False).alpha_bar[-1] >= 0.05

    def test_alpha_bar_prev(self):
        schedule = NoiseSchedule.linear(50)
        assert schedule.alpha_bar_prev(1) == 1.0
        assert schedule.alpha_bar_prev(3) == schedule.alpha_bar[1]

    @pytest.mark.parametrize("t", [0, 51, [1, 0], np.array([2.0])])
    def test_timesteps_out_of_range(self, t):
        with pytest.raises(UsageError) as info:
            NoiseSchedule.linear(50).check_timesteps(t)
        assert info.value.code == "LFT-E704"


class TestForwardNoise:
    def test_formula_with_given_noise(self, rng):
        schedule = NoiseSchedule.linear(50)
        y0 = rng.normal(size=(2, 4, 2, 6))
        noise = rng.normal(size=y0.shape)
        y_t, eps = forward_noise(y0, np.array([1, 50]), schedule, noise=noise)
        for k, t in enumerate((1, 50)):
            a = schedule.alpha_bar[t - 1]
            np.testing.assert_allclose(y_t.data[k], np.sqrt(a) * y0[k] + np.sqrt(1.0 - a) * noise[k])
        np.testing.assert_array_equal(eps, noise)

    @pytest.mark.parametrize("t", [1, 25, 200])
    def test_monte_carlo_variance(self, t):
        schedule = NoiseSchedule.linear(200)
        y_t, _ = forward_noise(np.zeros(200_000), t, schedule, rng=np.random.default_rng(t))
        expected = 1.0 - schedule.alpha_bar[t - 1]
        assert abs(y_t.data.var() / expected - 1.0) < 0.05

    def test_monte_carlo_mean(self):
        schedule = NoiseSchedule.linear(200)
        y_t, _ = forward_noise(np.full(200_000, 2.0), 40, schedule, rng=np.random.default_rng(0))
        expected = np.sqrt(schedule.alpha_bar[39]) * 2.0
        assert abs(y_t.data.mean() / expected - 1.0) < 0.02

    def test_gradient_flows_to_y0(self):
        schedule = NoiseSchedule.linear(50)
        y0 = Tensor(np.ones(3), requires_grad=True)
        y_t, _ = forward_noise(y0, 10, schedule, noise=np.zeros(3))
        ops.sum(y_t).backward()
        np.testing.assert_allclose(y0.grad, np.sqrt(schedule.alpha_bar[9]))

    def test_batch_mismatch(self):
        with pytest.raises(UsageError):
            forward_noise(np.zeros((2, 3)), np.array([1, 2, 3]), NoiseSchedule.linear(50), noise=np.zeros((2, 3)))


class TestUNet:
    @pytest.fixture
    def unet(self, rng):
        return DenoiserUNet(ParameterStore(), UNetConfig(channels=(4, 6, 6), time_dim=8, attention_levels=(1, 2)), rng)

    def test_output_shape_and_zero_start(self, unet, rng):
        out = unet(rng.normal(size=(2, 9, 8, 24)), np.array([3, 7]))
        assert out.shape == (2, 4, 8, 24)
        np.testing.assert_array_equal(out.data, 0.0)

    def test_input_checks(self, unet):
        with pytest.raises(InputError):
            unet(np.zeros((1, 8, 8, 24)), [1])
        with pytest.raises(InputError) as info:
            unet(np.zeros((1, 9, 6, 24)), [1])
        assert info.value.code == "LFT-E802"

    def test_attention_params(self, unet):
        ids = [p.id for p in unet.attention_params]
        assert ids and all(".attn." in i for i in ids)
        assert any(i.startswith("gmf.unet.down1.attn") for i in ids)
        assert any(i.startswith("gmf.unet.up1.attn") for i in ids)

    def test_timestep_embedding(self):
        emb = timestep_embedding([0, 5], 8)
        assert emb.shape == (2, 8)
        np.testing.assert_array_equal(emb[0, :4], 0.0)
        np.testing.assert_array_equal(emb[0, 4:], 1.0)
