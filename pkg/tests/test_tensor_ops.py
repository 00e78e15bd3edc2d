import numpy as np
import pytest

from tryon.error_handling import ConfigurationError, InputError, UsageError
from tryon.numeric import ops
from tryon.numeric.tensor import Tensor, backward, no_grad


class TestTape:
    def test_reused_tensor_sums_gradients(self):
        x = Tensor([1.0, -2.0, 3.0], requires_grad=True)
        backward(ops.sum(x * x + x))
        np.testing.assert_allclose(x.grad, 2.0 * x.data + 1.0)

    def test_broadcast_gradient_is_reduced(self):
        a = Tensor(np.ones((2, 3)), requires_grad=True)
        b = Tensor(np.ones(3), requires_grad=True)
        backward(ops.sum(a + b))
        np.testing.assert_array_equal(b.grad, [2.0, 2.0, 2.0])
        assert a.grad.shape == (2, 3)

    def test_leaf_gradients_accumulate(self):
        x = Tensor([2.0], requires_grad=True)
        backward(ops.sum(x * 3.0))
        backward(ops.sum(x * 3.0))
        np.testing.assert_array_equal(x.grad, [6.0])
        x.zero_grad()
        assert x.grad is None

    def test_non_scalar_backward_is_rejected(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(UsageError) as info:
            backward(x * 2.0)
        assert info.value.code == "LFT-E702"

    def test_no_grad_skips_recording(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with no_grad():
            y = x * 2.0
        assert not y.requires_grad
        assert (x * 2.0).requires_grad

    def test_constant_inputs_do_not_record(self):
        y = Tensor(np.ones(2)) + np.ones(2)
        assert not y.requires_grad
        assert y._parents == ()


class TestOps:
    def test_conv2d_of_ones(self):
        out = ops.conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))))
        assert out.shape == (1, 1, 1, 1)
        assert out.item() == 9.0

    @pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1)])
    def test_conv2d_matches_loop(self, rng, stride, padding):
        x = rng.normal(size=(1, 2, 5, 5))
        w = rng.normal(size=(3, 2, 3, 3))
        padded = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
        size = (5 + 2 * padding - 3) // stride + 1
        expected = np.zeros((1, 3, size, size))
        for o in range(3):
            for i in range(size):
                for j in range(size):
                    for c in range(2):
                        for ki in range(3):
                            for kj in range(3):
                                expected[0, o, i, j] += w[o, c, ki, kj] * padded[0, c, i * stride + ki, j * stride + kj]
        out = ops.conv2d(Tensor(x), Tensor(w), stride=stride, padding=padding)
        np.testing.assert_allclose(out.data, expected, rtol=0.0, atol=1e-12)

    def test_conv2d_identity_kernel(self, rng):
        x = rng.normal(size=(2, 1, 4, 4))
        np.testing.assert_array_equal(ops.conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1)))).data, x)

    def test_conv2d_output_size(self):
        x = Tensor(np.zeros((2, 3, 6, 6)))
        w = Tensor(np.zeros((5, 3, 3, 3)))
        assert ops.conv2d(x, w, padding=1).shape == (2, 5, 6, 6)
        assert ops.conv2d(x, w, stride=2, padding=1).shape == (2, 5, 3, 3)

    def test_conv2d_channel_mismatch(self):
        with pytest.raises(ConfigurationError):
            ops.conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))

    def test_conv2d_kernel_larger_than_input(self):
        with pytest.raises(ConfigurationError):
            ops.conv2d(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 3, 3))))

    def test_concat_shape_mismatch(self):
        with pytest.raises(InputError) as info:
            ops.concat([np.zeros((1, 4, 2, 2)), np.zeros((1, 4, 3, 2))], axis=-1)
        assert info.value.code == "LFT-E803"

    def test_concat_width_then_slice_roundtrip(self):
        a, b = np.arange(8.0).reshape(1, 2, 2, 2), -np.arange(8.0).reshape(1, 2, 2, 2)
        joined = ops.concat([a, b], axis=-1)
        assert joined.shape == (1, 2, 2, 4)
        np.testing.assert_array_equal(ops.slice_axis(joined, -1, 2, 4).data, b)

    def test_matmul_shape_mismatch(self):
        with pytest.raises(ConfigurationError):
            ops.matmul(np.zeros((2, 3)), np.zeros((2, 3)))

    def test_softmax_rows_sum_to_one(self, rng):
        y = ops.softmax(Tensor(rng.normal(size=(3, 5)) * 50.0))
        np.testing.assert_allclose(y.data.sum(axis=-1), 1.0)

    def test_l2_norm_gradient_at_zero(self):
        x = Tensor(np.zeros((2, 3)), requires_grad=True)
        backward(ops.sum(ops.l2_norm(x, axis=1)))
        np.testing.assert_array_equal(x.grad, np.zeros((2, 3)))

    def test_clip_blocks_gradient_outside(self):
        x = Tensor([-0.5, 0.5, 1.5], requires_grad=True)
        backward(ops.sum(ops.clip(x, 0.0, 1.0)))
        np.testing.assert_array_equal(x.grad, [0.0, 1.0, 0.0])

    def test_upsample_nearest(self):
        x = Tensor(np.arange(4.0).reshape(1, 1, 2, 2), requires_grad=True)
        y = ops.upsample_nearest(x, 2)
        assert y.shape == (1, 1, 4, 4)
        assert y.data[0, 0, 3, 3] == 3.0
        backward(ops.sum(y))
        np.testing.assert_array_equal(x.grad, np.full((1, 1, 2, 2), 4.0))

    def test_mean_over_axes(self):
        x = Tensor(np.arange(24.0).reshape(2, 3, 4))
        np.testing.assert_allclose(ops.mean(x, axis=(0, 2)).data, x.data.mean(axis=(0, 2)))
