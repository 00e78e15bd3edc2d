import numpy as np
import pytest

from tryon.error_handling import CheckpointError, ConfigurationError, UsageError
from tryon.numeric import ops
from tryon.numeric.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from tryon.numeric.layers import ParameterStore, ResidualBlock, SelfAttention
from tryon.numeric.optim import AdamW, OptimizerState, optimizer_step
from tryon.numeric.tensor import Tensor, backward


class TestParameterStore:
    def test_duplicate_id(self):
        store = ParameterStore()
        store.create("a.weight", np.zeros(2))
        with pytest.raises(ConfigurationError):
            store.create("a.weight", np.zeros(2))

    def test_sorted_iteration_and_subset(self):
        store = ParameterStore()
        for name in ("gol.b", "codec.x", "gol.a"):
            store.create(name, np.zeros(1))
        assert [p.id for p in store] == ["codec.x", "gol.a", "gol.b"]
        assert [p.id for p in store.subset("gol.")] == ["gol.a", "gol.b"]

    def test_strict_load_reports_mismatch(self):
        store = ParameterStore()
        store.create("a", np.zeros(2))
        with pytest.raises(CheckpointError) as info:
            store.load_state_dict({"b": np.zeros(2)})
        assert info.value.code == "LFT-E604"
        store.load_state_dict({"a": np.ones(2), "b": np.zeros(2)}, strict=False)
        np.testing.assert_array_equal(store["a"].tensor.data, np.ones(2))

    def test_shape_mismatch_fails_even_when_lenient(self):
        store = ParameterStore()
        store.create("a", np.zeros(2))
        with pytest.raises(CheckpointError):
            store.load_state_dict({"a": np.zeros(3)}, strict=False)


class TestBlocks:
    def test_residual_block_starts_as_identity(self, rng):
        block = ResidualBlock(ParameterStore(), "res", 3, rng)
        x = Tensor(rng.normal(size=(1, 3, 4, 4)))
        np.testing.assert_array_equal(block(x).data, x.data)

    def test_residual_block_channel_check(self, rng):
        block = ResidualBlock(ParameterStore(), "res", 3, rng)
        with pytest.raises(ConfigurationError):
            block(Tensor(np.zeros((1, 2, 4, 4))))

    def test_attention_starts_as_identity(self, rng):
        attention = SelfAttention(ParameterStore(), "attn", 4, rng)
        x = Tensor(rng.normal(size=(2, 4, 2, 3)))
        np.testing.assert_array_equal(attention(x).data, x.data)


class TestAdamW:
    def test_single_step_by_hand(self):
        store = ParameterStore()
        param = store.create("p", np.array([1.0]))
        param.tensor.grad = np.array([1.0])
        state = OptimizerState(learning_rate=0.1, weight_decay=0.01)
        optimizer_step(state, [param])
        expected = 1.0 * (1.0 - 0.1 * 0.01) - 0.1 * 1.0 / (1.0 + 1e-8)
        assert param.tensor.data[0] == pytest.approx(expected, abs=1e-12)
        np.testing.assert_array_equal(param.tensor.grad, [0.0])

    def test_missing_gradient(self):
        param = ParameterStore().create("p", np.zeros(1))
        with pytest.raises(UsageError) as info:
            optimizer_step(OptimizerState(), [param])
        assert info.value.code == "LFT-E703"

    def test_untouched_parameters_do_not_move(self):
        store = ParameterStore()
        used = store.create("used", np.array([1.0, 2.0]))
        unused = store.create("unused", np.array([3.0]))
        optimizer = AdamW(list(store), learning_rate=0.1, weight_decay=0.1)
        backward(ops.sum(ops.mul(used.tensor, used.tensor)))
        optimizer.step()
        np.testing.assert_array_equal(unused.tensor.data, [3.0])
        assert np.all(used.tensor.data < [1.0, 2.0])

    def test_late_parameter_uses_global_step(self):
        store = ParameterStore()
        early = store.create("early", np.array([1.0]))
        late = store.create("late", np.array([1.0]))
        state = OptimizerState(learning_rate=0.1, weight_decay=0.0)
        for step in range(3):
            early.tensor.grad = np.array([1.0])
            late.tensor.grad = np.array([2.0 if step == 2 else 0.0])
            optimizer_step(state, [early, late])
        assert state.step == 3
        m_hat = 0.1 * 2.0 / (1.0 - 0.9 ** 3)
        v_hat = 0.001 * 4.0 / (1.0 - 0.999 ** 3)
        expected = 1.0 - 0.1 * m_hat / (np.sqrt(v_hat) + 1e-8)
        assert late.tensor.data[0] == pytest.approx(expected, abs=1e-12)

    def test_minimises_a_quadratic(self):
        store = ParameterStore()
        w = store.create("w", np.array([3.0, -2.0]))
        optimizer = AdamW([w], learning_rate=0.05, weight_decay=0.0)
        for _ in range(400):
            optimizer.zero_grad()
            backward(ops.sum(ops.mul(w.tensor, w.tensor)))
            optimizer.step()
        assert np.abs(w.tensor.data).max() < 0.25


class TestCheckpoint:
    def test_roundtrip_is_exact(self, tmp_path, rng):
        state = {"b.x": rng.normal(size=(2, 3)), "a": np.array(4.5), "c": rng.normal(size=5)}
        path = str(tmp_path / "m.lft")
        save_checkpoint(path, state)
        loaded = load_checkpoint(path)
        assert sorted(loaded) == sorted(state)
        for key, value in state.items():
            assert loaded[key].shape == np.asarray(value).shape
            np.testing.assert_array_equal(loaded[key], value)

    def test_header_layout(self, tmp_path):
        path = tmp_path / "m.lft"
        save_checkpoint(str(path), {"a": np.zeros(1)})
        assert path.read_bytes()[:4] == MAGIC

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError) as info:
            load_checkpoint(str(tmp_path / "none.lft"))
        assert info.value.code == "LFT-E601"

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.lft"
        path.write_bytes(b"NOPE" + bytes(8))
        with pytest.raises(CheckpointError) as info:
            load_checkpoint(str(path))
        assert info.value.code == "LFT-E602"

    def test_truncated(self, tmp_path, rng):
        path = tmp_path / "m.lft"
        save_checkpoint(str(path), {"a": rng.normal(size=10)})
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(CheckpointError) as info:
            load_checkpoint(str(path))
        assert info.value.code == "LFT-E603"
