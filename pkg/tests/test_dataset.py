import filecmp
import os

import numpy as np
import pytest

from tryon.dataset.quadruplet import IMAGE_ROLES, MASK_ROLES, ROLE_FILES, Batch, check_invariants
from tryon.dataset.storage import load, load_report, read_manifest, save, write_image
from tryon.dataset.synth import SynthConfig, generate, generate_sample, split_assignment
from tryon.error_handling import ConfigurationError, DataError, InputError


class TestSynth:
    def test_samples_satisfy_invariants(self, tiny_samples):
        for sample in tiny_samples:
            assert check_invariants(sample) == []
            low, high = SynthConfig().occlusion_range
            assert low <= sample.meta["occlusion"] <= high
            assert sample.inner_visibility.any()
            assert (sample.layer_inner * sample.layer_outer).any()

    def test_deterministic_per_seed_and_index(self):
        config = SynthConfig(size=32, seed=3)
        first, second = generate_sample(config, 4), generate_sample(config, 4)
        for role in IMAGE_ROLES + MASK_ROLES:
            np.testing.assert_array_equal(first.role(role), second.role(role))
        other = generate_sample(config, 5)
        assert not np.array_equal(first.person, other.person)

    def test_index_does_not_depend_on_count(self):
        config = SynthConfig(size=32, seed=9)
        few, many = generate(config, 2, progress=False), generate(config, 3, progress=False)
        np.testing.assert_array_equal(few[1].person, many[1].person)

    def test_invariant_check_reports_violations(self, tiny_samples):
        sample = tiny_samples[0]
        broken = type(sample)(**{**sample.__dict__, "agnostic": sample.person.copy()})
        assert any("agnostic" in p for p in check_invariants(broken))

    def test_split_assignment(self):
        splits = split_assignment(100, 0, 0.8)
        assert splits.count("train") == 80
        assert splits == split_assignment(100, 0, 0.8)
        assert split_assignment(2, 0, 0.99).count("test") == 1
        assert split_assignment(1, 0, 0.5) == ["train"]

    @pytest.mark.parametrize("kwargs", [{"size": 48}, {"size": 0}, {"occlusion_range": (0.6, 0.2)}])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ConfigurationError):
            SynthConfig(**kwargs)

    def test_generate_needs_a_sample(self):
        with pytest.raises(ConfigurationError):
            generate(SynthConfig(size=32), 0, progress=False)

    def test_batch_stack(self, tiny_samples):
        batch = Batch.stack(tiny_samples[:3])
        assert len(batch) == 3
        assert batch.person.shape == (3, 3, 32, 32)
        assert batch.upper_mask.shape == (3, 32, 32)

    @pytest.mark.slow
    def test_thousand_samples(self):
        samples = generate(SynthConfig(size=64, seed=0), 1000, progress=False)
        assert all(check_invariants(s) == [] for s in samples)
        inner = np.stack([s.layer_inner > 0 for s in samples])
        outer = np.stack([s.layer_outer > 0 for s in samples])
        occluded = (inner & outer).sum(axis=(1, 2)) / inner.sum(axis=(1, 2))
        assert occluded.min() >= 0.2 and occluded.max() <= 0.7
        np.testing.assert_allclose(occluded, [s.meta["occlusion"] for s in samples])
        visible = np.stack([s.inner_visibility > 0 for s in samples]).sum(axis=(1, 2)) / inner.sum(axis=(1, 2))
        np.testing.assert_allclose(visible, 1.0 - occluded)


class TestStorage:
    def test_roundtrip(self, dataset_dir, tiny_samples):
        loaded = {s.id: s for s in load(dataset_dir, strict=True)}
        assert set(loaded) == {s.id for s in tiny_samples}
        for sample in tiny_samples:
            restored = loaded[sample.id]
            assert restored.split == sample.split
            for role in IMAGE_ROLES + MASK_ROLES:
                np.testing.assert_array_equal(restored.role(role), sample.role(role))

    def test_split_filter(self, dataset_dir, tiny_samples):
        test_ids = {s.id for s in tiny_samples if s.split == "test"}
        assert {s.id for s in load(dataset_dir, split="test")} == test_ids

    def test_save_is_byte_identical(self, tmp_path, tiny_samples):
        first, second = os.path.join(str(tmp_path), "a"), os.path.join(str(tmp_path), "b")
        save(tiny_samples[:2], first, seed=7)
        save(tiny_samples[:2], second, seed=7)
        for sample in tiny_samples[:2]:
            names = list(ROLE_FILES.values())
            match, mismatch, errors = filecmp.cmpfiles(os.path.join(first, sample.split, sample.id),
                                                       os.path.join(second, sample.split, sample.id),
                                                       names, shallow=False)
            assert sorted(match) == sorted(names) and not mismatch and not errors
        assert read_manifest(first) == read_manifest(second)

    def test_missing_role_file(self, tmp_path, tiny_samples):
        root = str(tmp_path)
        save(tiny_samples[:2], root)
        victim = tiny_samples[0]
        os.remove(os.path.join(root, victim.split, victim.id, ROLE_FILES["inner_crop"]))
        samples, failures = load_report(root)
        assert [s.id for s in samples] == [tiny_samples[1].id]
        assert "inner_crop" in failures[victim.id]
        with pytest.raises(DataError) as info:
            load(root, strict=True)
        assert info.value.code == "LFT-E302"

    def test_corrupt_png_only_drops_that_sample(self, tmp_path, tiny_samples):
        root = str(tmp_path)
        save(tiny_samples[:3], root)
        victim = tiny_samples[0]
        with open(os.path.join(root, victim.split, victim.id, ROLE_FILES["person"]), "wb") as f:
            f.write(b"not a png")
        samples, failures = load_report(root)
        assert sorted(s.id for s in samples) == sorted(s.id for s in tiny_samples[1:3])
        assert list(failures) == [victim.id]
        assert "person" in failures[victim.id]

    def test_unrelated_files_are_ignored(self, tmp_path, tiny_samples):
        root = str(tmp_path)
        save(tiny_samples[:3], root)
        sample = tiny_samples[1]
        with open(os.path.join(root, "notes.txt"), "w") as f:
            f.write("scratch")
        os.makedirs(os.path.join(root, sample.split, "s99999"))
        with open(os.path.join(root, sample.split, sample.id, "thumbnail.jpg"), "wb") as f:
            f.write(b"\xff\xd8")
        samples, failures = load_report(root)
        assert len(samples) == 3 and not failures
        restored = {s.id: s for s in samples}[sample.id]
        np.testing.assert_array_equal(restored.person, sample.person)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DataError) as info:
            load(str(tmp_path))
        assert info.value.code == "LFT-E301"

    def test_refuses_unquantised_images(self, tmp_path):
        with pytest.raises(InputError):
            write_image(os.path.join(str(tmp_path), "x.png"), np.full((3, 4, 4), 0.5))
