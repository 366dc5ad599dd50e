import numpy as np
import numpy.testing as npt
import pytest
from scipy import stats

from augnet.augment import (
    AffineRanges,
    AffineSpec,
    affine_apply,
    augment_dataset_traditional,
    concat_pair,
    load_style_bank,
    sample_affine_spec,
    sample_pair,
    sample_pair_batch,
)
from augnet.data import DataError, write_image
from augnet.synth import make_style_bank

from conftest import make_dataset


class TestAffineApply:
    def test_identity_is_exact(self, rng):
        img = rng.uniform(size=(28, 28, 1))
        npt.assert_array_equal(affine_apply(img, AffineSpec.identity()), img)

    def test_identity_exact_rgb_even_and_odd(self, rng):
        for shape in ((8, 8, 3), (7, 9, 3)):
            img = rng.uniform(size=shape)
            npt.assert_array_equal(affine_apply(img, AffineSpec.identity()), img)

    def test_horizontal_flip(self):
        img = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(2, 2, 1)
        out = affine_apply(img, AffineSpec(flip_h=True))
        npt.assert_array_equal(out.reshape(2, 2), [[2.0, 1.0], [4.0, 3.0]])

    def test_double_flip_is_identity(self, rng):
        img = rng.uniform(size=(6, 6, 3))
        spec = AffineSpec(flip_h=True)
        npt.assert_allclose(affine_apply(affine_apply(img, spec), spec), img, atol=1e-12)

    def test_rotate_90_four_times(self, rng):
        img = rng.uniform(size=(9, 9, 1))
        spec = AffineSpec(rotate=90.0)
        out = img
        for _ in range(4):
            out = affine_apply(out, spec)
        npt.assert_allclose(out[2:-2, 2:-2], img[2:-2, 2:-2], atol=1e-6)

    def test_shift_moves_content(self):
        img = np.zeros((8, 8, 1))
        img[4, 4, 0] = 1.0
        out = affine_apply(img, AffineSpec(shift=(2.0, 0.0)))  # dx=+2
        assert out[4, 6, 0] == pytest.approx(1.0)

    def test_hue_shift_clamps(self):
        img = np.full((4, 4, 3), 0.95)
        out = affine_apply(img, AffineSpec(hue_shift=(0.2, -0.2, 0.0)))
        npt.assert_allclose(out[:, :, 0], 1.0)
        npt.assert_allclose(out[:, :, 1], 0.75)
        npt.assert_allclose(out[:, :, 2], 0.95)

    def test_hue_on_grayscale_rejected(self):
        with pytest.raises(ValueError):
            affine_apply(np.zeros((4, 4, 1)), AffineSpec(hue_shift=(0.1, 0.1, 0.1)))

    def test_output_stays_in_range(self, rng):
        img = rng.uniform(size=(10, 10, 3))
        spec = sample_affine_spec(rng, (10, 10), 3)
        out = affine_apply(img, spec)
        assert out.min() >= 0.0 and out.max() <= 1.0


class TestSampleAffineSpec:
    def test_deterministic(self):
        a = sample_affine_spec(np.random.default_rng(5), (28, 28), 3)
        b = sample_affine_spec(np.random.default_rng(5), (28, 28), 3)
        assert a == b

    def test_flip_frequency(self):
        rng = np.random.default_rng(0)
        flips = sum(sample_affine_spec(rng, (8, 8), 1).flip_h for _ in range(10_000))
        assert abs(flips / 10_000 - 0.5) < 0.02

    def test_ranges_respected(self):
        rng = np.random.default_rng(1)
        ranges = AffineRanges()
        for _ in range(500):
            s = sample_affine_spec(rng, (20, 40), 3, ranges)
            assert ranges.zoom_lo <= s.zoom <= ranges.zoom_hi
            assert -ranges.max_rotate <= s.rotate <= ranges.max_rotate
            assert abs(s.shift[0]) <= 0.1 * 40 and abs(s.shift[1]) <= 0.1 * 20
            assert all(abs(v) <= ranges.max_shear for v in s.shear)
            assert all(abs(v) <= ranges.max_hue for v in s.hue_shift)

    def test_hue_disabled_for_grayscale(self):
        s = sample_affine_spec(np.random.default_rng(2), (8, 8), 1)
        assert s.hue_shift is None


class TestTraditionalAugmentation:
    def test_doubles_dataset(self):
        ds = make_dataset(n_per_class=10)
        out = augment_dataset_traditional(ds, np.random.default_rng(0))
        assert len(out) == 2 * len(ds) == 40

    def test_originals_preserved_and_labels_copied(self):
        ds = make_dataset(n_per_class=5)
        out = augment_dataset_traditional(ds, np.random.default_rng(0))
        npt.assert_array_equal(out.images[: len(ds)], ds.images)
        npt.assert_array_equal(out.labels[: len(ds)], ds.labels)
        npt.assert_array_equal(out.labels[len(ds):], ds.labels)

    def test_deterministic_under_seed(self):
        ds = make_dataset(n_per_class=4, c=3)
        a = augment_dataset_traditional(ds, np.random.default_rng(9))
        b = augment_dataset_traditional(ds, np.random.default_rng(9))
        npt.assert_array_equal(a.images, b.images)
        assert a.ids == b.ids

    def test_empty_rejected(self):
        ds = make_dataset(n_per_class=1)
        empty = ds.subset(np.array([], dtype=int))
        with pytest.raises(DataError):
            augment_dataset_traditional(empty, np.random.default_rng(0))


class TestStyleBank:
    def test_load_doubles_and_is_deterministic(self, tmp_path):
        ds = make_dataset(n_per_class=4, h=8, w=8, c=3, seed=5)
        make_style_bank(tmp_path / "bank", ds, variants_per_image=3, seed=1)
        a = load_style_bank(ds, tmp_path / "bank", np.random.default_rng(2))
        b = load_style_bank(ds, tmp_path / "bank", np.random.default_rng(2))
        assert len(a) == 2 * len(ds)
        npt.assert_array_equal(a.images, b.images)
        npt.assert_array_equal(a.labels[len(ds):], ds.labels)

    def test_single_variant_is_forced(self, tmp_path):
        ds = make_dataset(n_per_class=2, h=8, w=8, c=3)
        make_style_bank(tmp_path / "bank", ds, variants_per_image=1, seed=0)
        out1 = load_style_bank(ds, tmp_path / "bank", np.random.default_rng(0))
        out2 = load_style_bank(ds, tmp_path / "bank", np.random.default_rng(123))
        npt.assert_array_equal(out1.images, out2.images)

    def test_missing_ids_reported(self, tmp_path):
        ds = make_dataset(n_per_class=3, h=8, w=8, c=3)
        partial = ds.subset(np.arange(4))
        make_style_bank(tmp_path / "bank", partial, seed=0)
        with pytest.raises(DataError, match="missing"):
            load_style_bank(ds, tmp_path / "bank", np.random.default_rng(0))

    def test_missing_manifest(self, tmp_path):
        ds = make_dataset(n_per_class=2)
        with pytest.raises(DataError, match="manifest"):
            load_style_bank(ds, tmp_path, np.random.default_rng(0))

    def test_wrong_size_variant_rejected(self, tmp_path):
        ds = make_dataset(n_per_class=1, h=8, w=8, c=3)
        bank = tmp_path / "bank"
        bank.mkdir()
        write_image(bank / "v.png", np.zeros((4, 4, 3)))
        lines = [f"{i}\ts\tv.png" for i in ds.ids]
        (bank / "manifest.tsv").write_text("\n".join(lines) + "\n")
        with pytest.raises(DataError, match="shape"):
            load_style_bank(ds, bank, np.random.default_rng(0))


class TestPairSampler:
    def test_singleton_class_forced(self):
        ds = make_dataset(n_per_class=1)
        pair = sample_pair(ds, 0, np.random.default_rng(0))
        npt.assert_array_equal(pair.img_a, pair.img_b)
        npt.assert_array_equal(pair.img_a, pair.target)

    def test_empty_class_rejected(self):
        ds = make_dataset(n_per_class=2)
        only_zero = ds.subset(np.flatnonzero(ds.labels == 0))
        with pytest.raises(DataError):
            sample_pair(only_zero, 1, np.random.default_rng(0))

    def test_ordered_pair_uniformity_chi_square(self):
        # n=5 members, 1e5 draws over 25 ordered pairs, accept at p > 0.01
        ds = make_dataset(n_per_class=5)
        members = ds.images[ds.labels == 0]
        keys = {arr.tobytes(): i for i, arr in enumerate(members)}
        rng = np.random.default_rng(31)
        counts = np.zeros((5, 5))
        for _ in range(100_000):
            pair = sample_pair(ds, 0, rng)
            counts[keys[pair.img_a.tobytes()], keys[pair.img_b.tobytes()]] += 1
        chi2 = ((counts - 4000.0) ** 2 / 4000.0).sum()
        p = stats.chi2.sf(chi2, df=24)
        assert p > 0.01, f"chi2={chi2:.1f} p={p:.4f}"

    def test_control_mode_duplicates_img_a(self):
        ds = make_dataset(n_per_class=6)
        rng = np.random.default_rng(3)
        for _ in range(200):
            pair = sample_pair(ds, 1, rng, control=True)
            npt.assert_array_equal(pair.img_a, pair.img_b)

    def test_target_from_same_class(self):
        ds = make_dataset(n_per_class=4)
        class_one = {a.tobytes() for a in ds.images[ds.labels == 1]}
        rng = np.random.default_rng(4)
        for _ in range(50):
            pair = sample_pair(ds, 1, rng)
            assert pair.target.tobytes() in class_one


class TestConcatPair:
    def test_rgb_concat(self, rng):
        ds = make_dataset(n_per_class=3, h=8, w=8, c=3)
        pair = sample_pair(ds, 0, rng)
        out = concat_pair(pair)
        assert out.shape == (8, 8, 6)
        npt.assert_array_equal(out[:, :, :3], pair.img_a)
        npt.assert_array_equal(out[:, :, 3:], pair.img_b)

    def test_gray_concat(self, rng):
        ds = make_dataset(n_per_class=3, h=6, w=6, c=1)
        pair = sample_pair(ds, 0, rng)
        assert concat_pair(pair).shape == (6, 6, 2)

    def test_batch_assembly(self, rng):
        ds = make_dataset(n_per_class=4, h=8, w=8, c=1)
        inputs, targets, labels = sample_pair_batch(ds, 6, rng)
        assert inputs.shape == (6, 8, 8, 2)
        assert targets.shape == (6, 8, 8, 1)
        assert set(labels) <= {0, 1}
