"""Trial feature blocks: covariance, windowed means, augmented scaling."""

import numpy as np
import pytest

from bcidal.dataset import Trial
from bcidal.features import (
    KIND_AUGMENTED,
    KIND_FIRST_ORDER,
    KIND_SECOND_ORDER,
    FeatureMap,
    FeatureMapSpec,
    TrialFeature,
    first_order_block,
    second_order_block,
)


def make_trials(rng, n=6, channels=11, samples=1000):
    return [Trial(data=rng.standard_normal((channels, samples)),
                  label=1 if i % 2 == 0 else -1, index=i) for i in range(n)]


class TestSecondOrderBlock:
    def test_unit_trace_and_symmetry(self):
        rng = np.random.default_rng(1)
        b = second_order_block(rng.standard_normal((11, 1000)))
        assert b.shape == (11, 11)
        assert abs(np.trace(b) - 1.0) < 1e-12
        np.testing.assert_array_equal(b, b.T)

    def test_closed_form(self):
        b = second_order_block(np.array([[1.0, -1.0], [1.0, -1.0]]))
        np.testing.assert_allclose(b, [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)

    def test_positive_semidefinite(self):
        rng = np.random.default_rng(2)
        b = second_order_block(rng.standard_normal((5, 20)))
        assert np.min(np.linalg.eigvalsh(b)) >= -1e-12

    def test_zero_trial_rejected(self):
        with pytest.raises(ValueError, match="zero-energy"):
            second_order_block(np.zeros((4, 10)))


class TestFirstOrderBlock:
    def test_window_means_exact_split(self):
        x = np.array([np.arange(8.0)])
        b = first_order_block(x, 4)
        np.testing.assert_allclose(b, [[0.5, 2.5, 4.5, 6.5]], atol=1e-15)

    def test_uneven_split_puts_longer_windows_first(self):
        # 10 samples over 4 windows -> lengths 3,3,2,2
        x = np.array([np.arange(10.0)])
        b = first_order_block(x, 4)
        np.testing.assert_allclose(b, [[1.0, 4.0, 6.5, 8.5]], atol=1e-15)

    def test_constant_trial(self):
        b = first_order_block(np.array([[1.0, 1.0, 1.0, 1.0]]), 2)
        np.testing.assert_allclose(b, [[1.0, 1.0]], atol=1e-15)

    def test_shape(self):
        rng = np.random.default_rng(3)
        b = first_order_block(rng.standard_normal((11, 512)), 16)
        assert b.shape == (11, 16)

    def test_too_few_samples_rejected(self):
        with pytest.raises(ValueError, match="t_prime"):
            first_order_block(np.ones((2, 5)), 6)


class TestFeatureMapSpec:
    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="unknown feature kind"):
            FeatureMapSpec(kind="spectral")

    def test_bad_t_prime_rejected(self):
        with pytest.raises(ValueError, match="t_prime"):
            FeatureMapSpec(t_prime=0)

    def test_bad_scales_rejected(self):
        with pytest.raises(ValueError, match="block_scales"):
            FeatureMapSpec(block_scales=(1.0, -2.0))


class TestFeatureMap:
    def test_second_order_single_block(self):
        rng = np.random.default_rng(4)
        trials = make_trials(rng, n=4)
        feats = FeatureMap(FeatureMapSpec(KIND_SECOND_ORDER)).fit_transform(trials)
        assert len(feats) == 4
        assert [f.label for f in feats] == [1, -1, 1, -1]
        for f in feats:
            assert len(f.blocks) == 1
            assert f.blocks[0].shape == (11, 11)

    def test_first_order_single_block(self):
        rng = np.random.default_rng(5)
        feats = FeatureMap(FeatureMapSpec(KIND_FIRST_ORDER, t_prime=16)).fit_transform(
            make_trials(rng, n=3))
        for f in feats:
            assert len(f.blocks) == 1
            assert f.blocks[0].shape == (11, 16)

    def test_augmented_block_order_and_shapes(self):
        rng = np.random.default_rng(6)
        feats = FeatureMap(FeatureMapSpec(KIND_AUGMENTED, t_prime=16)).fit_transform(
            make_trials(rng, n=3))
        for f in feats:
            assert len(f.blocks) == 2
            assert f.blocks[0].shape == (11, 16)   # windowed means first
            assert f.blocks[1].shape == (11, 11)   # covariance second

    def test_augmented_normalization_unit_mean_norm(self):
        rng = np.random.default_rng(7)
        trials = make_trials(rng, n=8)
        fmap = FeatureMap(FeatureMapSpec(KIND_AUGMENTED, t_prime=8))
        feats = fmap.fit_transform(trials)
        for bi in range(2):
            mean_norm = np.mean([np.linalg.norm(f.blocks[bi]) for f in feats])
            assert mean_norm == pytest.approx(1.0, abs=1e-10)

    def test_augmented_scales_applied(self):
        rng = np.random.default_rng(8)
        trials = make_trials(rng, n=5)
        plain = FeatureMap(FeatureMapSpec(KIND_AUGMENTED, t_prime=8)).fit_transform(trials)
        scaled = FeatureMap(
            FeatureMapSpec(KIND_AUGMENTED, t_prime=8, block_scales=(2.0, 0.5))
        ).fit_transform(trials)
        for f0, f1 in zip(plain, scaled):
            np.testing.assert_allclose(f1.blocks[0], 2.0 * f0.blocks[0], atol=1e-12)
            np.testing.assert_allclose(f1.blocks[1], 0.5 * f0.blocks[1], atol=1e-12)

    def test_fitted_state_reused_on_held_out_trials(self):
        rng = np.random.default_rng(9)
        train = make_trials(rng, n=6)
        test = make_trials(rng, n=2)
        fmap = FeatureMap(FeatureMapSpec(KIND_AUGMENTED, t_prime=8))
        fmap.fit(train)
        saved = fmap.normalizers_
        fmap.transform(test)
        assert fmap.normalizers_ == saved  # transform never updates the fit

    def test_transform_before_fit_rejected(self):
        rng = np.random.default_rng(10)
        with pytest.raises(ValueError, match="fit before transform"):
            FeatureMap(FeatureMapSpec()).transform(make_trials(rng, n=1))

    def test_fit_on_nothing_rejected(self):
        with pytest.raises(ValueError, match="zero trials"):
            FeatureMap(FeatureMapSpec()).fit([])


class TestTrialFeature:
    def test_label_validated(self):
        with pytest.raises(ValueError, match="label"):
            TrialFeature(blocks=(np.eye(2),), label=0)

    def test_needs_blocks(self):
        with pytest.raises(ValueError, match="at least one block"):
            TrialFeature(blocks=(), label=1)
