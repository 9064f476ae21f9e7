"""Class-conditional radius statistics."""
import numpy as np
import pytest

from gpzkit.activations import ActivationBatch
from gpzkit import repr_stats


def make_batch(data, labels, name="z1"):
    data = np.asarray(data, dtype=np.float32)
    return ActivationBatch(layer_name=name, per_sample_shape=(data.shape[1],),
                           d=data.shape[1], data=data,
                           labels=np.asarray(labels, dtype=np.uint32))


class TestClassStats:
    def test_two_point_symmetry(self):
        stats = repr_stats.class_stats(make_batch([[0, 0], [2, 0]], [0, 0]))
        entry = stats.per_class[0]
        np.testing.assert_allclose(entry.mu, [1.0, 0.0])
        assert entry.r2 == pytest.approx(1.0)

    def test_constant_batch_degenerate(self):
        stats = repr_stats.class_stats(make_batch([[3, 1]] * 4, [0, 0, 1, 1]))
        assert all(e.r2 == 0.0 for e in stats.per_class)
        assert stats.sigma2_feat == 0.0

    def test_matches_naive_double_pass(self, rng):
        data = rng.normal(size=(40, 6))
        labels = rng.integers(0, 3, size=40)
        stats = repr_stats.class_stats(make_batch(data, labels))
        for entry in stats.per_class:
            block = data[labels == entry.c].astype(np.float32).astype(np.float64)
            mu = block.mean(axis=0)
            naive = np.mean(np.sum((block - mu) ** 2, axis=1))
            np.testing.assert_allclose(entry.r2, naive, rtol=1e-5)

    def test_skips_singleton_classes_with_warning(self):
        batch = make_batch([[0, 0], [1, 1], [2, 2]], [0, 0, 1])
        with pytest.warns(RuntimeWarning):
            stats = repr_stats.class_stats(batch)
        assert stats.skipped == [1]
        assert [e.c for e in stats.per_class] == [0]

    def test_all_singletons_error(self):
        with pytest.warns(RuntimeWarning), pytest.raises(ValueError):
            repr_stats.class_stats(make_batch([[0, 0], [1, 1]], [0, 1]))

    def test_law_of_total_variance(self, rng):
        data = rng.normal(size=(60, 4)) + rng.integers(0, 3, size=(60, 1))
        labels = np.repeat(np.arange(3), 20)
        batch = make_batch(data, labels)
        stats = repr_stats.class_stats(batch)
        b, d = data.shape
        mu = batch.data.astype(np.float64).mean(axis=0)
        within = sum(e.n * e.r2 for e in stats.per_class)
        between = sum(e.n * float(np.sum((e.mu - mu) ** 2)) for e in stats.per_class)
        np.testing.assert_allclose(b * d * stats.sigma2_feat, within + between, rtol=1e-4)

    def test_pooled_dominates_within(self, rng):
        data = rng.normal(size=(30, 3))
        labels = rng.integers(0, 2, size=30)
        while min(np.bincount(labels)) < 2:
            labels = rng.integers(0, 2, size=30)
        stats = repr_stats.class_stats(make_batch(data, labels))
        b, d = data.shape
        assert b * d * stats.sigma2_feat >= sum(e.n * e.r2 for e in stats.per_class) - 1e-9


class TestInvariances:
    def test_permutation(self, rng):
        data = rng.normal(size=(20, 3))
        labels = rng.integers(0, 2, size=20)
        while min(np.bincount(labels)) < 2:
            labels = rng.integers(0, 2, size=20)
        perm = rng.permutation(20)
        a = repr_stats.class_stats(make_batch(data, labels))
        b = repr_stats.class_stats(make_batch(data[perm], labels[perm]))
        for ea, eb in zip(a.per_class, b.per_class):
            np.testing.assert_allclose(ea.r2, eb.r2, rtol=1e-12)
        np.testing.assert_allclose(a.sigma2_feat, b.sigma2_feat, rtol=1e-12)

    def test_translation_and_scale(self, rng):
        data = rng.normal(size=(20, 3))
        labels = np.repeat([0, 1], 10)
        base = repr_stats.class_stats(make_batch(data, labels))
        shifted = repr_stats.class_stats(make_batch(data + 7.5, labels))
        scaled = repr_stats.class_stats(make_batch(data * 3.0, labels))
        for eb, es, ec in zip(base.per_class, shifted.per_class, scaled.per_class):
            np.testing.assert_allclose(es.r2, eb.r2, rtol=1e-4)
            np.testing.assert_allclose(ec.r2, 9.0 * eb.r2, rtol=1e-5)
        np.testing.assert_allclose(shifted.sigma2_feat, base.sigma2_feat, rtol=1e-4)
        np.testing.assert_allclose(scaled.sigma2_feat, 9.0 * base.sigma2_feat, rtol=1e-5)


class TestNormalizedRadius:
    def test_examples(self):
        assert repr_stats.normalized_radius(8.0, 4) == pytest.approx(2.0)
        assert repr_stats.normalized_radius(0.0, 9) == 0.0

    def test_zero_dim_rejected(self):
        with pytest.raises(ValueError):
            repr_stats.normalized_radius(1.0, 0)


class TestLayerProfiles:
    def test_profiles_align_with_layers(self, small_acts):
        profiles = repr_stats.layer_profiles(small_acts)
        assert [p.layer_name for p in profiles] == small_acts.layer_names
        for profile, batch in zip(profiles, small_acts.layers):
            assert profile.d == batch.d
            np.testing.assert_allclose(profile.r2_norm, profile.r2 / profile.d, rtol=1e-9)

    def test_duplicate_layers_identical(self, small_acts):
        profiles = repr_stats.layer_profiles(small_acts)
        again = repr_stats.layer_profiles(small_acts)
        for a, b in zip(profiles, again):
            assert (a.r2, a.r2_norm, a.d) == (b.r2, b.r2_norm, b.d)

    def test_strictly_positive_at_feature_layers(self, small_acts):
        profiles = repr_stats.layer_profiles(small_acts)
        assert all(p.r2 > 0 for p in profiles)
