"""
Tests for soft regions, prototype aggregation and self-correlation
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from dpaseg.core.prototype import (
    PrototypeSet,
    RegionAxis,
    aggregate,
    correlation_features,
    generate_prototypes,
    self_correlate,
    soft_regions,
)
from dpaseg.core.tensor import Tensor
from dpaseg.errors import DimensionError

ENVELOPE_TOL = 1e-9


class TestSoftRegions:

    def test_constant_input_is_uniform(self):
        s = soft_regions(Tensor(np.full((3, 8), 2.5))).data
        assert_allclose(s, np.full((3, 8), 1.0 / 8), atol=1e-15)

    def test_rows_sum_to_one(self, rng):
        for _ in range(100):
            s = soft_regions(Tensor(rng.normal(scale=3.0, size=(5, 12)))).data
            assert_allclose(s.sum(axis=1), 1.0, rtol=0, atol=1e-9)
            assert np.all((s > 0) & (s < 1))

    def test_spike_dominates_its_channel(self, rng):
        x = rng.normal(scale=0.1, size=(4, 10))
        spikes = rng.integers(0, 10, size=4)
        x[np.arange(4), spikes] += 20.0
        s = soft_regions(Tensor(x)).data
        assert np.all(s[np.arange(4), spikes] > 0.99)

    def test_channel_axis_normalises_pixels(self, rng):
        s = soft_regions(Tensor(rng.normal(size=(5, 7))), RegionAxis.CHANNEL).data
        assert_allclose(s.sum(axis=0), 1.0, rtol=0, atol=1e-9)

    def test_rejects_feature_cubes(self):
        with pytest.raises(DimensionError):
            soft_regions(Tensor(np.ones((2, 3, 3))))


class TestAggregate:

    def test_uniform_regions_give_the_mean_feature(self, rng):
        x = rng.normal(size=(3, 6))
        p = aggregate(Tensor(x), Tensor(np.full((3, 6), 1.0 / 6))).protos.data
        assert_allclose(p, np.repeat(x.mean(axis=1, keepdims=True), 3, axis=1), atol=1e-12)

    def test_one_hot_regions_pick_pixel_features(self, rng):
        x = rng.normal(size=(3, 6))
        picks = [4, 0, 2]
        s = np.zeros((3, 6))
        s[np.arange(3), picks] = 1.0
        p = aggregate(Tensor(x), Tensor(s)).protos.data
        assert_allclose(p, x[:, picks], atol=0)

    def test_matches_weighted_sum_loop(self, rng):
        x, s = rng.normal(size=(4, 9)), rng.random((4, 9))
        p = aggregate(Tensor(x), Tensor(s)).protos.data
        expected = np.zeros((4, 4))
        for j in range(4):
            for pix in range(9):
                expected[:, j] += x[:, pix] * s[j, pix]
        assert_allclose(p, expected, rtol=0, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            aggregate(Tensor(np.ones((3, 4))), Tensor(np.ones((3, 5))))

    def test_prototypes_stay_inside_the_pixel_envelope(self, rng):
        for _ in range(1000):
            c, hw = rng.integers(1, 6), rng.integers(1, 17)
            x = rng.normal(scale=rng.uniform(0.1, 10.0), size=(c, hw))
            p = generate_prototypes(Tensor(x)).protos.data
            assert p.shape == (c, c)
            lo, hi = x.min(axis=1, keepdims=True), x.max(axis=1, keepdims=True)
            assert np.all(p >= lo - ENVELOPE_TOL) and np.all(p <= hi + ENVELOPE_TOL)


class TestSelfCorrelate:

    def test_prototype_equal_to_pixel_scores_one(self, rng):
        x = rng.normal(size=(4, 5))
        corr = self_correlate(PrototypeSet(Tensor(x[:, [2]])), Tensor(x)).corr.data
        assert corr[0, 2] == pytest.approx(1.0, abs=1e-9)

    def test_orthogonal_pair_scores_zero(self):
        corr = self_correlate(PrototypeSet(Tensor([[1.0], [0.0]])), Tensor([[0.0], [3.0]])).corr.data
        assert corr[0, 0] == pytest.approx(0.0, abs=1e-9)

    def test_bounded_by_one(self, rng):
        for _ in range(1000):
            x = Tensor(rng.normal(scale=rng.uniform(0.01, 100.0), size=(rng.integers(1, 6), rng.integers(1, 17))))
            corr = correlation_features(x).data
            assert np.all(np.abs(corr) <= 1.0 + 1e-9)

    def test_invariant_to_positive_column_scaling(self, rng):
        x = rng.normal(size=(4, 10))
        protos = generate_prototypes(Tensor(x))
        base = self_correlate(protos, Tensor(x)).corr.data
        scaled = x * rng.uniform(0.1, 10.0, size=(1, 10))
        assert_allclose(self_correlate(protos, Tensor(scaled)).corr.data, base, rtol=0, atol=1e-12)

    def test_zero_column_correlates_to_zero(self, rng):
        x = rng.normal(size=(3, 5))
        x[:, 1] = 0.0
        corr = self_correlate(generate_prototypes(Tensor(x)), Tensor(x)).corr.data
        assert np.all(corr[:, 1] == 0.0)

    def test_feature_size_mismatch(self):
        with pytest.raises(DimensionError):
            self_correlate(PrototypeSet(Tensor(np.ones((3, 3)))), Tensor(np.ones((4, 5))))


class TestBypass:

    def test_without_prototypes_the_features_pass_through(self, rng):
        x = Tensor(rng.normal(size=(3, 8)))
        assert correlation_features(x, use_prototypes=False) is x
        assert generate_prototypes(x, use_prototypes=False).count == 8

    def test_bypass_keeps_the_embedding_input_shape(self, rng):
        x = Tensor(rng.normal(size=(3, 8)))
        assert correlation_features(x, True).shape == correlation_features(x, False).shape
