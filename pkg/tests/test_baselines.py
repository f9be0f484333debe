import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from phaseanomaly.baselines import (
    NearestReference,
    SelfSimParams,
    nearest_reference_classify,
    nearest_reference_train,
    self_dissimilarity,
    similarity_rating,
)
from phaseanomaly.signal import DataError, TimeSeries, normalize_window


def naive_dissimilarity(x, T, d_min, d_max):
    x = np.asarray(x, float)
    win = lambda t: normalize_window(x[None, t : t + T])
    out = []
    for tau in range(d_max, len(x) - T + 1):
        out.append(min(float(np.sum((win(tau - s) - win(tau)) ** 2)) for s in range(d_min, d_max + 1)))
    return np.array(out)


class TestSelfSim:
    def test_periodic_zero(self):
        x = np.tile(np.random.default_rng(0).normal(size=37), 12)
        a = self_dissimilarity(TimeSeries(x), SelfSimParams.for_period(37, 10))
        assert np.max(a) < 1e-20

    def test_rating(self):
        assert similarity_rating(0.0) == 1.0
        assert np.allclose(similarity_rating([1.0, 3.0]), [0.5, 0.25])

    def test_white_noise_positive(self):
        a = self_dissimilarity(TimeSeries(np.random.default_rng(1).normal(size=2000)), SelfSimParams(16, 30, 60))
        assert a.mean() > 5.0 and a.min() > 0

    @settings(max_examples=25, deadline=None)
    @given(arrays(np.float64, st.integers(30, 60), elements=st.floats(-5, 5)), st.integers(2, 6),
           st.integers(1, 5), st.integers(0, 6))
    def test_matches_naive(self, x, T, d_min, extra):
        d_max = d_min + extra
        if len(x) < d_max + T:
            return
        a = self_dissimilarity(TimeSeries(x), SelfSimParams(T, d_min, d_max))
        ref = naive_dissimilarity(x, T, d_min, d_max)
        assert np.all(a >= 0)
        assert np.allclose(a, ref, atol=1e-9)

    def test_errors(self):
        with pytest.raises(ValueError):
            SelfSimParams(5, 3, 2)
        with pytest.raises(DataError):
            self_dissimilarity(TimeSeries(np.arange(10.0)), SelfSimParams(5, 3, 8))


class TestNearest:
    def test_one_per_class(self):
        x = np.random.default_rng(0).normal(size=(3, 1, 5))
        assert np.array_equal(nearest_reference_train(x, [0, 1, 2], 3), x)

    def test_duplicates(self):
        x = np.random.default_rng(0).normal(size=(2, 1, 5))
        assert np.allclose(nearest_reference_train(np.concatenate([x, x]), [0, 1, 0, 1], 2), x)

    def test_hand_average(self):
        x = np.array([[[1.0, 2]], [[3.0, 4]], [[0.0, 0]], [[2.0, 2]]])
        assert nearest_reference_train(x, [0, 0, 1, 1], 2).tolist() == [[[2, 3]], [[1, 1]]]

    def test_missing_class(self):
        with pytest.raises(ValueError):
            nearest_reference_train(np.zeros((2, 1, 3)), [0, 0], 2)

    def test_classify_mean_and_tie(self):
        means = np.array([[[0.0, 0]], [[2.0, 0]], [[1.0, 5]]])
        assert nearest_reference_classify(means[2], means) == 2
        assert nearest_reference_classify(np.array([[1.0, 0]]), means) == 0

    @given(st.integers(0, 2**32 - 1), st.floats(0.1, 10), st.floats(-5, 5))
    def test_affine_invariance_after_normalization(self, seed, scale, shift):
        rng = np.random.default_rng(seed)
        x = normalize_window(rng.normal(size=(20, 1, 8)))
        clf = NearestReference.fit(x, np.arange(20) % 4, 4)
        moved = normalize_window(scale * rng.normal(size=(6, 1, 8)) + shift)
        again = normalize_window(moved * 3.0 - 1.0)
        assert np.array_equal(clf.predict(moved), clf.predict(again))
