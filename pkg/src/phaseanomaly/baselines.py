"""Comparison methods: windowed self-dissimilarity and a nearest-mean phase classifier."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal import DataError, TimeSeries, normalize_window


@dataclass(frozen=True)
class SelfSimParams:
    T: int
    d_min: int
    d_max: int

    def __post_init__(self):
        if self.T < 2:
            raise ValueError("window length must be >= 2")
        if not 0 < self.d_min <= self.d_max:
            raise ValueError("need 0 < d_min <= d_max")

    @classmethod
    def for_period(cls, period: int, T: int) -> "SelfSimParams":
        """Compare each window with the windows one to two periods earlier."""
        return cls(T, period, 2 * period)


def _windows(ts: TimeSeries, T: int) -> np.ndarray:
    view = np.lib.stride_tricks.sliding_window_view(ts.values, T, axis=1)  # (d, N-T+1, T)
    return normalize_window(np.moveaxis(view, 1, 0))


def self_dissimilarity(ts: TimeSeries, params: SelfSimParams) -> np.ndarray:
    """a[k] for window start tau = d_max + k: minimum squared distance to earlier windows."""
    N = len(ts)
    if N < params.d_max + params.T:
        raise DataError(f"series of length {N} too short for d_max={params.d_max} and T={params.T}")
    w = _windows(ts, params.T)
    cur = w[params.d_max :]
    best = np.full(len(cur), np.inf)
    for shift in range(params.d_min, params.d_max + 1):
        prev = w[params.d_max - shift : len(w) - shift]
        diff = prev - cur
        best = np.minimum(best, np.einsum("kdt,kdt->k", diff, diff))
    return best


def similarity_rating(a):
    return 1.0 / (np.asarray(a, dtype=np.float64) + 1.0)


def nearest_reference_train(x: np.ndarray, labels: np.ndarray, n: int) -> np.ndarray:
    """Per-class mean of normalized windows, shape (n, d, T)."""
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels)
    counts = np.bincount(labels, minlength=n)
    if np.any(counts[:n] == 0):
        raise ValueError(f"classes {np.flatnonzero(counts[:n] == 0).tolist()} have no examples")
    means = np.zeros((n,) + x.shape[1:])
    np.add.at(means, labels, x)
    return means / counts[:n, None, None]


def nearest_reference_classify(x: np.ndarray, means: np.ndarray) -> np.ndarray:
    """Index of the Euclidean-nearest class mean for each window (ties: smallest)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[None]
    flat = x.reshape(len(x), -1)
    m = means.reshape(len(means), -1)
    out = np.empty(len(flat), dtype=np.int64)
    for a in range(0, len(flat), 1024):
        diff = flat[a : a + 1024, None, :] - m[None]
        out[a : a + 1024] = np.argmin(np.einsum("bkt,bkt->bk", diff, diff), axis=1)
    return out[0] if single else out


class NearestReference:
    """Drop-in replacement for the network in the detection pipeline."""

    def __init__(self, means: np.ndarray):
        self.means = np.asarray(means, dtype=np.float64)

    @classmethod
    def fit(cls, x, labels, n: int) -> "NearestReference":
        return cls(nearest_reference_train(x, labels, n))

    def predict(self, x: np.ndarray) -> np.ndarray:
        return nearest_reference_classify(x, self.means)
