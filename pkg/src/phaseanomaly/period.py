"""Cross-correlating period detector.

The detector is primed on a reference signal (smoothing, autocorrelation
base period, simple peak picking, reference pattern selection) and then
applied to an input signal by cross-correlating it with the reference
pattern and picking peaks on the correlation.  All marks returned by
:func:`detect_periods` and :meth:`PeriodDetector.detect` are indices into
the raw input signal.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .signal import PeriodMarks, TimeSeries


class PeriodDetectionError(ValueError):
    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class PeriodDetectorParams:
    prefilter_half_length: int
    s_min: int
    s_max: int
    sigma: float
    lam: float
    peak_adjust_radius: int = 0
    preprocessing: str = "none"
    feature: int | str = 0

    def __post_init__(self):
        if self.prefilter_half_length < 0:
            raise ValueError("prefilter half length must be >= 0")
        if not 2 <= self.s_min <= self.s_max:
            raise ValueError("need 2 <= s_min <= s_max")
        if not 0 <= self.sigma < 1:
            raise ValueError("sigma must lie in [0, 1)")
        if not 0 < self.lam <= 0.5:
            raise ValueError("lambda must lie in (0, 1/2]")
        if self.peak_adjust_radius < 0:
            raise ValueError("peak adjust radius must be >= 0")
        if self.preprocessing not in ("none", "first_difference"):
            raise ValueError(f"unknown preprocessing {self.preprocessing!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def rolling_mean(x, n: int) -> np.ndarray:
    """Centered moving average over 2n+1 samples; output index i maps to input i+n."""
    x = np.asarray(x, dtype=np.float64)
    w = 2 * n + 1
    if x.size < w:
        raise ValueError(f"sequence of length {x.size} shorter than filter window {w}")
    if n == 0:
        return x.copy()
    return np.lib.stride_tricks.sliding_window_view(x, w).mean(axis=1)


def autocorrelation(y, lags) -> np.ndarray:
    """Biased sample autocorrelation at the given lags (rho_0 = 1)."""
    y = np.asarray(y, dtype=np.float64)
    c = y - y.mean()
    N = c.size
    r0 = np.dot(c, c) / N
    if r0 == 0:
        raise ValueError("autocorrelation of a constant sequence is undefined")
    return np.array([np.dot(c[lag:], c[: N - lag]) / N for lag in lags]) / r0


def estimate_base_period(y, s_min: int, s_max: int) -> int:
    y = np.asarray(y, dtype=np.float64)
    if y.size <= s_max:
        raise ValueError(f"sequence of length {y.size} too short for s_max={s_max}")
    lags = np.arange(s_min, s_max + 1)
    rho = autocorrelation(y, lags)
    return int(lags[int(np.argmax(rho))])


def search_bounds(s_hat: int, sigma: float) -> tuple[int, int]:
    """Offsets (lo, hi) of the next-peak search window relative to the last peak."""
    lo = max(math.floor(s_hat * (1 - sigma)), 2)
    hi = max(math.ceil(s_hat * (1 + sigma)), lo)
    return lo, hi


def simple_peaks(y, s_hat: int, sigma: float) -> PeriodMarks:
    """Greedy peak picking with peaks roughly one base period apart.

    The first peak is the maximum over ``[0, ceil(s_hat(1+sigma))]``; each
    following peak is the maximum over the window ``[lo, hi]`` offsets
    after the previous one.  A window cut off by the end of the sequence
    still yields a peak when its maximum is not on the last sample.
    """
    y = np.asarray(y, dtype=np.float64)
    lo, hi = search_bounds(s_hat, sigma)
    first = math.ceil(s_hat * (1 + sigma))
    if y.size < first + 1:
        raise ValueError(f"sequence of length {y.size} shorter than initial search window {first + 1}")
    peaks = [int(np.argmax(y[: first + 1]))]
    while peaks[-1] + lo < y.size:
        a = peaks[-1] + lo
        b = min(peaks[-1] + hi, y.size - 1)
        t = a + int(np.argmax(y[a : b + 1]))
        if t == y.size - 1 and b < peaks[-1] + hi:
            break
        peaks.append(t)
    return PeriodMarks(np.array(peaks))


def window_offsets(s_hat: int, lam: float) -> tuple[int, int]:
    return math.floor(-s_hat * lam), math.ceil(s_hat * lam)


def reference_segment(y, marks: PeriodMarks, s_hat: int, lam: float, return_index: bool = False):
    """Pick the window around a peak that best matches the mean window.

    Windows span offsets ``floor(-s_hat*lam) .. ceil(s_hat*lam)`` around
    each mark; marks whose window leaves the sequence are skipped.
    """
    y = np.asarray(y, dtype=np.float64)
    lo, hi = window_offsets(s_hat, lam)
    usable = [int(t) for t in marks.taus if t + lo >= 0 and t + hi < y.size]
    if not usable:
        raise ValueError("no mark admits a full reference window")
    windows = np.stack([y[t + lo : t + hi + 1] for t in usable])
    mean = windows.mean(axis=0)
    k0 = int(np.argmax(windows @ mean))
    if return_index:
        return windows[k0], usable[k0]
    return windows[k0]


def recenter_peak(x, t0: int, radius: int) -> int:
    """Position of the maximum of ``x`` within ``t0 +- radius`` (clipped to x)."""
    x = np.asarray(x, dtype=np.float64)
    a = max(t0 - radius, 0)
    b = min(t0 + radius, x.size - 1)
    if a > b:
        raise ValueError(f"recentering window around {t0} lies outside the sequence")
    return a + int(np.argmax(x[a : b + 1]))


def cross_correlate(x, u_ref) -> np.ndarray:
    """C[j] = sum_t x[j + t] * u_ref[t] over full overlaps only."""
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u_ref, dtype=np.float64)
    if x.size < u.size:
        raise ValueError(f"sequence of length {x.size} shorter than reference of length {u.size}")
    return np.correlate(x, u, mode="valid")


def _channel(ts: TimeSeries | np.ndarray, feature) -> np.ndarray:
    if isinstance(ts, TimeSeries):
        return ts.feature(feature)
    return np.asarray(ts, dtype=np.float64).ravel()


class PeriodDetector:
    """Steps 1-4 run once on a reference in :meth:`fit`; :meth:`detect` runs 5-6."""

    def __init__(self, params: PeriodDetectorParams):
        self.params = params
        self.s_hat: int | None = None
        self.u_ref: np.ndarray | None = None
        self.reference_center: int | None = None
        self.reference_marks: PeriodMarks | None = None

    @property
    def _offset(self) -> int:
        # index i of a smoothed (and possibly differenced) sequence maps to raw index i + offset
        p = self.params
        return p.prefilter_half_length + (1 if p.preprocessing == "first_difference" else 0)

    def _prepare(self, raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        p = self.params
        smooth = rolling_mean(raw, p.prefilter_half_length)
        if p.preprocessing == "first_difference":
            return np.diff(smooth), smooth
        return smooth, smooth

    def fit(self, reference) -> "PeriodDetector":
        p = self.params
        raw = _channel(reference, p.feature)
        try:
            y, smooth = self._prepare(raw)
        except ValueError as e:
            raise PeriodDetectionError(1, str(e)) from None
        try:
            s_hat = estimate_base_period(y, p.s_min, p.s_max)
        except ValueError as e:
            raise PeriodDetectionError(2, str(e)) from None
        try:
            marks = simple_peaks(y, s_hat, p.sigma)
        except ValueError as e:
            raise PeriodDetectionError(3, str(e)) from None
        try:
            _, center = reference_segment(y, marks, s_hat, p.lam, return_index=True)
        except ValueError as e:
            raise PeriodDetectionError(4, str(e)) from None
        lo, hi = window_offsets(s_hat, p.lam)
        if p.peak_adjust_radius:
            shift = self._offset - p.prefilter_half_length
            moved = recenter_peak(smooth, center + shift, p.peak_adjust_radius) - shift
            if moved + lo >= 0 and moved + hi < y.size:
                center = moved
        self.s_hat = s_hat
        self.u_ref = y[center + lo : center + hi + 1].copy()
        self.reference_center = center + self._offset
        self.reference_marks = marks.shifted(self._offset)
        return self

    def to_dict(self) -> dict:
        if self.u_ref is None:
            raise RuntimeError("detector is not fitted")
        return {"params": self.params.to_dict(), "s_hat": self.s_hat, "u_ref": self.u_ref.tolist(),
                "reference_center": self.reference_center}

    @classmethod
    def from_dict(cls, d: dict) -> "PeriodDetector":
        det = cls(PeriodDetectorParams(**d["params"]))
        det.s_hat = int(d["s_hat"])
        det.u_ref = np.asarray(d["u_ref"], dtype=np.float64)
        det.reference_center = d.get("reference_center")
        return det

    def correlation(self, signal) -> tuple[np.ndarray, int]:
        """Cross-correlation and the raw index of its first entry."""
        if self.u_ref is None:
            raise RuntimeError("detector is not fitted")
        raw = _channel(signal, self.params.feature)
        try:
            x, _ = self._prepare(raw)
        except ValueError as e:
            raise PeriodDetectionError(1, str(e)) from None
        try:
            c = cross_correlate(x, self.u_ref)
        except ValueError as e:
            raise PeriodDetectionError(5, str(e)) from None
        lo, _ = window_offsets(self.s_hat, self.params.lam)
        return c, self._offset - lo

    def detect(self, signal) -> PeriodMarks:
        c, offset = self.correlation(signal)
        try:
            marks = simple_peaks(c, self.s_hat, self.params.sigma)
        except ValueError as e:
            raise PeriodDetectionError(6, str(e)) from None
        return marks.shifted(offset)

    def simple_marks(self, signal) -> PeriodMarks:
        """Step-3 style marks on the input itself, for comparison plots."""
        raw = _channel(signal, self.params.feature)
        x, _ = self._prepare(raw)
        return simple_peaks(x, self.s_hat, self.params.sigma).shifted(self._offset)


def detect_periods(raw, reference, params: PeriodDetectorParams) -> PeriodMarks:
    """Full detector: prime on ``reference`` and return raw-time marks of ``raw``."""
    return PeriodDetector(params).fit(reference).detect(raw)


def fixed_marks(n: int, period: int, start: int = 0) -> PeriodMarks:
    """Marks for signals with a known constant period."""
    return PeriodMarks(np.arange(start, n, period))
