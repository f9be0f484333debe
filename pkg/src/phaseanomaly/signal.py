"""Time series container, CSV ingestion and phase segmentation."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed input data."""


@dataclass
class TimeSeries:
    """d-dimensional samples, stored as a (d, N) float array."""

    values: np.ndarray
    sample_rate: float | None = None
    feature_names: list[str] | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[np.newaxis, :]
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DataError(f"time series must be a non-empty (d, N) array, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DataError("time series contains non-finite values")
        if self.feature_names is not None and len(self.feature_names) != values.shape[0]:
            raise DataError("feature_names length does not match the number of features")
        self.values = values

    @property
    def d(self) -> int:
        return self.values.shape[0]

    def __len__(self) -> int:
        return self.values.shape[1]

    def feature(self, key: int | str) -> np.ndarray:
        if isinstance(key, str):
            if not self.feature_names or key not in self.feature_names:
                raise KeyError(key)
            key = self.feature_names.index(key)
        return self.values[key]

    def slice(self, start: int, stop: int) -> "TimeSeries":
        return TimeSeries(self.values[:, start:stop], self.sample_rate, self.feature_names)


@dataclass
class PeriodMarks:
    """Strictly increasing period-begin indices."""

    taus: np.ndarray

    def __post_init__(self):
        taus = np.asarray(self.taus, dtype=np.int64).ravel()
        if np.any(np.diff(taus) < 2):
            raise DataError("period marks must be strictly increasing with gaps >= 2")
        if taus.size and taus[0] < 0:
            raise DataError("period marks must be non-negative")
        self.taus = taus

    def __len__(self) -> int:
        return int(self.taus.size)

    def gaps(self) -> np.ndarray:
        return np.diff(self.taus)

    def shifted(self, offset: int) -> "PeriodMarks":
        return PeriodMarks(self.taus + offset)

    def within(self, n: int) -> "PeriodMarks":
        return PeriodMarks(self.taus[self.taus < n])


@dataclass
class SegmentSpec:
    n0: int
    T: int
    mean_period: float | None = None

    def __post_init__(self):
        if self.n0 < 3:
            raise ValueError(f"n0 must be >= 3, got {self.n0}")
        if self.T < 2:
            raise ValueError(f"window length must be >= 2, got {self.T}")

    @classmethod
    def from_period(cls, mean_period: float, n0: int) -> "SegmentSpec":
        return cls(n0=n0, T=window_length(mean_period, n0), mean_period=mean_period)


@dataclass
class LabeledSegment:
    data: np.ndarray
    label: int
    signal: int | str
    m: int
    tau: int
    start: int


@dataclass
class SegmentStats:
    emitted: int = 0
    dropped_overrun: int = 0
    dropped_no_successor: int = 0
    per_signal: dict = field(default_factory=dict)


def load_csv(
    path: str | Path,
    features: Sequence[str | int] | None = None,
    header: bool = True,
    sample_rate: float | None = None,
) -> TimeSeries:
    """Read a comma separated file with one row per time step.

    ``features`` selects columns by header name or zero-based index.
    Row numbers in error messages are 1-based file lines.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [(i + 1, r) for i, r in enumerate(rows) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: empty file")
    names: list[str] | None = None
    if header:
        names = [c.strip() for c in rows[0][1]]
        rows = rows[1:]
        if not rows:
            raise DataError(f"{path}: no data rows after header")
    width = len(names) if names is not None else len(rows[0][1])

    if features is None:
        cols = list(range(width))
    else:
        cols = []
        for f in features:
            if isinstance(f, int) or (isinstance(f, str) and f.isdigit() and (names is None or f not in names)):
                idx = int(f)
            elif names is not None and f in names:
                idx = names.index(f)
            else:
                raise DataError(f"{path}: unknown feature column {f!r}")
            if not 0 <= idx < width:
                raise DataError(f"{path}: feature index {idx} out of range")
            cols.append(idx)

    out = np.empty((len(rows), len(cols)))
    for r, (lineno, row) in enumerate(rows):
        if len(row) != width:
            raise DataError(f"{path}: row {lineno} has {len(row)} columns, expected {width}")
        for c, idx in enumerate(cols):
            cell = row[idx].strip()
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}: row {lineno}: non-numeric cell {cell!r}") from None
            if not math.isfinite(v):
                raise DataError(f"{path}: row {lineno}: non-finite cell {cell!r}")
            out[r, c] = v
    selected = [names[i] for i in cols] if names is not None else None
    return TimeSeries(out.T.copy(), sample_rate=sample_rate, feature_names=selected)


def save_csv(ts: TimeSeries, path: str | Path) -> None:
    names = ts.feature_names or [f"x{i}" for i in range(ts.d)]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in ts.values.T:
            w.writerow([repr(float(v)) for v in row])


def resample(ts: TimeSeries, factor: int) -> TimeSeries:
    """Downsample by averaging consecutive blocks of ``factor`` samples."""
    if factor < 1:
        raise ValueError("resampling factor must be a positive integer")
    n = len(ts) // factor
    if n < 1:
        raise DataError(f"series of length {len(ts)} is shorter than factor {factor}")
    if factor == 1:
        return TimeSeries(ts.values.copy(), ts.sample_rate, ts.feature_names)
    blocks = ts.values[:, : n * factor].reshape(ts.d, n, factor)
    rate = ts.sample_rate / factor if ts.sample_rate else None
    return TimeSeries(blocks.mean(axis=2), rate, ts.feature_names)


def first_difference(ts: TimeSeries) -> TimeSeries:
    if len(ts) < 2:
        raise DataError("first difference needs at least 2 samples")
    return TimeSeries(np.diff(ts.values, axis=1), ts.sample_rate, ts.feature_names)


def window_length(mean_period: float, n0: int) -> int:
    """Sliding window length, roughly three strides: floor(3 * mean_period / n0)."""
    if mean_period <= 0:
        raise ValueError("mean period must be positive")
    if n0 < 3:
        raise ValueError("n0 must be >= 3")
    T = math.floor(3 * mean_period / n0)
    if T < 2:
        raise ValueError(f"window length {T} for mean period {mean_period} and n0={n0} is degenerate")
    return T


def normalize_window(raw: np.ndarray) -> np.ndarray:
    """Zero mean, unit population std per row; constant rows become zeros."""
    raw = np.asarray(raw, dtype=np.float64)
    mu = raw.mean(axis=-1, keepdims=True)
    centered = raw - mu
    sd = np.sqrt(np.mean(centered * centered, axis=-1, keepdims=True))
    # a row whose spread is at rounding level of its magnitude counts as constant
    flat = sd <= 1e-12 * np.maximum(np.abs(mu), 1.0)
    return np.where(flat, 0.0, centered / np.where(flat, 1.0, sd))


def segment_starts(marks: PeriodMarks, n0: int) -> list[tuple[int, int, int]]:
    """(m, tau_k, start) for every phase whose period has a successor mark."""
    taus = marks.taus
    out = []
    for k in range(len(taus) - 1):
        gap = int(taus[k + 1] - taus[k])
        for j in range(n0):
            out.append((k * n0 + j, int(taus[k]), int(taus[k]) + (gap * j) // n0))
    return out


def segment(
    ts: TimeSeries,
    marks: PeriodMarks,
    spec: SegmentSpec,
    signal_id: int | str = 0,
    stats: SegmentStats | None = None,
) -> list[LabeledSegment]:
    """Cut ``n0`` overlapping, normalized windows out of every complete period."""
    if len(marks) < 2:
        raise DataError("segmentation needs at least 2 period marks")
    N = len(ts)
    segments = []
    dropped = 0
    for m, tau, start in segment_starts(marks, spec.n0):
        if start + spec.T > N:
            dropped += 1
            continue
        data = normalize_window(ts.values[:, start : start + spec.T])
        segments.append(LabeledSegment(data, m % spec.n0, signal_id, m, tau, start))
    if stats is not None:
        stats.emitted += len(segments)
        stats.dropped_overrun += dropped
        stats.dropped_no_successor += spec.n0
        stats.per_signal[signal_id] = len(segments)
    if not segments:
        raise DataError(f"no window of length {spec.T} fits in signal {signal_id!r}")
    return segments


def check_label_map(label_map: Sequence[int]) -> int:
    """Return the number of classes, raising if labels are not contiguous."""
    labels = set(int(v) for v in label_map)
    n = len(labels)
    if labels != set(range(n)):
        raise ValueError(f"label map {list(label_map)} is not a contiguous range 0..{n - 1}")
    return n


def relabel(segments: Iterable[LabeledSegment], label_map: Sequence[int]) -> list[LabeledSegment]:
    """Assign ``label_map[m mod n0]`` as the current label of each segment."""
    check_label_map(label_map)
    n0 = len(label_map)
    out = []
    for seg in segments:
        seg.label = int(label_map[seg.m % n0])
        out.append(seg)
    return out


def stack(segments: Sequence[LabeledSegment]) -> tuple[np.ndarray, np.ndarray]:
    """Batch array (B, d, T) and label vector."""
    x = np.stack([s.data for s in segments])
    y = np.array([s.label for s in segments], dtype=np.int64)
    return x, y


def dump_segments(segments: Iterable[LabeledSegment], path: str | Path) -> None:
    """Debug dump, one JSON object per line."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for s in segments:
            rec = {"signal": s.signal, "m": s.m, "label": s.label, "start": s.start, "data": s.data.tolist()}
            fh.write(json.dumps(rec) + "\n")
