"""Anomaly decisions from phase classification results.

Type A: a whole signal is abnormal when its phase accuracy drops below a
threshold.  Type B: every misclassified window is reported as an abnormal
extent of the raw signal.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Protocol, Sequence

import numpy as np

from .signal import DataError, PeriodMarks, SegmentSpec, TimeSeries, check_label_map, segment
from .wavegen import ANOMALY_START, AnomalySpec, Dataset

WHITE_NOISE_SPLIT = 6.0


class Classifier(Protocol):
    def predict(self, x: np.ndarray) -> np.ndarray: ...


@dataclass
class Prediction:
    signal: int | str
    m: int
    start: int
    end: int
    true: int
    predicted: int

    @property
    def correct(self) -> bool:
        return self.true == self.predicted


@dataclass
class TypeAVerdict:
    accuracy: float
    delta: float
    abnormal: bool


def classify_signal(classifier: Classifier, label_map: Sequence[int], ts: TimeSeries, marks: PeriodMarks,
                    n0: int, T: int, signal_id: int | str = 0, max_periods: int | None = None) -> list[Prediction]:
    """Segment ``ts`` as in training and predict the phase class of every window."""
    if len(label_map) != n0:
        raise ValueError(f"label map has {len(label_map)} entries, expected n0={n0}")
    check_label_map(label_map)
    if max_periods is not None:
        marks = PeriodMarks(marks.taus[: max_periods + 1])
    segs = segment(ts, marks, SegmentSpec(n0, T), signal_id=signal_id)
    x = np.stack([s.data for s in segs])
    predicted = np.asarray(classifier.predict(x))
    return [
        Prediction(signal_id, s.m, s.start, s.start + T, int(label_map[s.m % n0]), int(p))
        for s, p in zip(segs, predicted)
    ]


def accuracy(predictions: Sequence[Prediction]) -> float:
    if not predictions:
        raise ValueError("no predictions")
    return sum(p.correct for p in predictions) / len(predictions)


def detect_type_a(predictions: Sequence[Prediction], delta: float) -> TypeAVerdict:
    acc = accuracy(predictions)
    return TypeAVerdict(acc, float(delta), acc < delta)


def detect_type_b(predictions: Sequence[Prediction]) -> list[tuple[int, int]]:
    """Raw extents [start, end) of all misclassified windows, in input order."""
    return [(p.start, p.end) for p in predictions if not p.correct]


def anomaly_region(anomaly: AnomalySpec) -> tuple[int, int]:
    return anomaly.start, anomaly.end


def overlaps(extent: tuple[int, int], region: tuple[int, int]) -> bool:
    return extent[0] < region[1] and region[0] < extent[1]


@dataclass
class SegmentResult:
    group: int
    segment: int
    kind: str
    magnitude: float
    region: tuple[int, int]
    windows: int
    errors: int
    clean_windows: int
    clean_errors: int
    detected: bool
    flagged: list[tuple[int, int]]


def evaluate_segment(predictions: Sequence[Prediction], anomaly: AnomalySpec, group: int, index: int,
                     clean_end: int = ANOMALY_START) -> SegmentResult:
    flagged = detect_type_b(predictions)
    region = anomaly_region(anomaly)
    clean = [p for p in predictions if p.end <= min(clean_end, region[0])]
    return SegmentResult(
        group=group, segment=index, kind=anomaly.kind, magnitude=float(anomaly.magnitude), region=region,
        windows=len(predictions), errors=len(flagged),
        clean_windows=len(clean), clean_errors=sum(not p.correct for p in clean),
        detected=any(overlaps(f, region) for f in flagged), flagged=flagged,
    )


def summarize(results: Sequence[SegmentResult]) -> dict:
    """Detection rates per anomaly kind and the clean-window false positive rate."""
    def row(name, items):
        hit = sum(r.detected for r in items)
        return {"type": name, "detected": hit, "total": len(items), "rate": hit / len(items) if items else None}

    by_kind = {k: [r for r in results if r.kind == k] for k in ("phase", "amplitude", "pulse")}
    anomalies = [r for k in by_kind.values() for r in k]
    noise = [r for r in results if r.kind == "white_noise"]
    fp = sum(r.clean_errors for r in results)
    windows = sum(r.clean_windows for r in results)
    return {
        "rows": [
            row("phase", by_kind["phase"]),
            row("amplitude", by_kind["amplitude"]),
            row("pulse", by_kind["pulse"]),
            row("total_anomalies", anomalies),
            row(f"white_noise_le_{WHITE_NOISE_SPLIT:g}", [r for r in noise if r.magnitude <= WHITE_NOISE_SPLIT]),
            row(f"white_noise_gt_{WHITE_NOISE_SPLIT:g}", [r for r in noise if r.magnitude > WHITE_NOISE_SPLIT]),
        ],
        "false_positives": {"errors": fp, "windows": windows, "rate": fp / windows if windows else None},
    }


def evaluate_dataset(models: dict[int, object], dataset: Dataset, mark_fn) -> tuple[list[SegmentResult], dict]:
    """Type-B evaluation of every test segment of every group.

    ``models`` maps group index to an object with ``classifier``,
    ``label_map``, ``n0`` and ``T`` attributes; ``mark_fn(group, ts)``
    returns period marks for a test segment.
    """
    missing = [g.index for g in dataset.groups if g.index not in models]
    if missing:
        raise DataError(f"no model for groups {missing}")
    results = []
    for g in dataset.groups:
        model = models[g.index]
        for i, (ts, anomaly) in enumerate(zip(g.segments, g.anomalies)):
            preds = classify_signal(model.classifier, model.label_map, ts, mark_fn(g.index, ts),
                                    model.n0, model.T, signal_id=i)
            results.append(evaluate_segment(preds, anomaly, g.index, i))
    return results, summarize(results)


def format_table(summary: dict) -> str:
    """Plain-text detection table."""
    lines = [f"{'Type':<22}{'Detected':>12}{'%':>8}"]
    for r in summary["rows"]:
        pct = f"{100 * r['rate']:.0f}%" if r["rate"] is not None else "-"
        lines.append(f"{r['type']:<22}{r['detected']:>6}/{r['total']:<5}{pct:>8}")
    fp = summary["false_positives"]
    pct = f"{100 * fp['rate']:.2f}%" if fp["rate"] is not None else "-"
    lines.append(f"{'false_positives':<22}{fp['errors']:>6}/{fp['windows']:<5}{pct:>8}")
    return "\n".join(lines)


def report(predictions: Sequence[Prediction], delta: float) -> dict:
    """JSON-ready per-window records plus both decision types."""
    verdict = detect_type_a(predictions, delta)
    return {
        "predictions": [dict(asdict(p), correct=p.correct) for p in predictions],
        "type_a": asdict(verdict),
        "type_b": [list(e) for e in detect_type_b(predictions)],
    }
