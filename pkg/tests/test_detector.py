import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from phaseanomaly import detector
from phaseanomaly.baselines import NearestReference
from phaseanomaly.detector import Prediction, detect_type_a, detect_type_b
from phaseanomaly.signal import DataError, PeriodMarks, SegmentSpec, TimeSeries, segment, stack
from phaseanomaly.wavegen import AnomalySpec, Dataset, Group, WaveSpec


def preds(correct, wrong):
    out = [Prediction(0, i, i, i + 5, 0, 0) for i in range(correct)]
    out += [Prediction(0, correct + i, 10 * i, 10 * i + 5, 0, 1) for i in range(wrong)]
    return out


class Constant:
    def __init__(self, label):
        self.label = label

    def predict(self, x):
        return np.full(len(x), self.label)


def periodic(n=2400, period=100):
    u = 2 * np.pi * np.arange(n) / period
    return TimeSeries(np.sin(u) + 0.5 * np.cos(2 * u))


class TestTypeA:
    def test_ratio(self):
        v = detect_type_a(preds(330, 30), 0.96)
        assert v.abnormal and v.accuracy == pytest.approx(330 / 360)

    def test_all_correct(self):
        assert not detect_type_a(preds(10, 0), 1.0).abnormal

    def test_zero_delta(self):
        assert not detect_type_a(preds(0, 10), 0.0).abnormal

    @given(st.integers(0, 50), st.integers(0, 50), st.floats(0, 1), st.floats(0, 1))
    def test_monotone_in_delta(self, c, w, d1, d2):
        if c + w == 0:
            return
        lo, hi = sorted((d1, d2))
        p = preds(c, w)
        assert detect_type_a(p, lo).abnormal <= detect_type_a(p, hi).abnormal

    def test_empty(self):
        with pytest.raises(ValueError):
            detector.accuracy([])


class TestTypeB:
    def test_none(self):
        assert detect_type_b(preds(5, 0)) == []

    def test_unmerged(self):
        p = [Prediction(0, 0, 0, 10, 1, 0), Prediction(0, 1, 5, 15, 1, 0), Prediction(0, 2, 10, 20, 1, 1)]
        assert detect_type_b(p) == [(0, 10), (5, 15)]


class TestClassify:
    n0, T = 4, 75

    def _nearest(self, ts):
        marks = PeriodMarks(np.arange(0, len(ts), 100))
        x, y = stack(segment(ts, marks, SegmentSpec(self.n0, self.T)))
        return NearestReference.fit(x, y % self.n0, self.n0), marks

    def test_counts_and_extents(self):
        ts = periodic()
        clf, marks = self._nearest(ts)
        p = detector.classify_signal(clf, [0, 1, 2, 3], ts, marks, self.n0, self.T)
        assert len(p) == len(segment(ts, marks, SegmentSpec(self.n0, self.T)))
        assert all(0 <= q.start < q.end <= len(ts) for q in p)
        assert detector.accuracy(p) == 1.0

    def test_max_periods(self):
        ts = periodic()
        clf, marks = self._nearest(ts)
        p = detector.classify_signal(clf, [0, 1, 2, 3], ts, marks, self.n0, self.T, max_periods=5)
        assert len(p) == 5 * self.n0

    def test_rolled_input_collapses(self):
        ts = periodic()
        clf, marks = self._nearest(ts)
        rolled = TimeSeries(np.roll(ts.values, -25, axis=1))
        acc = detector.accuracy(detector.classify_signal(clf, [0, 1, 2, 3], rolled, marks, self.n0, self.T))
        assert acc < 0.5

    def test_label_map_applied(self):
        ts = periodic()
        marks = PeriodMarks(np.arange(0, len(ts), 100))
        p = detector.classify_signal(Constant(1), [0, 1, 1, 2], ts, marks, 4, self.T)
        assert {q.true for q in p} == {0, 1, 2}
        assert detector.accuracy(p) == pytest.approx(0.5, abs=0.02)

    def test_label_map_length(self):
        with pytest.raises(ValueError):
            detector.classify_signal(Constant(0), [0, 1], periodic(), PeriodMarks([0, 100]), 4, 10)

    def test_deterministic(self):
        ts = periodic()
        clf, marks = self._nearest(ts)
        noisy = TimeSeries(ts.values + 4.0 * np.random.default_rng(0).normal(size=ts.values.shape))
        a = detect_type_b(detector.classify_signal(clf, [0, 1, 2, 3], noisy, marks, 4, self.T))
        b = detect_type_b(detector.classify_signal(clf, [0, 1, 2, 3], noisy, marks, 4, self.T))
        assert a == b and a


class TestSegmentEvaluation:
    def test_overlap(self):
        assert detector.overlaps((0, 10), (9, 20))
        assert not detector.overlaps((0, 10), (10, 20))

    def test_pulse_hit_and_clean_windows(self):
        a = AnomalySpec("pulse", None, 8.0, 3072, 40)
        p = [Prediction(0, 0, 1000, 1076, 0, 1),  # clean window, error
             Prediction(0, 1, 2000, 2076, 0, 0),  # crosses into anomalous half: not clean
             Prediction(0, 2, 3050, 3126, 0, 2)]
        r = detector.evaluate_segment(p, a, 0, 0)
        assert r.detected and r.clean_windows == 1 and r.clean_errors == 1 and r.errors == 2

    def test_summary_rows(self):
        mk = lambda kind, mag, det, ce: detector.SegmentResult(0, 0, kind, mag, (2048, 4096), 10, 0, 5, ce, det, [])
        s = detector.summarize([mk("phase", 0.5, True, 0), mk("pulse", 8, False, 1),
                                mk("white_noise", 5, False, 0), mk("white_noise", 40, True, 0)])
        rows = {r["type"]: (r["detected"], r["total"]) for r in s["rows"]}
        assert rows == {"phase": (1, 1), "amplitude": (0, 0), "pulse": (0, 1), "total_anomalies": (1, 2),
                        "white_noise_le_6": (0, 1), "white_noise_gt_6": (1, 1)}
        assert s["false_positives"] == {"errors": 1, "windows": 20, "rate": 0.05}
        assert "false_positives" in detector.format_table(s)

    def test_clean_wave_perfect_classifier(self):
        ts = periodic(4096, 128)
        marks = PeriodMarks(np.arange(0, 4096, 128))
        x, y = stack(segment(ts, marks, SegmentSpec(4, 96)))
        clf = NearestReference.fit(x, y % 4, 4)

        class Bound:
            classifier, label_map, n0, T = clf, [0, 1, 2, 3], 4, 96

        spec = WaveSpec.random(0)
        g = Group(0, spec, ts, [ts], [AnomalySpec("white_noise", None, 1.0)])
        results, summary = detector.evaluate_dataset({0: Bound}, Dataset(0, [g]), lambda gi, s: marks)
        assert summary["false_positives"]["errors"] == 0 and results[0].clean_windows > 0

    def test_missing_model(self):
        g = Group(3, WaveSpec.random(0), periodic(), [], [])
        with pytest.raises(DataError):
            detector.evaluate_dataset({}, Dataset(0, [g]), lambda gi, s: None)


def test_report_json_ready():
    rep = detector.report(preds(3, 1), 0.9)
    doc = json.loads(json.dumps(rep))
    assert doc["type_a"]["abnormal"] and len(doc["predictions"]) == 4 and len(doc["type_b"]) == 1
