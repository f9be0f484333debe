"""Training loop with dynamic reclustering of phase classes.

For each initial class count ``n0`` (descending by two from ``n0_star``)
a classifier is trained until the validation loss stops improving.  If
some class is still recognised worse than ``1 - alpha`` on the last
epoch, the worst class (judged by the loss-weighted confusion matrix
accumulated over training) is merged into the class it is most often
mistaken for and a fresh network is trained on the relabelled data.  The
final model is the stored network with the most classes.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Protocol, Sequence

import numpy as np

from . import nn
from .signal import PeriodMarks, SegmentSpec, TimeSeries, check_label_map, segment, window_length

log = logging.getLogger(__name__)


class TrainingFailed(RuntimeError):
    """No network met the per-class accuracy requirement, even after relaxing alpha."""


@dataclass
class Hyperparams:
    n0_star: int = 10
    alpha: float = 2.0**-6
    lr: float = 0.01
    batch_initial: int = 40
    batch_max: int = 360
    batch_growth_epochs: int = 2
    patience: int = 4
    max_epochs: int = 150
    max_restarts: int = 3
    n0_min: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.n0_star <= 3 or self.n0_star % 2:
            raise ValueError("n0_star must be an even number greater than 3")
        if not 0 <= self.alpha < 1:
            raise ValueError("alpha must lie in [0, 1)")
        if self.batch_initial < 1 or self.batch_max < self.batch_initial:
            raise ValueError("need 1 <= batch_initial <= batch_max")

    def n0_values(self) -> list[int]:
        return list(range(self.n0_star, self.n0_min - 1, -2))

    def batch_size(self, epoch: int) -> int:
        """Mini-batch size doubles every ``batch_growth_epochs`` epochs up to ``batch_max``."""
        size = self.batch_initial * 2 ** (epoch // max(self.batch_growth_epochs, 1))
        return int(min(size, self.batch_max))


# ------------------------------------------------------------ data access

@dataclass
class PhaseArrays:
    T: int
    x_train: np.ndarray
    phase_train: np.ndarray
    x_val: np.ndarray
    phase_val: np.ndarray


class PhaseSource(Protocol):
    d: int

    def arrays(self, n0: int) -> PhaseArrays: ...


class SignalData:
    """Training and validation signals with period marks, segmented per n0."""

    def __init__(self, train: Sequence[tuple[TimeSeries, PeriodMarks]],
                 val: Sequence[tuple[TimeSeries, PeriodMarks]], mean_period: float):
        if not train or not val:
            raise ValueError("need at least one training and one validation signal")
        self.train = list(train)
        self.val = list(val)
        self.mean_period = float(mean_period)
        self.d = self.train[0][0].d
        self._cache: dict[int, PhaseArrays] = {}

    def _cut(self, signals, spec: SegmentSpec):
        segs = []
        for i, (ts, marks) in enumerate(signals):
            segs.extend(segment(ts, marks, spec, signal_id=i))
        return np.stack([s.data for s in segs]), np.array([s.m % spec.n0 for s in segs])

    def arrays(self, n0: int) -> PhaseArrays:
        if n0 not in self._cache:
            spec = SegmentSpec(n0, window_length(self.mean_period, n0), self.mean_period)
            xt, pt = self._cut(self.train, spec)
            xv, pv = self._cut(self.val, spec)
            self._cache[n0] = PhaseArrays(spec.T, xt, pt, xv, pv)
        return self._cache[n0]


class ArrayData:
    """Pre-segmented windows for a single n0 (phase index = initial label)."""

    def __init__(self, x_train, phase_train, x_val, phase_val):
        x_train = np.asarray(x_train, dtype=np.float64)
        self.d = x_train.shape[1]
        self._arrays = PhaseArrays(x_train.shape[2], x_train, np.asarray(phase_train),
                                   np.asarray(x_val, dtype=np.float64), np.asarray(phase_val))
        self.n0 = int(self._arrays.phase_train.max()) + 1

    def arrays(self, n0: int) -> PhaseArrays:
        if n0 != self.n0:
            raise ValueError(f"data was prepared for n0={self.n0}, not {n0}")
        return self._arrays


# ------------------------------------------------------ decision pieces

def training_stopped(validation_losses: Sequence[float], patience: int = 4) -> bool:
    """True when none of the last ``patience`` losses beats the best before them."""
    if len(validation_losses) <= patience:
        return False
    best_before = min(validation_losses[:-patience])
    return not any(v < best_before for v in validation_losses[-patience:])


def overall_confusion(losses: Sequence[float], confusions: Sequence[np.ndarray]) -> np.ndarray:
    """Confusion matrices of epochs 1..E-1 weighted by the training loss decrease."""
    E = len(losses)
    if E < 2 or len(confusions) != E:
        raise ValueError("need at least two epochs with one confusion matrix each")
    out = np.zeros_like(np.asarray(confusions[0], dtype=np.float64))
    for k in range(1, E):
        out += np.asarray(confusions[k], dtype=np.float64) * (losses[k - 1] - losses[k])
    return out


def class_accuracies(confusion: np.ndarray) -> np.ndarray:
    confusion = np.asarray(confusion, dtype=np.float64)
    rows = confusion.sum(axis=1)
    if np.any(rows <= 0):
        raise ValueError(f"classes {np.flatnonzero(rows <= 0).tolist()} have no mass in the confusion matrix")
    return np.diag(confusion) / rows


def reclustering_satisfied(confusion: np.ndarray, alpha: float) -> bool:
    try:
        acc = class_accuracies(confusion)
    except ValueError as e:
        log.warning("reclustering check failed: %s", e)
        return False
    return bool(acc.min() >= 1 - alpha)


def select_merge(vbar: np.ndarray) -> tuple[int, int]:
    """Worst recognised class and the class it is most often predicted as."""
    vbar = np.asarray(vbar, dtype=np.float64)
    if vbar.shape[0] < 2:
        raise ValueError("need at least two classes to merge")
    i = int(np.argmin(class_accuracies(vbar)))
    row = vbar[i].copy()
    row[i] = -np.inf
    return i, int(np.argmax(row))


def apply_merge(label_map: Sequence[int], i: int, j: int, n: int) -> list[int]:
    """Merge class i into j, then move the largest label n-1 into the freed slot i."""
    if i == j or not (0 <= i < n and 0 <= j < n):
        raise ValueError(f"invalid merge {i} -> {j} with {n} classes")
    out = [j if v == i else int(v) for v in label_map]
    if i != n - 1:
        out = [i if v == n - 1 else v for v in out]
    if check_label_map(out) != n - 1:
        raise ValueError(f"merge produced {out}, which does not have {n - 1} classes")
    return out


def class_weights(labels, n: int) -> np.ndarray:
    """Loss weights inversely proportional to class counts, averaging 1."""
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=n)[:n]
    if np.any(counts == 0):
        raise ValueError(f"classes {np.flatnonzero(counts == 0).tolist()} have no training examples")
    inv = 1.0 / counts
    return inv / inv.mean()


# ------------------------------------------------------------- training

def train_epoch(net: nn.Network, opt: nn.Adam, x: np.ndarray, y: np.ndarray, weights: np.ndarray,
                batch_size: int, rng: np.random.Generator) -> tuple[float, np.ndarray]:
    """One pass over shuffled disjoint mini-batches.

    Returns the mean per-sample loss and the confusion matrix of the
    predictions made for each batch just before its update.
    """
    N = len(y)
    if N == 0:
        raise ValueError("empty training set")
    n = net.spec.n
    order = rng.permutation(N)
    total = 0.0
    conf = np.zeros((n, n), dtype=np.int64)
    for a in range(0, N, batch_size):
        idx = order[a : a + batch_size]
        loss, grads, logits = net.loss_and_grad(x[idx], y[idx], weights)
        total += loss * len(idx)
        np.add.at(conf, (y[idx], np.argmax(logits, axis=1)), 1)
        opt.step(net.params, grads)
    return total / N, conf


def evaluate(net: nn.Network, x: np.ndarray, y: np.ndarray, weights: np.ndarray,
             batch: int = 2048) -> tuple[float, float]:
    """Mean weighted loss and accuracy."""
    total, correct = 0.0, 0
    for a in range(0, len(y), batch):
        logits = net.forward(x[a : a + batch])
        total += float(nn.batch_losses(logits, y[a : a + batch], weights).sum())
        correct += int(np.sum(np.argmax(logits, axis=1) == y[a : a + batch]))
    return total / len(y), correct / len(y)


@dataclass
class NetRecord:
    n0: int
    n: int
    label_map: list[int]
    seed: int
    first_epoch: int
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    confusion: list[list[list[int]]] = field(default_factory=list)
    satisfied: bool = False

    @property
    def epochs(self) -> int:
        return len(self.train_loss)


@dataclass
class Merge:
    n0: int
    epoch: int
    merged: int
    into: int
    label_map: list[int]


@dataclass
class TrainRecord:
    alpha: float
    nets: list[NetRecord] = field(default_factory=list)
    merges: list[Merge] = field(default_factory=list)
    candidates: dict[int, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["candidates"] = {str(k): v for k, v in self.candidates.items()}
        return d

    def label_history(self, n0: int) -> list[dict]:
        """Rows of (epochs, merge, new labels) for one n0, epochs counted across reinitialisations."""
        nets = [r for r in self.nets if r.n0 == n0]
        rows = []
        for r in nets:
            end = r.first_epoch + r.epochs
            rows.append({"epochs": f"{r.first_epoch} -- {end - 1}", "merge": None, "labels": r.label_map})
            for m in self.merges:
                if m.n0 == n0 and m.epoch == end - 1:
                    rows.append({"epochs": f"{end - 1} -> {end}", "merge": f"{m.merged} to {m.into}",
                                 "labels": m.label_map})
        return rows


@dataclass
class TrainResult:
    network: nn.Network
    label_map: list[int]
    n0: int
    T: int
    record: TrainRecord
    train_accuracy: float
    val_accuracy: float

    @property
    def n(self) -> int:
        return self.network.spec.n


def _seed(master: int, *key: int) -> int:
    return int(np.random.SeedSequence(master, spawn_key=key).generate_state(1, np.uint64)[0] >> 1)


def fit_network(arrays: PhaseArrays, label_map: Sequence[int], hyper: Hyperparams, seed: int,
                record: NetRecord) -> tuple[nn.Network, np.ndarray]:
    """Train one freshly initialised network until validation loss stalls."""
    lm = np.asarray(label_map)
    n = check_label_map(lm)
    y, yv = lm[arrays.phase_train], lm[arrays.phase_val]
    weights = class_weights(y, n)
    d = arrays.x_train.shape[1]
    net = nn.new_network(d, arrays.T, n, seed)
    opt = nn.Adam(net.params, lr=hyper.lr)
    rng = np.random.Generator(np.random.PCG64(seed))
    for epoch in range(hyper.max_epochs):
        h, conf = train_epoch(net, opt, arrays.x_train, y, weights, hyper.batch_size(epoch), rng)
        vl, va = evaluate(net, arrays.x_val, yv, weights)
        record.train_loss.append(h)
        record.val_loss.append(vl)
        record.val_accuracy.append(va)
        record.confusion.append(conf.tolist())
        log.debug("n0=%d n=%d epoch %d: train %.4f val %.4f acc %.4f", record.n0, n, epoch, h, vl, va)
        if training_stopped(record.val_loss, hyper.patience):
            break
    return net, weights


def _run_once(data: PhaseSource, hyper: Hyperparams, alpha: float, attempt: int) -> TrainResult | None:
    record = TrainRecord(alpha=alpha)
    n_best = 0
    stored: TrainResult | None = None
    for n0 in hyper.n0_values():
        if n0 <= n_best:
            break
        arrays = data.arrays(n0)
        label_map = list(range(n0))
        n = n0
        epoch0 = 0
        while True:
            seed = _seed(hyper.seed, attempt, n0, n)
            rec = NetRecord(n0=n0, n=n, label_map=list(label_map), seed=seed, first_epoch=epoch0)
            record.nets.append(rec)
            net, weights = fit_network(arrays, label_map, hyper, seed, rec)
            epoch0 += rec.epochs
            last = np.asarray(rec.confusion[-1])
            if reclustering_satisfied(last, alpha):
                rec.satisfied = True
                lm = np.asarray(label_map)
                _, train_acc = evaluate(net, arrays.x_train, lm[arrays.phase_train], weights)
                val_acc = rec.val_accuracy[-1]
                stored = TrainResult(net, list(label_map), n0, arrays.T, record, train_acc, val_acc)
                record.candidates[n0] = n
                n_best = n
                log.info("n0=%d: stored network with %d classes (val acc %.4f)", n0, n, val_acc)
                break
            if n - 1 < 3 or n - 1 <= n_best:
                break
            try:
                vbar = overall_confusion(rec.train_loss, [np.asarray(c) for c in rec.confusion])
                i, j = select_merge(vbar)
            except ValueError:
                # training loss never fell below its first epoch; fall back to the last epoch
                i, j = select_merge(last)
            label_map = apply_merge(label_map, i, j, n)
            record.merges.append(Merge(n0, epoch0 - 1, i, j, list(label_map)))
            log.info("n0=%d: merged class %d into %d -> %s", n0, i, j, label_map)
            n -= 1
    return stored


def run(data: PhaseSource, hyper: Hyperparams) -> TrainResult:
    """Model selection over n0 with reclustering; relaxes alpha when nothing qualifies."""
    alpha = hyper.alpha
    for attempt in range(hyper.max_restarts + 1):
        result = _run_once(data, hyper, alpha, attempt)
        if result is not None:
            return result
        log.warning("no network met alpha=%g; retrying with alpha=%g", alpha, min(2 * alpha, 0.5))
        alpha = min(2 * alpha, 0.5)
    raise TrainingFailed(f"no network stored after {hyper.max_restarts} alpha escalations")
