"""Command line entry point: presets, subcommands and run manifests."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, baselines, detector, nn, trainer, wavegen
from .period import PeriodDetectionError, PeriodDetector, PeriodDetectorParams, fixed_marks
from .signal import DataError, PeriodMarks, SegmentSpec, TimeSeries, load_csv, resample, segment

log = logging.getLogger("phaseanomaly")

MODEL_FORMAT = "phaseanomaly-model/1"
RUN_FORMAT = "phaseanomaly-run/1"
REPORT_FORMAT = "phaseanomaly-report/1"
OUT_ENV = "PHASEANOMALY_OUT"

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_TRAINING = 0, 2, 3, 4


class ConfigError(ValueError):
    def __init__(self, message: str, hint: str = ""):
        super().__init__(message)
        self.hint = hint


# ---------------------------------------------------------------- presets

@dataclass(frozen=True)
class Preset:
    name: str
    marks: str  # "reference", "self" or "fixed"
    mean_period: float
    hyper: dict
    detector: PeriodDetectorParams | None = None
    fixed_period: int | None = None
    resample: int = 1
    max_periods: int | None = None

    def hyperparams(self, **overrides) -> trainer.Hyperparams:
        values = dict(self.hyper)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return trainer.Hyperparams(**values)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["detector"] = self.detector.to_dict() if self.detector else None
        return d


PRESETS = {
    "wave": Preset(
        name="wave", marks="reference", mean_period=256,
        detector=PeriodDetectorParams(8, 240, 272, 1 / 4, 1 / 3),
        hyper=dict(n0_star=10, alpha=2.0**-6, lr=0.01, batch_initial=40, batch_max=360),
    ),
    "ecg": Preset(
        name="ecg", marks="self", mean_period=35, resample=20, max_periods=60,
        detector=PeriodDetectorParams(10, 500, 2000, 1 / 2, 1 / 3, peak_adjust_radius=10,
                                      preprocessing="first_difference", feature="i"),
        hyper=dict(n0_star=10, alpha=2.0**-5, lr=0.1, batch_initial=800, batch_max=4800),
    ),
    "scada": Preset(
        name="scada", marks="fixed", mean_period=10, fixed_period=10,
        hyper=dict(n0_star=10, alpha=2.0**-3, lr=0.01, batch_initial=4, batch_max=4),
    ),
}


def get_preset(name: str) -> Preset:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}", f"choose one of {', '.join(PRESETS)}")
    return PRESETS[name]


class Marker:
    """Maps raw input series to (model-rate series, period marks)."""

    def __init__(self, preset: Preset, fitted: PeriodDetector | None = None):
        self.preset = preset
        self.fitted = fitted
        if preset.marks == "reference" and fitted is None:
            raise ConfigError("reference-mode marking needs a fitted period detector")

    def raw_marks(self, ts: TimeSeries) -> PeriodMarks:
        p = self.preset
        if p.marks == "fixed":
            return fixed_marks(len(ts), p.fixed_period * p.resample)
        if p.marks == "self":
            return PeriodDetector(p.detector).fit(ts).detect(ts)
        return self.fitted.detect(ts)

    def prepare(self, ts: TimeSeries, max_periods: int | None = None) -> tuple[TimeSeries, PeriodMarks]:
        p = self.preset
        taus = self.raw_marks(ts).taus
        if p.resample > 1:
            ts = resample(ts, p.resample)
            taus = np.unique(taus // p.resample)
            keep = np.concatenate([[True], np.diff(taus) >= 2]) if taus.size else taus.astype(bool)
            taus = taus[keep]
        limit = max_periods if max_periods is not None else p.max_periods
        if limit is not None:
            taus = taus[: limit + 1]
        return ts, PeriodMarks(taus)

    def to_dict(self) -> dict | None:
        return self.fitted.to_dict() if self.fitted is not None else None


# ----------------------------------------------------------------- models

@dataclass
class Model:
    preset: Preset
    network: nn.Network
    label_map: list[int]
    n0: int
    T: int
    train_accuracy: float
    val_accuracy: float
    alpha: float
    marker: Marker
    hyper: dict = field(default_factory=dict)

    @property
    def classifier(self):
        return self.network

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "preset": self.preset.to_dict(),
            "network": self.network.to_dict(),
            "label_map": self.label_map,
            "n0": self.n0,
            "T": self.T,
            "train_accuracy": self.train_accuracy,
            "val_accuracy": self.val_accuracy,
            "alpha": self.alpha,
            "hyper": self.hyper,
            "period_detector": self.marker.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Model":
        if d.get("format") != MODEL_FORMAT:
            raise DataError(f"unsupported model format {d.get('format')!r}")
        pd = dict(d["preset"])
        pd["detector"] = PeriodDetectorParams(**pd["detector"]) if pd["detector"] else None
        preset = Preset(**pd)
        fitted = PeriodDetector.from_dict(d["period_detector"]) if d["period_detector"] else None
        return cls(preset, nn.Network.from_dict(d["network"]), list(d["label_map"]), d["n0"], d["T"],
                   d["train_accuracy"], d["val_accuracy"], d["alpha"], Marker(preset, fitted), d["hyper"])

    @classmethod
    def from_result(cls, preset: Preset, result: trainer.TrainResult, marker: Marker,
                    hyper: trainer.Hyperparams) -> "Model":
        return cls(preset, result.network, result.label_map, result.n0, result.T, result.train_accuracy,
                   result.val_accuracy, result.record.alpha, marker, asdict(hyper))


def load_model(path: str | Path) -> Model:
    try:
        return Model.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except (OSError, json.JSONDecodeError, KeyError) as e:
        raise DataError(f"cannot read model {path}: {e}") from None


# ----------------------------------------------------------------- output

def dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def output_dir(path: str | None, command: str) -> Path:
    out = Path(path) if path else Path(os.environ.get(OUT_ENV, "runs")) / command
    if out.exists() and any(out.iterdir()):
        raise ConfigError(f"output directory {out} is not empty", "choose a fresh --out directory")
    out.mkdir(parents=True, exist_ok=True)
    return out


def versions() -> dict:
    import scipy

    return {"phaseanomaly": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def write_manifest(out: Path, command: str, config: dict) -> None:
    outputs = {}
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            outputs[p.relative_to(out).as_posix()] = hashlib.sha256(p.read_bytes()).hexdigest()
    dump_json({"format": RUN_FORMAT, "command": command, "config": config, "versions": versions(),
               "schemas": {"model": MODEL_FORMAT, "report": REPORT_FORMAT, "waves": "phaseanomaly-waves/1"},
               "outputs": outputs}, out / "manifest.json")


def write_training_outputs(out: Path, prefix: str, record: trainer.TrainRecord, plots: bool) -> None:
    with (out / f"{prefix}loss_curves.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["n0", "n", "epoch", "train_loss", "val_loss", "val_accuracy"])
        for net in record.nets:
            for k in range(net.epochs):
                w.writerow([net.n0, net.n, net.first_epoch + k, repr(net.train_loss[k]),
                            repr(net.val_loss[k]), repr(net.val_accuracy[k])])
    with (out / f"{prefix}label_history.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["n0", "epochs", "merge", "labels"])
        for n0 in sorted({r.n0 for r in record.nets}, reverse=True):
            for row in record.label_history(n0):
                w.writerow([n0, row["epochs"], row["merge"] or "", json.dumps(row["labels"])])
    dump_json(record.to_dict(), out / f"{prefix}train_record.json")
    if plots:
        from . import plots as plotting

        plotting.loss_curves(record, out / f"{prefix}loss_curves.svg")


# -------------------------------------------------------------- commands

def _load_all(paths: Sequence[str], features=None) -> list[TimeSeries]:
    out = []
    for p in paths:
        if not Path(p).is_file():
            raise DataError(f"input file {p} not found")
        out.append(load_csv(p, features=features))
    return out


def _train(preset: Preset, hyper: trainer.Hyperparams, marker: Marker, train: list[TimeSeries],
           val: list[TimeSeries]) -> tuple[Model, trainer.TrainResult]:
    data = trainer.SignalData([marker.prepare(ts) for ts in train], [marker.prepare(ts) for ts in val],
                              preset.mean_period)
    result = trainer.run(data, hyper)
    return Model.from_result(preset, result, marker, hyper), result


def _hyper_from_args(preset: Preset, args) -> trainer.Hyperparams:
    bi = bm = bg = None
    if getattr(args, "batch_schedule", None):
        try:
            parts = [int(v) for v in args.batch_schedule.split(":")]
            bi, bm = parts[0], parts[1]
            bg = parts[2] if len(parts) > 2 else None
        except (ValueError, IndexError):
            raise ConfigError(f"bad --batch-schedule {args.batch_schedule!r}",
                              "use INITIAL:MAX or INITIAL:MAX:GROWTH_EPOCHS") from None
    try:
        return preset.hyperparams(n0_star=args.n0_star, alpha=args.alpha, lr=args.lr, seed=args.seed,
                                  batch_initial=bi, batch_max=bm, batch_growth_epochs=bg,
                                  max_epochs=args.max_epochs)
    except ValueError as e:
        raise ConfigError(str(e), "check --n0-star (even, > 3), --alpha (in [0, 1)) and --batch-schedule") from None


def _wave_group_marker(preset: Preset, group: wavegen.Group) -> Marker:
    return Marker(preset, PeriodDetector(preset.detector).fit(group.train))


def cmd_generate(args) -> int:
    out = output_dir(args.out, "generate")
    ds = wavegen.build_dataset(args.groups, args.seed)
    wavegen.write_dataset(ds, out / "data")
    write_manifest(out, "generate", {"groups": args.groups, "seed": args.seed})
    print(out / "data")
    return EXIT_OK


def cmd_detect_periods(args) -> int:
    preset = get_preset(args.preset)
    if preset.marks == "fixed":
        fitted = None
    else:
        ref = _load_all([args.reference])[0] if args.reference else None
        fitted = PeriodDetector(preset.detector).fit(ref) if ref is not None else None
    out = output_dir(args.out, "detect-periods")
    result = {}
    for path in args.input:
        ts = _load_all([path])[0]
        if preset.marks == "fixed":
            marks = fixed_marks(len(ts), preset.fixed_period * preset.resample)
            det = None
        else:
            det = fitted or PeriodDetector(preset.detector).fit(ts)
            marks = det.detect(ts)
        result[Path(path).name] = {"marks": marks.taus.tolist(), "s_hat": det.s_hat if det else preset.fixed_period}
        if args.plots:
            from . import plots as plotting

            x = ts.feature(preset.detector.feature) if preset.detector else ts.values[0]
            simple = det.simple_marks(ts).taus if det else None
            plotting.period_marks(x, marks.taus, out / f"{Path(path).stem}_marks.svg", simple)
    dump_json({"preset": preset.name, "signals": result}, out / "marks.json")
    write_manifest(out, "detect-periods", {"preset": preset.to_dict(), "input": list(args.input),
                                           "reference": args.reference})
    return EXIT_OK


def cmd_train(args) -> int:
    preset = get_preset(args.preset)
    hyper = _hyper_from_args(preset, args)
    if args.data is not None:
        g = _find_group(wavegen.read_dataset(args.data), args.group)
        marker = _wave_group_marker(preset, g)
        train, val = [g.train], [g.validation]
    else:
        if not args.train or not args.val:
            raise ConfigError("training needs --train and --val files (or --data with --group)")
        train, val = _load_all(args.train), _load_all(args.val)
        fitted = PeriodDetector(preset.detector).fit(train[0]) if preset.marks == "reference" else None
        marker = Marker(preset, fitted)
    out = output_dir(args.out, "train")
    model, result = _train(preset, hyper, marker, train, val)
    dump_json(model.to_dict(), out / "model.json")
    write_training_outputs(out, "", result.record, args.plots)
    write_manifest(out, "train", {"preset": preset.to_dict(), "hyper": asdict(hyper), "train": args.train,
                                  "val": args.val, "data": args.data, "group": args.group})
    print(f"n0={model.n0} n={result.n} train_acc={model.train_accuracy:.4f} val_acc={model.val_accuracy:.4f}")
    return EXIT_OK


def _find_group(ds: wavegen.Dataset, index: int | None) -> wavegen.Group:
    for g in ds.groups:
        if index is None or g.index == index:
            return g
    raise ConfigError(f"group {index} not in dataset", "pass one of the group indices in manifest.json")


def _signal_reports(model: Model, classifier, series: list[tuple[str, TimeSeries]], delta: float,
                    max_periods: int | None, out: Path | None, plots: bool) -> list[dict]:
    reports = []
    for name, ts in series:
        ts_m, marks = model.marker.prepare(ts, max_periods)
        preds = detector.classify_signal(classifier, model.label_map, ts_m, marks, model.n0, model.T, name)
        rep = detector.report(preds, delta)
        rep["signal"] = name
        reports.append(rep)
        if plots and out is not None:
            from . import plots as plotting

            plotting.prediction_bars(ts_m.values[0], preds, max(model.label_map) + 1,
                                     out / f"{Path(name).stem}_predictions.svg")
    return reports


def _dataset_report(models: dict, ds: wavegen.Dataset, classifiers: dict | None = None) -> dict:
    wrapped = {}
    for gi, m in models.items():
        clf = classifiers[gi] if classifiers else m.classifier
        wrapped[gi] = _Bound(clf, m.label_map, m.n0, m.T)
    results, summary = detector.evaluate_dataset(
        wrapped, ds, lambda gi, ts: models[gi].marker.prepare(ts)[1])
    return {"format": REPORT_FORMAT, "segments": [asdict(r) for r in results], "summary": summary,
            "table": detector.format_table(summary)}


@dataclass
class _Bound:
    classifier: object
    label_map: list
    n0: int
    T: int


def cmd_evaluate(args) -> int:
    if args.data is not None:
        ds = wavegen.read_dataset(args.data)
        models = {g.index: load_model(Path(args.models) / f"group{g.index:02d}.json") for g in ds.groups}
        out = output_dir(args.out, "evaluate")
        rep = _dataset_report(models, ds)
        dump_json(rep, out / "report.json")
        (out / "table.txt").write_text(rep["table"] + "\n", encoding="utf-8")
        print(rep["table"])
    else:
        if not args.model or not args.input:
            raise ConfigError("evaluate needs --model and --input (or --data with --models)")
        model = load_model(args.model)
        delta = model.val_accuracy if args.delta is None else args.delta
        series = [(Path(p).name, ts) for p, ts in zip(args.input, _load_all(args.input))]
        out = output_dir(args.out, "evaluate")
        reps = _signal_reports(model, model.network, series, delta, args.max_periods, out, args.plots)
        dump_json({"format": REPORT_FORMAT, "delta": delta, "signals": reps}, out / "report.json")
        for r in reps:
            a = r["type_a"]
            print(f"{r['signal']}: accuracy {a['accuracy']:.4f} {'abnormal' if a['abnormal'] else 'normal'}")
    write_manifest(out, "evaluate", {"model": args.model, "models": args.models, "input": args.input,
                                     "data": args.data, "delta": args.delta, "max_periods": args.max_periods})
    return EXIT_OK


def nearest_for_model(model: Model, train: list[TimeSeries]) -> baselines.NearestReference:
    """Nearest-mean classifier using the model's segmentation and label map."""
    xs, ys = [], []
    lm = np.asarray(model.label_map)
    for i, ts in enumerate(train):
        ts_m, marks = model.marker.prepare(ts)
        for s in segment(ts_m, marks, SegmentSpec(model.n0, model.T), signal_id=i):
            xs.append(s.data)
            ys.append(lm[s.m % model.n0])
    return baselines.NearestReference.fit(np.stack(xs), np.array(ys), int(lm.max()) + 1)


def cmd_baseline(args) -> int:
    out = output_dir(args.out, "baseline")
    if args.method == "selfsim":
        if not args.input or args.period is None:
            raise ConfigError("selfsim needs --input and --period", "pass the mean period in samples")
        T = args.window or max(args.period // 4, 2)
        params = baselines.SelfSimParams.for_period(args.period, T)
        reps = []
        for p, ts in zip(args.input, _load_all(args.input)):
            a = baselines.self_dissimilarity(ts, params)
            reps.append({"signal": Path(p).name, "start": params.d_max, "dissimilarity": a.tolist(),
                         "mean_rating": float(np.mean(baselines.similarity_rating(a)))})
        dump_json({"format": REPORT_FORMAT, "method": "selfsim", "params": asdict(params), "signals": reps},
                  out / "report.json")
    else:
        if not args.model:
            raise ConfigError("nearest needs --model", "train a model first; its segmentation is reused")
        model = load_model(args.model)
        if args.data is not None:
            ds = wavegen.read_dataset(args.data)
            g = _find_group(ds, args.group)
            clf = nearest_for_model(model, [g.train])
            ds.groups = [g]
            rep = _dataset_report({g.index: model}, ds, {g.index: clf})
            rep["method"] = "nearest"
            dump_json(rep, out / "report.json")
            print(rep["table"])
        else:
            if not args.train or not args.input:
                raise ConfigError("nearest needs --train and --input files (or --data with --group)")
            clf = nearest_for_model(model, _load_all(args.train))
            delta = model.val_accuracy if args.delta is None else args.delta
            series = [(Path(p).name, ts) for p, ts in zip(args.input, _load_all(args.input))]
            reps = _signal_reports(model, clf, series, delta, args.max_periods, out, False)
            dump_json({"format": REPORT_FORMAT, "method": "nearest", "delta": delta, "signals": reps},
                      out / "report.json")
    write_manifest(out, "baseline", {"method": args.method, "model": args.model, "input": args.input,
                                     "train": args.train, "period": args.period, "window": args.window})
    return EXIT_OK


def classification_accuracy(classifier, model: Model, ts: TimeSeries) -> float:
    ts_m, marks = model.marker.prepare(ts)
    preds = detector.classify_signal(classifier, model.label_map, ts_m, marks, model.n0, model.T)
    return detector.accuracy(preds)


def run_wave_pipeline(out: Path, groups: int, seed: int, hyper: trainer.Hyperparams, plots: bool = False) -> dict:
    """generate -> detect periods -> train -> evaluate, one model per group."""
    preset = PRESETS["wave"]
    ds = wavegen.build_dataset(groups, seed)
    wavegen.write_dataset(ds, out / "data")
    ds = wavegen.read_dataset(out / "data")
    (out / "models").mkdir()
    (out / "marks").mkdir()
    models, classification = {}, []
    for g in ds.groups:
        marker = _wave_group_marker(preset, g)
        dump_json({"normal": marker.fitted.detect(g.normal).taus.tolist(),
                   "segments": [marker.fitted.detect(s).taus.tolist() for s in g.segments]},
                  out / "marks" / f"group{g.index:02d}.json")
        model, result = _train(preset, replace(hyper, seed=hyper.seed + g.index), marker,
                               [g.train], [g.validation])
        models[g.index] = model
        dump_json(model.to_dict(), out / "models" / f"group{g.index:02d}.json")
        write_training_outputs(out / "models", f"group{g.index:02d}_", result.record, plots)
        nearest = nearest_for_model(model, [g.train])
        classification.append({
            "group": g.index, "n0": model.n0, "n": result.n, "label_map": model.label_map,
            "train_accuracy": model.train_accuracy, "val_accuracy": model.val_accuracy,
            "nearest_val_accuracy": classification_accuracy(nearest, model, g.validation),
        })
        log.info("group %d: n0=%d n=%d val %.4f", g.index, model.n0, result.n, model.val_accuracy)
    rep = _dataset_report(models, ds)
    rep["classification"] = classification
    dump_json(rep, out / "report.json")
    (out / "table.txt").write_text(rep["table"] + "\n", encoding="utf-8")
    write_manifest(out, "pipeline", {"preset": preset.to_dict(), "groups": groups, "seed": seed,
                                     "hyper": asdict(hyper)})
    return rep


def _csv_dir(path: Path) -> list[tuple[str, TimeSeries]]:
    files = sorted(path.glob("*.csv"))
    return [(f.name, load_csv(f)) for f in files]


def run_csv_pipeline(out: Path, preset: Preset, data: Path, hyper: trainer.Hyperparams,
                     delta: float | None = None, plots: bool = False) -> dict:
    """Train on data/train, validate on data/val, report on data/test (if present)."""
    train, val = _csv_dir(data / "train"), _csv_dir(data / "val")
    if not train or not val:
        raise DataError(f"{data} must contain train/ and val/ directories with CSV files")
    fitted = PeriodDetector(preset.detector).fit(train[0][1]) if preset.marks == "reference" else None
    marker = Marker(preset, fitted)
    model, result = _train(preset, hyper, marker, [t for _, t in train], [t for _, t in val])
    (out / "models").mkdir()
    dump_json(model.to_dict(), out / "models" / "model.json")
    write_training_outputs(out / "models", "", result.record, plots)
    test = _csv_dir(data / "test") if (data / "test").is_dir() else []
    d = model.val_accuracy if delta is None else delta
    rep = {"format": REPORT_FORMAT, "delta": d,
           "classification": {"n0": model.n0, "n": result.n, "label_map": model.label_map,
                              "train_accuracy": model.train_accuracy, "val_accuracy": model.val_accuracy},
           "signals": _signal_reports(model, model.network, test, d, None, out, plots)}
    dump_json(rep, out / "report.json")
    write_manifest(out, "pipeline", {"preset": preset.to_dict(), "data": str(data), "hyper": asdict(hyper),
                                     "delta": delta})
    return rep


def cmd_pipeline(args) -> int:
    preset = get_preset(args.preset)
    hyper = _hyper_from_args(preset, args)
    if args.data is None and preset.name != "wave":
        raise ConfigError(f"preset {preset.name} needs --data", "only the wave preset can generate its own data")
    out = output_dir(args.out, "pipeline")
    if args.data is None:
        rep = run_wave_pipeline(out, args.groups, args.seed, hyper, args.plots)
        print(rep["table"])
    else:
        rep = run_csv_pipeline(out, preset, Path(args.data), hyper, args.delta, args.plots)
        c = rep["classification"]
        print(f"n0={c['n0']} n={c['n']} val_acc={c['val_accuracy']:.4f}")
    return EXIT_OK


# ----------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="phaseanomaly", description=__doc__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, preset=True):
        if preset:
            p.add_argument("--preset", default="wave", choices=sorted(PRESETS))
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV}/<command>)")
        p.add_argument("--plots", action="store_true", help="also write SVG figures")

    def training(p):
        p.add_argument("--n0-star", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--lr", type=float)
        p.add_argument("--batch-schedule", help="INITIAL:MAX[:GROWTH_EPOCHS]")
        p.add_argument("--max-epochs", type=int)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("generate", help="write a synthetic wave dataset")
    common(p, preset=False)
    p.add_argument("--groups", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("detect-periods", help="period marks for CSV signals")
    common(p)
    p.add_argument("--input", nargs="+", required=True)
    p.add_argument("--reference", help="reference signal (default: each input primes itself)")
    p.set_defaults(func=cmd_detect_periods)

    p = sub.add_parser("train", help="train a phase classifier")
    common(p)
    training(p)
    p.add_argument("--train", nargs="+")
    p.add_argument("--val", nargs="+")
    p.add_argument("--data", help="wave dataset directory")
    p.add_argument("--group", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="anomaly report for signals or a wave dataset")
    common(p, preset=False)
    p.add_argument("--model")
    p.add_argument("--models", help="directory with groupNN.json models (with --data)")
    p.add_argument("--input", nargs="+")
    p.add_argument("--data")
    p.add_argument("--delta", type=float)
    p.add_argument("--max-periods", type=int)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("baseline", help="comparison methods")
    common(p, preset=False)
    p.add_argument("--method", choices=["selfsim", "nearest"], required=True)
    p.add_argument("--model")
    p.add_argument("--train", nargs="+")
    p.add_argument("--input", nargs="+")
    p.add_argument("--data")
    p.add_argument("--group", type=int)
    p.add_argument("--period", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--max-periods", type=int)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("pipeline", help="end-to-end run")
    common(p)
    training(p)
    p.add_argument("--groups", type=int, default=4)
    p.add_argument("--data", help="directory with train/, val/ and optional test/ CSV files")
    p.add_argument("--delta", type=float)
    p.set_defaults(func=cmd_pipeline)
    return ap


def _fail(code: int, kind: str, message: str, hint: str = "") -> int:
    print(json.dumps({"error": kind, "message": message, "hint": hint}), file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        return _fail(EXIT_CONFIG, "config", str(e), e.hint)
    except PeriodDetectionError as e:
        return _fail(EXIT_DATA, "period_detection", str(e), "check the preset's period range against the data")
    except (DataError, FileNotFoundError) as e:
        return _fail(EXIT_DATA, "data", str(e), "check input paths and CSV contents")
    except trainer.TrainingFailed as e:
        return _fail(EXIT_TRAINING, "training", str(e), "raise --alpha or provide more training data")


if __name__ == "__main__":
    sys.exit(main())
