import json

import numpy as np
import pytest

from phaseanomaly import cli, wavegen
from phaseanomaly.signal import TimeSeries, save_csv


def run(*argv):
    return cli.main([str(a) for a in argv])


def periodic_csv(path, n=1500, period=10, seed=0, noise=0.02):
    rng = np.random.default_rng(seed)
    u = 2 * np.pi * np.arange(n) / period
    save_csv(TimeSeries(np.sin(u) + 0.6 * np.cos(2 * u) + noise * rng.normal(size=n)), path)
    return path


def error_of(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


FAST = ["--preset", "scada", "--n0-star", "4", "--alpha", "0.25", "--max-epochs", "15", "--batch-schedule", "16:64"]


class TestGenerate:
    def test_deterministic_files(self, tmp_path):
        for name in ("a", "b"):
            assert run("generate", "--groups", 1, "--seed", 1, "--out", tmp_path / name) == 0
        files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
        assert files
        for f in files:
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
        rows = json.loads((tmp_path / "a" / "data" / "manifest.json").read_text())["segments"]
        assert set(rows[0]) == {"group", "segment", "kind", "params", "anomaly_start"}

    def test_out_is_write_once(self, tmp_path, capsys):
        (tmp_path / "x").mkdir()
        (tmp_path / "x" / "keep").write_text("")
        assert run("generate", "--out", tmp_path / "x") == cli.EXIT_CONFIG
        assert error_of(capsys)["error"] == "config"

    def test_env_default_root(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.OUT_ENV, str(tmp_path))
        assert run("generate") == 0
        assert (tmp_path / "generate" / "manifest.json").is_file()


class TestConfig:
    def test_scada_flags(self):
        args = cli.build_parser().parse_args(["train", "--preset", "scada", "--alpha", "0.125", "--n0-star", "10"])
        h = cli._hyper_from_args(cli.get_preset("scada"), args)
        assert h.alpha == 0.125 and h.n0_star == 10 and h.batch_initial == h.batch_max == 4

    def test_presets_complete(self):
        wave, ecg = cli.PRESETS["wave"], cli.PRESETS["ecg"]
        assert wave.hyperparams().alpha == 2**-6 and (wave.hyper["batch_initial"], wave.hyper["batch_max"]) == (40, 360)
        assert ecg.hyperparams().alpha == 2**-5 and ecg.detector.s_min == 500 and ecg.resample == 20

    @pytest.mark.parametrize("flags", [["--n0-star", "5"], ["--alpha", "1.5"], ["--batch-schedule", "x"]])
    def test_bad_hyper(self, tmp_path, capsys, flags):
        code = run("train", *FAST[:2], "--train", "a.csv", "--val", "b.csv", "--out", tmp_path / "o", *flags)
        assert code == cli.EXIT_CONFIG
        assert error_of(capsys)["hint"]

    def test_unknown_flag(self):
        with pytest.raises(SystemExit) as e:
            run("train", "--bogus")
        assert e.value.code == 2

    def test_missing_input(self, tmp_path, capsys):
        assert run("train", *FAST, "--train", tmp_path / "no.csv", "--val", tmp_path / "no.csv",
                   "--out", tmp_path / "o") == cli.EXIT_DATA
        assert error_of(capsys)["error"] == "data"

    def test_pipeline_needs_data(self, tmp_path):
        assert run("pipeline", "--preset", "ecg", "--out", tmp_path / "o") == cli.EXIT_CONFIG

    def test_period_failure(self, tmp_path, capsys):
        save_csv(TimeSeries(np.ones(5000)), tmp_path / "flat.csv")
        assert run("detect-periods", "--preset", "wave", "--input", tmp_path / "flat.csv",
                   "--out", tmp_path / "o") == cli.EXIT_DATA
        assert error_of(capsys)["error"] == "period_detection"

    def test_training_failure(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        for name in ("t", "v"):
            save_csv(TimeSeries(rng.normal(size=600)), tmp_path / f"{name}.csv")
        code = run("train", "--preset", "scada", "--n0-star", "4", "--alpha", "0.001", "--max-epochs", "5",
                   "--batch-schedule", "64:64", "--train", tmp_path / "t.csv", "--val", tmp_path / "v.csv",
                   "--out", tmp_path / "o")
        assert code == cli.EXIT_TRAINING and error_of(capsys)["error"] == "training"


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    periodic_csv(d / "train.csv", seed=1)
    periodic_csv(d / "val.csv", n=500, seed=2)
    test = np.loadtxt(periodic_csv(d / "test.csv", n=500, seed=3), delimiter=",", skiprows=1)
    test[200:240] += 3.0
    save_csv(TimeSeries(test), d / "test.csv")
    assert run("train", *FAST, "--train", d / "train.csv", "--val", d / "val.csv", "--out", d / "train") == 0
    return d


class TestWorkflow:
    def test_train_outputs(self, trained):
        out = trained / "train"
        names = {p.name for p in out.iterdir()}
        assert {"model.json", "loss_curves.csv", "label_history.csv", "train_record.json", "manifest.json"} <= names
        model = cli.load_model(out / "model.json")
        assert model.val_accuracy >= 0.9 and model.n0 == 4
        manifest = json.loads((out / "manifest.json").read_text())
        assert set(manifest["outputs"]) == names - {"manifest.json"}
        assert manifest["config"]["hyper"]["alpha"] == 0.25

    def test_model_roundtrip_bit_exact(self, trained):
        doc = json.loads((trained / "train" / "model.json").read_text())
        again = cli.Model.from_dict(doc).to_dict()
        assert json.dumps(again, sort_keys=True) == json.dumps(doc, sort_keys=True)

    def test_evaluate_flags_pulse(self, trained):
        out = trained / "eval"
        assert run("evaluate", "--model", trained / "train" / "model.json", "--input", trained / "test.csv",
                   "--out", out, "--plots") == 0
        rep = json.loads((out / "report.json").read_text())["signals"][0]
        assert any(s < 240 and 200 < e for s, e in rep["type_b"])
        assert rep["type_a"]["delta"] == cli.load_model(trained / "train" / "model.json").val_accuracy
        assert (out / "test_predictions.svg").is_file()

    def test_nearest_baseline(self, trained):
        out = trained / "nearest"
        assert run("baseline", "--method", "nearest", "--model", trained / "train" / "model.json",
                   "--train", trained / "train.csv", "--input", trained / "val.csv", "--out", out) == 0
        rep = json.loads((out / "report.json").read_text())
        assert rep["method"] == "nearest" and rep["signals"][0]["type_a"]["accuracy"] > 0.9

    def test_selfsim_baseline(self, trained):
        out = trained / "selfsim"
        assert run("baseline", "--method", "selfsim", "--input", trained / "test.csv", "--period", 10,
                   "--out", out) == 0
        a = np.array(json.loads((out / "report.json").read_text())["signals"][0]["dissimilarity"])
        assert a[200:230].max() > 10 * np.median(a)

    def test_detect_periods_fixed(self, trained):
        out = trained / "marks"
        assert run("detect-periods", "--preset", "scada", "--input", trained / "val.csv", "--out", out) == 0
        marks = json.loads((out / "marks.json").read_text())["signals"]["val.csv"]["marks"]
        assert marks[:3] == [0, 10, 20]

    def test_csv_pipeline(self, trained, tmp_path):
        data = tmp_path / "data"
        for sub in ("train", "val", "test"):
            (data / sub).mkdir(parents=True)
            (data / sub / "s.csv").write_bytes((trained / f"{sub}.csv").read_bytes())
        assert run("pipeline", *FAST, "--data", data, "--out", tmp_path / "run") == 0
        rep = json.loads((tmp_path / "run" / "report.json").read_text())
        assert rep["classification"]["n0"] == 4 and len(rep["signals"]) == 1
        assert (tmp_path / "run" / "models" / "model.json").is_file()


def test_detect_periods_wave_plot(tmp_path):
    g = wavegen.build_group(0, 5, normal_length=8192, segments=0)
    save_csv(g.normal, tmp_path / "n.csv")
    assert run("detect-periods", "--preset", "wave", "--input", tmp_path / "n.csv", "--plots",
               "--out", tmp_path / "o") == 0
    doc = json.loads((tmp_path / "o" / "marks.json").read_text())["signals"]["n.csv"]
    assert 240 <= doc["s_hat"] <= 272
    assert np.all(np.diff(doc["marks"]) >= 192) and (tmp_path / "o" / "n_marks.svg").is_file()
