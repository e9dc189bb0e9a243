import csv
import json

import numpy as np
import pytest

from survmidas.cli import main
from survmidas.data import load_dataset
from survmidas.midas import aggregate
from survmidas.model import load_model
from survmidas.selection import training_weights
from survmidas.solver import PenaltySpec, fit, predict_prob


def _rows(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


@pytest.fixture(scope="module")
def data_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "sim.csv"
    assert main(["simulate", "--data-only", "--scenario", "1", "--n", "300", "--K", "4",
                 "--seed", "5", "--out", str(path)]) == 0
    return path


@pytest.fixture(scope="module")
def horizon(data_csv):
    ds = load_dataset(data_csv, 6, 4)
    return float(np.percentile(ds.time[ds.status == 1], 40))


def test_simulate_is_byte_identical(tmp_path):
    args = ["simulate", "--scenario", "1", "--n", "300", "--K", "3", "--reps", "2",
            "--percentiles", "30", "--methods", "lasso_m", "--n-lambda", "5", "--k", "3",
            "--seed", "7"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    header = a.read_text().splitlines()[0]
    assert header.startswith("# survmidas ") and "seed=7" in header and "config=" in header


def test_fit_then_predict(tmp_path, data_csv, horizon, capsys):
    model = tmp_path / "m.json"
    assert main(["fit", "--input", str(data_csv), "--s", "6", "--t", str(horizon),
                 "--lambda", "0.05", "--alpha", "0.5", "--model", str(model)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["converged"]
    out = tmp_path / "pred.csv"
    assert main(["predict", "--model", str(model), "--input", str(data_csv),
                 "--out", str(out)]) == 0
    rows = _rows(out)
    assert len(rows) == 300
    probs = np.array([float(r["prob"]) for r in rows])
    assert np.all((probs > 0) & (probs < 1))

    # the saved model reproduces the in-memory fit
    ds = load_dataset(data_csv, 6, 4)
    loaded = load_model(model)
    x = aggregate(ds, loaded.dictionary)
    w, _ = training_weights(ds, horizon)
    direct = predict_prob(fit(x, w, PenaltySpec.for_design(x, 0.5, 0.05)), x.x)
    assert np.abs(loaded.predict(ds) - direct).max() < 1e-12
    assert np.abs(probs - direct).max() < 1e-12


def test_cv_model_is_reloadable(tmp_path, data_csv, horizon, capsys):
    model, table = tmp_path / "cv.json", tmp_path / "cv.csv"
    args = ["cv", "--input", str(data_csv), "--s", "6", "--t", str(horizon), "--metric", "auc",
            "--k", "3", "--n-lambda", "6", "--ratio", "0.05", "--alpha-grid", "0.5,1",
            "--seed", "2"]
    assert main(args + ["--model", str(model), "--out", str(table)]) == 0
    chosen = json.loads(capsys.readouterr().out)
    saved = json.loads(model.read_text())
    assert saved["alpha"] == chosen["alpha"] and saved["lambda"] == chosen["lambda"]
    out = tmp_path / "p.csv"
    assert main(["predict", "--model", str(model), "--input", str(data_csv), "--out", str(out)]) == 0

    table_threads = tmp_path / "cv2.csv"
    assert main(args + ["--threads", "2", "--out", str(table_threads)]) == 0
    capsys.readouterr()
    a = np.array([[float(r["mean"]), float(r["sd"])] for r in _rows(table)])
    b = np.array([[float(r["mean"]), float(r["sd"])] for r in _rows(table_threads)])
    assert np.allclose(a, b, rtol=0, atol=1e-12, equal_nan=True)


def test_path_and_exports(tmp_path, data_csv, horizon, capsys):
    path, km, dic = tmp_path / "path.csv", tmp_path / "km.csv", tmp_path / "dict.csv"
    assert main(["fit", "--input", str(data_csv), "--s", "6", "--t", str(horizon),
                 "--path", "8,0.05", "--out", str(path), "--export-km", str(km),
                 "--export-dict", str(dic)]) == 0
    capsys.readouterr()
    rows = _rows(path)
    assert 1 <= len(rows) <= 8
    lams = [float(r["lambda"]) for r in rows]
    assert lams == sorted(lams, reverse=True)
    assert len(_rows(dic)) == 24
    surv = [float(r["survival"]) for r in _rows(km)]
    assert surv == sorted(surv, reverse=True)


def test_evaluate_with_plot(tmp_path, capsys):
    rng = np.random.default_rng(0)
    n = 120
    score = rng.uniform(size=n)
    time = 6 + rng.exponential(2 / (0.2 + score))
    status = (rng.random(n) < 0.8).astype(int)
    path = tmp_path / "s.csv"
    path.write_text("score,time,status\n" + "".join(f"{float(a)!r},{float(b)!r},{c}\n"
                                                    for a, b, c in zip(score, time, status)))
    svg = tmp_path / "roc.svg"
    assert main(["evaluate", "--scores", str(path), "--t", "7.5", "--bootstrap", "20",
                 "--plot", str(svg), "--out", str(tmp_path / "roc.csv")]) == 0
    res = json.loads(capsys.readouterr().out)
    assert 0.5 < res["auc"] <= 1 and res["ci_lo"] <= res["ci_hi"]
    assert svg.read_text().lstrip().startswith("<?xml")


def test_exit_codes(tmp_path, data_csv, capsys):
    assert main([]) == 2
    assert main(["fit", "--input", str(data_csv), "--s", "6"]) == 2  # missing --t
    assert main(["fit", "--input", str(data_csv), "--s", "6", "--t", "8"]) == 2  # no lambda/path
    assert main(["predict", "--model", str(tmp_path / "absent.json"), "--input", str(data_csv),
                 "--out", str(tmp_path / "x.csv")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["predict", "--model", str(bad), "--input", str(data_csv),
                 "--out", str(tmp_path / "x.csv")]) == 1
    err = capsys.readouterr().err
    assert "error" in err.lower()
