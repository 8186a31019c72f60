import csv
import io
import json

import numpy as np
import pytest

import fedfairlp.fedsim as fedsim
from fedfairlp.cli import main
from fedfairlp.core import RngStream, save_csv
from fedfairlp.eval import gaussian_benchmark
from fedfairlp.lpbuild import generic_lp
from fedfairlp.lpsolve import SolverConfig, solve
from fedfairlp.scorefn import argmax_predictor, generate_synthetic, load_checkpoint


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    spec = gaussian_benchmark([0.3, 0.6], 400)
    train, _ = generate_synthetic(spec, RngStream(0, "train"))
    test, _ = generate_synthetic(spec, RngStream(0, "test"))
    save_csv(train, root / "train.csv")
    save_csv(test, root / "test.csv")
    cfg = {"fedavg": {"rounds": 4, "learning_rate": 0.2}, "seed": 3}
    (root / "config.json").write_text(json.dumps(cfg))
    assert main(["train", "--data", str(root / "train.csv"), "--config", str(root / "config.json"), "--out", str(root / "model.json")]) == 0
    return root


def test_train_outputs(files, capsys):
    assert (files / "model.json").exists()
    log = (files / "model.json.log").read_text().splitlines()
    assert len(log) == 4 and json.loads(log[-1])["round"] == 4
    out = files / "again.json"
    assert main(["train", "--data", str(files / "train.csv"), "--config", str(files / "config.json"), "--out", str(out)]) == 0
    assert out.read_bytes() == (files / "model.json").read_bytes()
    assert "round 4: loss" in capsys.readouterr().out


def test_missing_column(files, tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("f0,f1,a,y\n0.1,0.2,0,1\n")
    assert main(["train", "--data", str(bad), "--out", str(tmp_path / "m.json")]) == 3
    assert "'c'" in capsys.readouterr().err


def test_malformed_row(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("f0,a,c,y\n0.1,0,1,1\n0.1,0,1\n")
    assert main(["train", "--data", str(bad), "--out", str(tmp_path / "m.json")]) == 3
    assert "line 3" in capsys.readouterr().err


def _post(files, out, *extra):
    return main([
        "postprocess", "--data", str(files / "train.csv"), "--test", str(files / "test.csv"),
        "--model", str(files / "model.json"), "--metric", "eo", "--repeats", "2", "--out", str(out), *extra,
    ])


def test_postprocess_identity(files, tmp_path):
    assert _post(files, tmp_path / "run", "--eps-global", "1", "--eps-local", "1") == 0
    report = json.loads((tmp_path / "run" / "report.json").read_text())
    from fedfairlp.core import load_csv

    test = load_csv(files / "test.csv", 3, 2)
    base = argmax_predictor(load_checkpoint(files / "model.json")).predict_dataset(test)
    assert report["accuracy"] == np.count_nonzero(base == test.y) / len(test)
    assert (tmp_path / "run" / "predictor.json").exists()
    assert (tmp_path / "run" / "transcript.ndjson").read_text().count("\n") == 4


def test_postprocess_dp_notes(files, tmp_path, capsys):
    assert _post(files, tmp_path / "dp", "--eps-global", "0.05", "--eps-local", "0.05,0.1", "--dp-epsilon", "0.5") == 0
    report = json.loads((tmp_path / "dp" / "report.json").read_text())
    notes = [n for n in report["notes"] if n.startswith("dp scale")]
    assert notes == ["dp scale client 1: 0.005", "dp scale client 2: 0.005"]
    shown = json.loads(capsys.readouterr().out)
    assert set(shown) == {"accuracy", "global_disparity", "local_disparity_mean", "local_disparity_max", "lp_objective"}


def test_postprocess_bad_eps_local(files, tmp_path, capsys):
    assert _post(files, tmp_path / "x", "--eps-global", "0.05", "--eps-local", "0.1,0.1,0.1") == 3
    assert _post(files, tmp_path / "x", "--eps-global", "1.5", "--eps-local", "0.1") == 3


def test_postprocess_infeasible_exit(files, tmp_path, monkeypatch, capsys):
    bad = solve(generic_lp([1.0], [[1.0], [-1.0]], [0.2, -0.5]))
    monkeypatch.setattr(fedsim, "solve", lambda inst, cfg=None: bad)
    assert _post(files, tmp_path / "inf", "--eps-global", "0", "--eps-local", "0") == 2
    assert "Farkas certificate" in capsys.readouterr().err


def test_postprocess_numerical_failure_exit(files, tmp_path, monkeypatch):
    real = fedsim.solve
    monkeypatch.setattr(fedsim, "solve", lambda inst, cfg=None: real(inst, SolverConfig(max_iter=1)))
    assert _post(files, tmp_path / "num", "--eps-global", "0.01", "--eps-local", "0.01") == 4


def test_sweep_grid(files, tmp_path, capsys):
    out = tmp_path / "sw"
    rc = main([
        "sweep", "--data", str(files / "train.csv"), "--test", str(files / "test.csv"), "--model", str(files / "model.json"),
        "--metric", "eo", "--grid", "0.05,0.3,1", "--seeds", "2", "--repeats", "1", "--out", str(out),
    ])
    assert rc == 0
    rows = list(csv.reader(io.StringIO((out / "accuracy.csv").read_text())))
    assert rows[0][0] == "accuracy: eps_local \\ eps_global"
    cells = [float(v) for r in rows[1:] for v in r[1:]]
    assert len(cells) == 9
    doc = json.loads((out / "sweep.json").read_text())
    corner = doc["reports"][2][2]
    assert len(corner) == 2 and corner[0]["accuracy"] == corner[1]["accuracy"]
    for name in ("lp_objective", "global_max", "local_mean"):
        assert (out / f"{name}.csv").exists()


def test_oracle_suite(capsys):
    assert main(["oracle", "--suite", "region"]) == 0
    assert "suite region: PASS" in capsys.readouterr().out


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as info:
        main(["oracle", "--suite", "bogus"])
    assert info.value.code == 3
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 3
