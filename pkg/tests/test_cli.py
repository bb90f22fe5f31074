import csv
import json

import numpy as np
import pytest

from cbmfs.cli import main
from cbmfs.embedding_store import EmbeddingClass, EmbeddingDataset, save_dataset


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    assert main(["gen-synthetic", "--out", str(d), "--dim", "16", "--n-base", "20", "--n-novel", "12",
                 "--samples-per-class", "30", "--noise-scale", "0.8", "--split-val", "5", "--seed", "7"]) == 0
    return d


def _eval(d, *extra, tasks="60"):
    return ["eval", "--base", str(d / "base.cbme"), "--novel", str(d / "novel.cbme"), "--n-tasks", tasks, *extra]


def test_gen_synthetic_is_reproducible(tmp_path):
    args = ["gen-synthetic", "--dim", "8", "--n-base", "6", "--n-novel", "5", "--samples-per-class", "20",
            "--seed", "7"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("base.cbme", "novel.cbme"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_cbm_alpha_one_matches_inductive(data_dir, tmp_path):
    assert main(_eval(data_dir, "--method", "inductive", "--out", str(tmp_path / "i.json"))) == 0
    assert main(_eval(data_dir, "--method", "cbm", "--alpha", "1.0", "--out", str(tmp_path / "c.json"))) == 0
    assert main(_eval(data_dir, "--method", "cbm-lle", "--alpha", "1.0", "--lle-k", "5", "--lle-dim", "8",
                      "--out", str(tmp_path / "l.json"))) == 0
    reps = [json.loads((tmp_path / f"{n}.json").read_text()) for n in "icl"]
    assert reps[0]["accuracy"] == reps[1]["accuracy"] == reps[2]["accuracy"]
    assert reps[0]["ci95"] == reps[1]["ci95"] == reps[2]["ci95"]


def test_eval_writes_manifest(data_dir, tmp_path):
    out = tmp_path / "r.json"
    assert main(_eval(data_dir, "--method", "cbm", "--out", str(out))) == 0
    man = json.loads((tmp_path / "r.json.manifest.json").read_text())
    assert man["subcommand"] == "eval" and man["seed"] == 0
    assert set(man["inputs"]) == {str(data_dir / "base.cbme"), str(data_dir / "novel.cbme")}
    assert all(len(h) == 64 for h in man["inputs"].values())


def test_eval_csv_format(data_dir, capsys):
    assert main(_eval(data_dir, "--format", "csv")) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert len(rows) == 1 and rows[0]["n_tasks"] == "60"


def test_eval_from_cached_base_matrix(data_dir, tmp_path, capsys):
    assert main(["base-matrix", "--base", str(data_dir / "base.cbme"), "--out", str(tmp_path / "B.npz")]) == 0
    capsys.readouterr()
    main(_eval(data_dir, "--method", "cbm"))
    a = json.loads(capsys.readouterr().out)
    args = _eval(data_dir, "--method", "cbm")
    args[2] = str(tmp_path / "B.npz")
    main(args)
    b = json.loads(capsys.readouterr().out)
    assert a["accuracy"] == b["accuracy"]


def test_sweep_grid_and_report(data_dir, tmp_path):
    out = tmp_path / "s.csv"
    args = ["sweep", "--base", str(data_dir / "base.cbme"), "--novel", str(data_dir / "novel_val.cbme"),
            "--alpha-grid", "0:1:0.05", "--n-tasks", "30", "--out", str(out)]
    assert main(args) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 21
    assert sorted(float(r["alpha"]) for r in rows) == [round(0.05 * i, 10) for i in range(21)]
    best = json.loads((tmp_path / "s.csv.best.json").read_text())
    assert best["accuracy"] == float(rows[0]["accuracy"])

    # rerun from the manifest reproduces the CSV byte for byte
    first = out.read_bytes()
    man = json.loads((tmp_path / "s.csv.manifest.json").read_text())
    assert main(man["argv"]) == 0
    assert out.read_bytes() == first

    rep = tmp_path / "fig.json"
    assert main(["report", str(out), "--format", "json", "--out", str(rep)]) == 0
    series = json.loads(rep.read_text())["series"]
    assert len(series) == 1 and series[0]["alpha"] == sorted(series[0]["alpha"])
    assert len(series[0]["accuracy"]) == 21


def test_sweep_lle_variants(data_dir, tmp_path):
    out = tmp_path / "l.csv"
    args = ["sweep", "--base", str(data_dir / "base.cbme"), "--novel", str(data_dir / "novel_val.cbme"),
            "--method", "cbm-lle", "--alpha-grid", "0.5,1", "--lle-k", "3,5", "--lle-dim", "6",
            "--l2-normalize", "both", "--n-tasks", "5", "--out", str(out)]
    assert main(args) == 0
    assert len(list(csv.DictReader(out.open()))) == 8


def test_kl_without_softmax_rejected(data_dir, capsys):
    assert main(_eval(data_dir, "--method", "cbm", "--sigma", "kl", "--no-softmax")) == 1
    assert "softmax" in capsys.readouterr().err


def test_usage_errors(capsys):
    assert main([]) == 1
    assert main(["eval", "--method", "nope"]) == 1
    assert main(["sweep", "--base", "x", "--novel", "y", "--out", "z", "--alpha-grid", "1:0:0.1"]) == 1
    err = capsys.readouterr().err
    assert err.count("\n") == 3


def test_data_errors(data_dir, tmp_path):
    bad = tmp_path / "bad.cbme"
    bad.write_bytes(b"NOPE" + bytes(20))
    assert main(["eval", "--base", str(bad), "--novel", str(data_dir / "novel.cbme")]) == 2
    assert main(["eval", "--base", str(tmp_path / "missing"), "--novel", str(data_dir / "novel.cbme")]) == 2
    # novel file passed as base
    assert main(["eval", "--base", str(data_dir / "novel.cbme"), "--novel", str(data_dir / "novel.cbme")]) == 2


def test_numerical_failure_exit_code(data_dir, tmp_path):
    cols = np.array([[0, 0], [1, 0], [1, 0], [5, 5], [9, 1], [3, 7]], dtype=np.float32)
    classes = tuple(EmbeddingClass(i, np.repeat(cols[i : i + 1], 3, axis=0)) for i in range(6))
    save_dataset(EmbeddingDataset(2, "base", classes), tmp_path / "dup.cbme")
    novel = EmbeddingDataset(2, "novel", tuple(
        EmbeddingClass(10 + i, np.random.default_rng(i).standard_normal((20, 2)).astype(np.float32))
        for i in range(5)))
    save_dataset(novel, tmp_path / "nov.cbme")
    args = ["eval", "--base", str(tmp_path / "dup.cbme"), "--novel", str(tmp_path / "nov.cbme"), "--method",
            "cbm-lle", "--lle-k", "2", "--lle-dim", "2", "--lle-reg", "0", "--n-tasks", "2"]
    assert main(args) == 3


def test_threads_env_fallback(data_dir, monkeypatch, capsys):
    main(_eval(data_dir, "--method", "cbm", "--per-task"))
    a = json.loads(capsys.readouterr().out)
    monkeypatch.setenv("CBM_DEFAULT_THREADS", "3")
    main(_eval(data_dir, "--method", "cbm", "--per-task"))
    b = json.loads(capsys.readouterr().out)
    assert a["per_task"] == b["per_task"]
