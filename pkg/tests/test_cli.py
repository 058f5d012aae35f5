import json

import numpy as np
import pytest

from aflite import io
from aflite.cli import main
from aflite.core import FilterResult
from aflite.errors import EvaluationError
from aflite.evaluation import evaluate, stratified_holdout
from aflite.synthetic import SyntheticSpec, generate

SMALL = {"n_points": 60}
FAST = {"m": 16, "t": 40, "k": 2, "train": {"max_epochs": 100}}


@pytest.fixture
def small_data(tmp_path):
    out = tmp_path / "data"
    assert main(["--mode", "generate", "--separation", "0", "--out-dir", str(out),
                 "--config", str(write_config(tmp_path, {"synthetic": SMALL}))]) == 0
    return out


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def test_generate_mode(small_data):
    ds = io.load_embeddings(small_data / "embeddings.csv")
    assert len(ds) == 120 and ds.dim == 4
    bias, flip = io.load_masks(small_data / "masks.csv", ds.ids)
    assert bias.sum() == 90 and flip.sum() == 9


def filter_args(small_data, out, *extra):
    return ["--mode", "filter", "--embeddings", str(small_data / "embeddings.csv"),
            "--masks", str(small_data / "masks.csv"), "--out-dir", str(out),
            "--m", "16", "--t", "40", "--k", "2", "--seed", "5", *extra]


def test_filter_mode_outputs(small_data, tmp_path):
    out = tmp_path / "run"
    assert main(filter_args(small_data, out, "--threads", "1", "--emit-plot-data")) == 0
    retained = (out / "retained_ids.txt").read_text().split()
    history = (out / "history.csv").read_text().splitlines()
    report = json.loads((out / "report.json").read_text())
    assert history[0] == "phase,removed_count,mean_score,max_score,remaining"
    assert int(history[-1].split(",")[-1]) == len(retained)
    assert report["dataset_sizes"] == [120, len(retained), len(retained)]
    assert 0 <= report["bias_removal"] <= 1
    assert report["filter_config"]["n"] == 41
    assert len((out / "plot_data.csv").read_text().splitlines()) == 121


def test_filter_runs_are_byte_identical(small_data, tmp_path):
    outputs = []
    for i, threads in enumerate(["1", "1", "4", "4"]):
        out = tmp_path / f"run{i}"
        assert main(filter_args(small_data, out, "--threads", threads)) == 0
        outputs.append([(out / f).read_bytes() for f in ("retained_ids.txt", "history.csv")])
    assert all(o == outputs[0] for o in outputs)


def test_config_file_with_relative_paths(small_data, tmp_path):
    cfg = {
        "mode": "filter",
        "embeddings": "data/embeddings.csv",
        "out_dir": "cfg_out",
        "threads": 1,
        "filter": {**FAST, "tau": 1.01},
    }
    assert main(["--config", str(write_config(tmp_path, cfg))]) == 0
    assert len((tmp_path / "cfg_out" / "retained_ids.txt").read_text().split()) == 120


def test_sweep_writes_one_report_per_level(tmp_path):
    cfg = {"mode": "synthetic-sweep", "synthetic": SMALL, "filter": FAST, "threads": 1}
    out = tmp_path / "sweep"
    assert main(["--config", str(write_config(tmp_path, cfg)), "--out-dir", str(out)]) == 0
    for level in range(4):
        report = json.loads((out / f"separation_{level}" / "report.json").read_text())
        assert report["separation_index"] == level
    summary = (out / "summary.csv").read_text().splitlines()
    assert summary[0].startswith("separation_index,gap")
    assert len(summary) == 5


def test_afopt_check_mode(tmp_path):
    out = tmp_path / "check"
    assert main(["--mode", "afopt-check", "--m", "32", "--out-dir", str(out), "--threads", "1"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["afopt_subset_ids"] == ["n0", "n1", "n2", "n3", "n4"]
    assert report["bias_gap"] >= -1e-12


def test_missing_embeddings_is_a_config_error(tmp_path, capsys):
    assert main(["--mode", "filter", "--out-dir", str(tmp_path)]) == 2
    assert "module=cli" in capsys.readouterr().err


@pytest.mark.parametrize("cfg", [
    {"mode": "filter", "bogus": 1},
    {"mode": "synthetic-sweep", "filter": {"gamma": 2}},
    {"mode": "synthetic-sweep", "synthetic": {"bias_fraction": 2.0}},
    {"mode": "synthetic-sweep", "filter": {"t": 10, "n": 5}},
    {"mode": "nope"},
])
def test_config_errors_exit_nonzero(tmp_path, cfg):
    assert main(["--config", str(write_config(tmp_path, cfg))]) == 2


def test_parse_error_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("id,f0,label\na,1,0\nb,2\n")
    assert main(["--mode", "filter", "--embeddings", str(bad), "--out-dir", str(tmp_path)]) == 1
    assert "line 3" in capsys.readouterr().err


def test_phase_failure_diagnostic(tmp_path, capsys):
    data = tmp_path / "skewed.csv"
    rows = [f"i{j},{j}.0,{int(j == 0)}" for j in range(8)]
    data.write_text("id,f0,label\n" + "\n".join(rows) + "\n")
    code = main(["--mode", "filter", "--embeddings", str(data), "--t", "1", "--n", "3",
                 "--m", "4", "--out-dir", str(tmp_path / "o")])
    err = capsys.readouterr().err
    assert code == 1
    assert "module=classifiers" in err and "phase=0" in err
    assert not (tmp_path / "o").exists()


def test_threads_from_environment(small_data, tmp_path, monkeypatch):
    monkeypatch.setenv("AFLITE_THREADS", "zero")
    assert main(filter_args(small_data, tmp_path / "o")) == 2
    monkeypatch.setenv("AFLITE_THREADS", "2")
    assert main(filter_args(small_data, tmp_path / "o")) == 0


# --- evaluation --------------------------------------------------------------

def test_keeping_everything_changes_nothing():
    data = generate(SyntheticSpec(n_points=80), 1)
    ds = data.dataset
    report = evaluate(ds, FilterResult(ds.ids), rng=np.random.default_rng(0),
                      bias_mask=data.bias_mask)
    before, after, control = report.linear_accuracy
    assert before == after == control
    assert report.rbf_accuracy[0] == report.rbf_accuracy[1]
    assert report.bias_removal == 0.0
    assert report.flip_removal is None


def test_tiny_retained_set_is_rejected():
    ds = generate(SyntheticSpec(n_points=40), 1).dataset
    with pytest.raises(EvaluationError):
        evaluate(ds, FilterResult(ds.ids[:2]), rng=np.random.default_rng(0))


def test_holdout_is_stratified():
    labels = np.repeat([0, 1, 2], [10, 20, 30])
    mask = stratified_holdout(labels, 0.2, np.random.default_rng(0))
    assert [mask[labels == c].sum() for c in range(3)] == [2, 4, 6]
