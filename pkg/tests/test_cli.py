import csv
import json
import subprocess
import sys

import pytest

from safewrap.adjudicator import ThresholdAdjudicator, save_adjudicator
from safewrap.cli import main, read_measures_csv
from safewrap.uncertainty import REFERENCE_LAYOUT

HEADER = "UM1,UM2,UM3,UM4,UM5,UM6_ST,UM6_NB,UM6_TR,UM7,UM8,UM9,misc_flag"


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--n", "400", "--features", "4", "--separation", "2", "--seed", "1",
                 "--out", str(d / "data.csv")]) == 0
    assert main(["measures", "--dataset", str(d / "data.csv"), "--classifier", "gaussian_nb",
                 "--seed", "3", "--out", str(d / "m1.csv")]) == 0
    return d


def _metrics(path):
    with open(path, newline="") as fh:
        return {row["metric"]: row["value"] for row in csv.DictReader(fh)}


def test_measures_csv_layout(workdir):
    lines = (workdir / "m1.csv").read_text().splitlines()
    assert lines[0] == HEADER
    assert len(lines) == 201
    assert {line.rsplit(",", 1)[1] for line in lines[1:]} <= {"correct", "misc"}
    meta = json.loads((workdir / "m1.csv.meta.json").read_text())
    assert meta["seed"] == 3 and "random forest" in meta["substitutions"]
    assert set(meta["score_seconds_per_point"]) == set(REFERENCE_LAYOUT)


def test_measures_rerun_is_byte_identical(workdir):
    assert main(["measures", "--dataset", str(workdir / "data.csv"), "--classifier", "gaussian_nb",
                 "--seed", "3", "--out", str(workdir / "m1b.csv")]) == 0
    assert (workdir / "m1.csv").read_bytes() == (workdir / "m1b.csv").read_bytes()


def test_unreadable_dataset_is_bad_input(workdir, capsys):
    assert main(["measures", "--dataset", str(workdir / "nope.csv"), "--seed", "0",
                 "--out", str(workdir / "x.csv")]) == 2
    assert "error" in capsys.readouterr().err


def test_unknown_classifier_is_bad_input(workdir):
    assert main(["measures", "--dataset", str(workdir / "data.csv"), "--classifier", "xgb",
                 "--out", str(workdir / "x.csv")]) == 2


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_internal_fault_exit_code(workdir, monkeypatch):
    import safewrap.cli as cli

    def boom(*a, **k):
        raise RuntimeError("boom")

    monkeypatch.setattr(cli, "make_blobs", boom)
    assert main(["synth", "--out", str(workdir / "z.csv")]) == 1


def test_train_adjudicator_pools_sources(workdir):
    assert main(["measures", "--dataset", str(workdir / "data.csv"), "--classifier", "lr",
                 "--seed", "4", "--out", str(workdir / "m2.csv")]) == 0
    out = workdir / "bundle.json"
    assert main(["train-adjudicator", "--dataset", str(workdir / "m1.csv"), "--dataset",
                 str(workdir / "m2.csv"), "--seed", "0", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["measure_layout"] == list(REFERENCE_LAYOUT)
    meta = doc["metadata"]
    assert len(meta["sources"]) == 2 and meta["n_examples"] == 400
    assert 0 < meta["flag_rate"] < 1
    assert "accuracy" in meta["heldout_detection"]


def test_train_adjudicator_rejects_mixed_headers(workdir):
    other = workdir / "other.csv"
    lines = (workdir / "m1.csv").read_text().splitlines()
    other.write_text("\n".join([lines[0].replace("UM9", "UMX")] + lines[1:]) + "\n")
    assert main(["train-adjudicator", "--dataset", str(workdir / "m1.csv"), "--dataset", str(other),
                 "--out", str(workdir / "bad.json")]) == 2


def test_all_correct_csv_gives_constant_bundle(workdir, capsys):
    lines = (workdir / "m1.csv").read_text().splitlines()
    clean = workdir / "clean.csv"
    clean.write_text("\n".join([lines[0]] + [l for l in lines[1:] if l.endswith("correct")]) + "\n")
    assert main(["train-adjudicator", "--dataset", str(clean), "--out", str(workdir / "c.json")]) == 0
    assert "warning" in capsys.readouterr().err
    assert json.loads((workdir / "c.json").read_text())["metadata"]["constant"] is False


def test_evaluate_with_constant_pass_bundle(workdir):
    assert main(["evaluate", "--dataset", str(workdir / "data.csv"), "--classifier", "gaussian_nb",
                 "--bundle", str(workdir / "c.json"), "--seed", "3",
                 "--out", str(workdir / "e.csv")]) == 0
    m = _metrics(workdir / "e.csv")
    assert m["epsilon_w"] == m["epsilon"] and float(m["phi"]) == 0
    assert m["omission_quality"] == "n/a"


def test_evaluate_oracle_and_trace(workdir):
    assert main(["evaluate", "--dataset", str(workdir / "data.csv"), "--classifier", "gaussian_nb",
                 "--oracle", "--seed", "3", "--out", str(workdir / "o.csv"),
                 "--trace", str(workdir / "t.csv")]) == 0
    m = {k: float(v) for k, v in _metrics(workdir / "o.csv").items()}
    assert m["epsilon_w"] == 0 and m["phi_c"] == 0 and m["epsilon"] > 0
    assert abs(m["alpha_w"] + m["epsilon_w"] + m["phi"] - 1) <= 1e-12
    assert abs(m["phi"] - m["phi_c"] - m["phi_m"]) <= 1e-12
    with open(workdir / "t.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 200
    assert all((r["verdict"] == "omit") == (r["predicted"] != r["label"]) for r in rows)


def test_evaluate_with_trained_bundle(workdir):
    assert main(["evaluate", "--dataset", str(workdir / "data.csv"), "--classifier", "gaussian_nb",
                 "--bundle", str(workdir / "bundle.json"), "--seed", "3",
                 "--out", str(workdir / "f.csv")]) == 0
    m = {k: float(v) for k, v in _metrics(workdir / "f.csv").items() if k != "omission_quality"}
    assert m["epsilon_w"] <= m["epsilon"] and m["alpha_w"] <= m["alpha"]


def test_evaluate_needs_bundle(workdir):
    assert main(["evaluate", "--dataset", str(workdir / "data.csv")]) == 2


def test_importance_table(workdir, capsys):
    assert main(["importance", "--bundle", str(workdir / "bundle.json"),
                 "--out", str(workdir / "imp.csv")]) == 0
    printed = capsys.readouterr().out
    assert "reference_importance" in printed
    with open(workdir / "imp.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 11
    values = [float(r["importance"]) for r in rows]
    assert values == sorted(values, reverse=True)
    assert abs(sum(values) - 1) <= 1e-9
    assert all(r["time"] in "NLMH" for r in rows)
    assert {r["measure"]: r["reference_importance"] for r in rows}["UM7"] == "0.289"


def test_importance_rejects_rule_bundle(workdir):
    rules = ThresholdAdjudicator([("UM3", ">", 0.5)]).fit(layout=REFERENCE_LAYOUT)
    save_adjudicator(rules, workdir / "rules.json")
    assert main(["importance", "--bundle", str(workdir / "rules.json")]) == 2
    assert main(["importance", "--bundle", str(workdir / "missing.json")]) == 2


def test_config_file_and_flag_precedence(workdir):
    cfg = workdir / "run.toml"
    cfg.write_text('seed = 1\n[synth]\nn = 30\nfeatures = 2\nseparation = 5.0\n')
    assert main(["synth", "--config", str(cfg), "--out", str(workdir / "s1.csv")]) == 0
    assert main(["synth", "--config", str(cfg), "--n", "40", "--out", str(workdir / "s2.csv")]) == 0
    assert len((workdir / "s1.csv").read_text().splitlines()) == 31
    s2 = (workdir / "s2.csv").read_text().splitlines()
    assert len(s2) == 41 and s2[0] == "x0,x1,label"
    bad = workdir / "bad.toml"
    bad.write_text("seed = = 1")
    assert main(["synth", "--config", str(bad), "--out", str(workdir / "s3.csv")]) == 2


def test_read_measures_csv_round_trip(workdir):
    layout, M, flags = read_measures_csv(workdir / "m1.csv")
    assert layout == REFERENCE_LAYOUT and M.shape == (200, 11) and flags.dtype == bool


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "safewrap.cli", "synth", "--n", "10",
                           "--out", str(tmp_path / "d.csv")], capture_output=True, text=True)
    assert proc.returncode == 0
    proc = subprocess.run([sys.executable, "-m", "safewrap.cli", "importance"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
