import csv
import json

import pytest

from side.cli import main
from side.data import read_dataset
from side.network import load_checkpoint

SMALL = ["--hidden", "8", "--feature-dim", "6", "--projector-hidden", "6", "--projector-out", "4"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["gen-data", "--n-per-class", "30", "--seed", "1", "--out-dir", str(d)]) == 0
    assert main(["pretrain", "--source", str(d / "source.csv"), "--out", str(d / "src.json"),
                 "--source-epochs", "60", "--metrics", str(d / "src.csv"), *SMALL]) == 0
    return d


def _adapt(d, name, *extra, epochs="4"):
    return main(["adapt", "--checkpoint", str(d / "src.json"), "--target", str(d / "target.csv"),
                 "--out", str(d / f"{name}.json"), "--metrics", str(d / f"{name}.csv"),
                 "--summary", str(d / f"{name}.summary.json"), *(["--epochs", epochs] if epochs else []), "--batch-size", "16",
                 "--n-m", "3", *extra])


def test_gen_data_outputs(workdir):
    src = read_dataset(workdir / "source.csv")
    assert len(src) == 60 and src.num_classes == 2
    assert (workdir / "target.csv.json").exists() or any(workdir.glob("target*.json"))


def test_pretrain_outputs(workdir):
    model = load_checkpoint(workdir / "src.json")
    assert model.arch.feature_dim == 6
    rows = list(csv.DictReader((workdir / "src.csv").open()))
    assert len(rows) == 60


def test_adapt_and_eval(workdir, capsys):
    assert _adapt(workdir, "a", "--selection-dump", str(workdir / "sel.csv")) == 0
    summary = json.loads((workdir / "a.summary.json").read_text())
    assert set(summary) == {"final_target_acc", "source_only_acc", "per_refresh_intermediate_acc"}
    # E=4, alpha=0.3: refresh at epoch 2, plus the initial selection
    assert [e["epoch"] for e in summary["per_refresh_intermediate_acc"]] == [1, 2]
    assert len(list(csv.DictReader((workdir / "a.csv").open()))) == 4
    sel = list(csv.DictReader((workdir / "sel.csv").open()))
    assert len(sel) == 2 * 2 * 3
    capsys.readouterr()
    assert main(["eval", "--checkpoint", str(workdir / "a.json"), "--data", str(workdir / "target.csv")]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(summary["final_target_acc"])


def test_adapt_byte_identical(workdir):
    assert _adapt(workdir, "r1") == 0
    assert _adapt(workdir, "r2") == 0
    assert (workdir / "r1.csv").read_bytes() == (workdir / "r2.csv").read_bytes()
    assert (workdir / "r1.json").read_bytes() == (workdir / "r2.json").read_bytes()


def test_config_file_with_flag_override(workdir):
    cfg = workdir / "cfg.json"
    cfg.write_text(json.dumps({"epochs": 10, "alpha": 0.5}))
    assert _adapt(workdir, "c", "--config", str(cfg), epochs=None) == 0
    summary = json.loads((workdir / "c.summary.json").read_text())
    assert [e["epoch"] for e in summary["per_refresh_intermediate_acc"]] == [1, 5]
    assert _adapt(workdir, "c", "--config", str(cfg), "--alpha", "0.3", epochs=None) == 0
    summary = json.loads((workdir / "c.summary.json").read_text())
    assert [e["epoch"] for e in summary["per_refresh_intermediate_acc"]] == [1, 3, 6, 9]
    assert len(list(csv.DictReader((workdir / "c.csv").open()))) == 10


def test_export_embeddings(workdir):
    out = workdir / "emb.csv"
    assert main(["export-embeddings", "--checkpoint", str(workdir / "src.json"),
                 "--data", str(workdir / "target.csv"), "--out", str(out), "--n-m", "2"]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 60
    assert sum(r["is_intermediate"] == "1" for r in rows) == 4


def test_grad_check(capsys):
    assert main(["grad-check", "--instances", "2"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 6 and all(line.startswith("PASS") for line in lines)
    assert main(["grad-check", "--instances", "1", "--tol", "0"]) == 3


def test_exit_codes(workdir, tmp_path):
    assert _adapt(workdir, "bad", "--alpha", "0") == 2
    bad_cfg = tmp_path / "bad.json"
    bad_cfg.write_text(json.dumps({"no_such_field": 1}))
    assert _adapt(workdir, "bad", "--config", str(bad_cfg)) == 2
    assert main(["eval", "--checkpoint", str(tmp_path / "nope.json"), "--data", str(workdir / "target.csv")]) == 4
    broken = tmp_path / "broken.csv"
    broken.write_text("id,label,f0,f1\n0,0,1.0\n")
    assert main(["eval", "--checkpoint", str(workdir / "src.json"), "--data", str(broken)]) == 4


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numerical_failure_exit_code(workdir):
    assert _adapt(workdir, "nan", "--lr-backbone", "1e200", "--lr-classifier", "1e200") == 3
