import json
from importlib import resources
from pathlib import Path

import pytest

from conftest import IDS
from hanpron.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main


def bundled(name):
    return str(resources.files("hanpron.configs").joinpath(f"{name}.json"))


def run(capsys, *argv):
    code = main(["-q", *argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_decompose(capsys):
    code, out, _ = run(capsys, "decompose", "--ids", str(IDS), "懾", "耳")
    assert code == EXIT_OK
    she, er = out.splitlines()
    assert she.split("\t")[:2] == ["懾", "⿰ 忄 ⿱ 耳 ⿰ 耳 耳"]
    assert she.split("\t")[2] == "忄:1 耳:3"
    assert er.split("\t")[1] == "耳"


def test_decompose_from_file(capsys, tmp_path):
    (tmp_path / "chars.txt").write_text("懾\n耳\n", encoding="utf-8")
    code, out, _ = run(capsys, "decompose", "--ids", str(IDS), "--file", str(tmp_path / "chars.txt"))
    assert code == EXIT_OK and len(out.splitlines()) == 2


def test_decompose_unknown(capsys):
    code, _, err = run(capsys, "decompose", "--ids", str(IDS), "\U0010fffd")
    assert code == EXIT_USAGE and "U+10FFFD" in err


def test_usage_errors(capsys, tmp_path):
    assert run(capsys, "frobnicate")[0] == EXIT_USAGE
    assert run(capsys, "decompose", "--ids", str(tmp_path / "none.tsv"), "懾")[0] == EXIT_USAGE
    assert run(capsys, "eval", "--model", str(tmp_path), "--data", str(tmp_path))[0] == EXIT_USAGE


def test_bad_config_leaves_no_run_dir(capsys, tmp_path, dataset_dir):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"model": "mlp", "hidden_sizes": [4], "hidden_dropout": [0.1, 0.2]}))
    out = tmp_path / "run"
    code, _, err = run(capsys, "train", "--config", str(cfg), "--data", str(dataset_dir), "--out", str(out))
    assert code == EXIT_USAGE and "hidden_dropout" in err
    assert not out.exists()
    cfg.write_text(json.dumps({"model": "mlp", "learning_rate": 1}))
    assert run(capsys, "train", "--config", str(cfg), "--data", str(dataset_dir), "--out", str(out))[0] == EXIT_USAGE
    assert not out.exists()


def test_missing_dataset(capsys, tmp_path):
    code, _, err = run(capsys, "train", "--config", bundled("dt_bor"), "--data", str(tmp_path / "nope"),
                       "--out", str(tmp_path / "run"))
    assert code == EXIT_USAGE and not (tmp_path / "run").exists()


def test_dt_train_eval_predict(capsys, tmp_path, dataset_dir):
    cfg = tmp_path / "dt_small.json"
    cfg.write_text(json.dumps({"model": "dt", "max_depth": 4}))
    run_dir = tmp_path / "run"
    code, out, _ = run(capsys, "train", "--config", str(cfg), "--data", str(dataset_dir), "--out", str(run_dir))
    assert code == EXIT_OK
    assert {p.name for p in run_dir.iterdir()} == {"manifest.json", "log.jsonl", "model.json"}
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["config"]["max_depth"] == 4 and "timestamps" in manifest

    # a second train into the same directory needs --overwrite
    code, _, _ = run(capsys, "train", "--config", str(cfg), "--data", str(dataset_dir), "--out", str(run_dir))
    assert code == EXIT_USAGE

    report = tmp_path / "report.json"
    code, out, _ = run(capsys, "eval", "--model", str(run_dir), "--data", str(dataset_dir), "--split", "dev",
                       "--out", str(report))
    assert code == EXIT_OK
    assert out.splitlines()[0].split() == ["Method", "SER", "TER", "On.", "Nu.", "Cd."]
    obj = json.loads(report.read_text())
    assert obj["counts"]["syllables"] == 1000 and obj["metadata"]["split"] == "dev"

    code, out, _ = run(capsys, "predict", "懾", "--model", str(run_dir), "--data", str(dataset_dir))
    assert code == EXIT_OK and len(out.splitlines()) == 1 and out.startswith("懾\t")
    assert run(capsys, "predict", "\U0010fffd", "--model", str(run_dir), "--data", str(dataset_dir))[0] == EXIT_USAGE

    code, out, _ = run(capsys, "compare", str(report), str(report), "--names", "a,b")
    assert code == EXIT_OK and out.count("*") >= 10


def test_neural_train_and_predict(capsys, tmp_path, dataset_dir):
    cfg = tmp_path / "mlp_tiny.json"
    cfg.write_text(json.dumps({"model": "multimodal", "embed_dim": 4, "lstm_size": 4, "lstm_layers": 1,
                               "hidden_sizes": [6], "hidden_dropout": [0.1], "max_epochs": 1}))
    run_dir = tmp_path / "run"
    code, _, _ = run(capsys, "train", "--config", str(cfg), "--data", str(dataset_dir), "--out", str(run_dir))
    assert code == EXIT_OK and (run_dir / "model.ckpt").exists()
    log = [json.loads(line) for line in (run_dir / "log.jsonl").read_text().splitlines()]
    assert len(log) == 1 and {"train_main", "train_aux", "dev_ser", "dev_ter"} <= set(log[0])
    code, out, _ = run(capsys, "predict", "懾", "--model", str(run_dir), "--data", str(dataset_dir))
    assert code == EXIT_OK and len(out.splitlines()) == 1


def test_gradcheck(capsys):
    code, out, _ = run(capsys, "gradcheck", "--config", bundled("gradcheck_mlp"), "--samples", "100")
    assert code == EXIT_OK and json.loads(out)["passed"] is True
    code, out, _ = run(capsys, "gradcheck", "--config", bundled("gradcheck_mlp"), "--samples", "100", "--corrupt")
    assert code == EXIT_RUNTIME and json.loads(out)["max_rel_error"] > 1e-2
    assert run(capsys, "gradcheck", "--config", bundled("dt_bor"))[0] == EXIT_USAGE
