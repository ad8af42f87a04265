import json
import subprocess
import sys

import pytest

from tripleset.cli import main


@pytest.fixture
def run_config(tmp_path):
    cfg = {"model": {"d": 16, "heads": 2, "m": 6, "encoder_layers": 1, "decoder_layers": 1},
           "training": {"epochs": 2, "batch_size": 4, "dev_fraction": 0.0}}
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    return path


def test_verify_appendix_reports_every_check(capsys):
    code = main(["verify-appendix"])
    out = capsys.readouterr().out
    assert "[PASS] assignment" in out and "[PASS] loss" in out and "[PASS] total cost" in out
    # the single published entry inconsistent with its own fixture probabilities
    failing = [line for line in out.splitlines() if line.startswith("[FAIL]")]
    assert failing == ["[FAIL] cost[0,2]: expected -2.1, got -1.7 (fixture terms 0.1 + 0.5 + 0 + 0.7 + 0.4)"]
    assert code == 1


def test_verify_appendix_perturbation_is_caught(capsys):
    assert main(["verify-appendix", "--perturb", "relation,1,0,0.05"]) == 1
    out = capsys.readouterr().out
    assert "[FAIL] cost[0,1]" in out and "[FAIL] loss" in out


def test_round_trip(tmp_path, run_config, capsys):
    data = tmp_path / "syn.jsonl"
    assert main(["gen-synthetic", "--out", str(data), "--n", "10", "--seed", "4"]) == 0
    assert (tmp_path / "syn.jsonl.manifest.json").is_file()
    ckpt = tmp_path / "ckpt"
    assert main(["train", "--config", str(run_config), "--train", str(data), "--checkpoint", str(ckpt),
                 "--seed", "1"]) == 0
    for name in ("params.bin", "config.json", "vocab.json", "relations.json", "train_log.jsonl"):
        assert (ckpt / name).is_file(), name
    epochs = [json.loads(x) for x in (ckpt / "train_log.jsonl").read_text().splitlines()]
    assert [r["epoch"] for r in epochs if r["kind"] == "epoch"] == [1, 2]

    report = tmp_path / "rep" / "eval"
    assert main(["eval", str(data), "--checkpoint", str(ckpt), "--out", str(report), "--mode", "partial"]) == 0
    scored = json.loads(report.with_suffix(".json").read_text())
    assert scored["mode"] == "partial" and scored["counts"]["gold"] > 0

    preds = tmp_path / "preds.jsonl"
    assert main(["predict", str(data), "--checkpoint", str(ckpt), "--out", str(preds)]) == 0
    lines = preds.read_text().splitlines()
    assert len(lines) == 10 and all("triples" in json.loads(x) for x in lines)


def test_exit_codes(tmp_path, run_config, capsys):
    assert main(["eval", str(tmp_path / "missing.jsonl"), "--checkpoint", str(tmp_path)]) == 2
    assert main(["train", "--config", str(run_config), "--train", str(tmp_path / "nope.jsonl")]) == 2
    assert main(["train", "--config", str(run_config)]) == 1
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{not json\n")
    assert main(["train", "--config", str(run_config), "--train", str(bad),
                 "--checkpoint", str(tmp_path / "c")]) == 1
    assert "bad.jsonl:1" in capsys.readouterr().err
    bad_cfg = tmp_path / "cfg.json"
    bad_cfg.write_text(json.dumps({"training": {"lr": 1}}))
    assert main(["train", "--config", str(bad_cfg), "--train", str(bad)]) == 1


def test_module_entry_point():
    done = subprocess.run([sys.executable, "-m", "tripleset.cli", "--help"], capture_output=True, text=True)
    assert done.returncode == 0
    for cmd in ("train", "eval", "predict", "verify-appendix", "gen-synthetic"):
        assert cmd in done.stdout
