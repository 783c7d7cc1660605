import json
import os
import subprocess
import sys

import numpy as np
import pytest

from sparsadv.cli import main
from sparsadv.io import read_json, read_jsonl, write_matrix


def cli(*args, env=None):
    full_env = dict(os.environ, **(env or {}))
    return subprocess.run([sys.executable, "-m", "sparsadv", *args], capture_output=True, text=True, env=full_env)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["gen", "--m", "16", "--n", "32", "--s", "2", "--count", "20", "--out", str(root / "data")]) == 0
    cfg = root / "lista.json"
    cfg.write_text(json.dumps({"epochs": 2, "samples_per_epoch": 256, "m": 16, "n": 32, "s": 2, "heldout": 20}))
    assert main(["train-lista", "--config", str(cfg), "--data", str(root / "data"), "--out", str(root / "model")]) == 0
    return root


def test_gen_and_train_outputs(workspace):
    assert read_json(workspace / "data" / "manifest.json")["count"] == 20
    assert read_json(workspace / "model" / "manifest.json") == {"m": 16, "n": 32, "K": 16}


@pytest.mark.parametrize("kind", ["pgd", "noise", "da"])
def test_attack_and_analyze(workspace, kind, capsys):
    out = workspace / "attacks"
    rc = main(["attack", "--data", str(workspace / "data"), "--model", str(workspace / "model"), "--kind", kind, "--out", str(out)])
    assert rc == 0
    records = read_jsonl(out / f"{kind}.jsonl")
    assert len(records) == 20 and records[0]["attack"] == kind
    capsys.readouterr()
    rc = main(["analyze", "--data", str(workspace / "data"), "--attack-file", str(out / f"{kind}.jsonl"), "--coder", "omp-sparsity"])
    assert rc == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["attack"] == kind and summary["total"]["count"] == 20


def test_analyze_clean_lista(workspace, capsys):
    rc = main(["analyze", "--data", str(workspace / "data"), "--coder", "lista", "--model", str(workspace / "model"), "--out", str(workspace)])
    assert rc == 0
    assert (workspace / "analysis_lista_clean.json").exists()


def test_exp_smoke_and_report(tmp_path):
    res = cli("exp", "1", "--smoke", "--out", str(tmp_path / "e1"))
    assert res.returncode == 0, res.stderr
    assert "exp1_transfer" in res.stdout
    res = cli("report", "--out", str(tmp_path))
    assert res.returncode == 0
    assert "1 report(s)" in res.stdout


def test_output_dir_env(tmp_path):
    res = cli("gen", "--count", "3", env={"SPARSADV_OUTPUT_DIR": str(tmp_path / "envdir")})
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "envdir" / "manifest.json").exists()


def test_thread_env_is_applied_before_numpy(tmp_path):
    code = "import os, sparsadv.cli as c; c._apply_thread_env(); print(os.environ['OPENBLAS_NUM_THREADS'])"
    res = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=dict(os.environ, SPARSADV_THREADS="1"))
    assert res.stdout.strip() == "1"
    # importing the cli must not pull numpy in before the variables are set
    code = "import sys, sparsadv.cli; print('numpy' in sys.modules)"
    res = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True)
    assert res.stdout.strip() == "False"


def test_exit_code_config_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"dims": {"m": 4, "bogus": 1}}')
    assert cli("exp", "1", "--config", str(bad), "--out", str(tmp_path)).returncode == 1
    bad.write_text("{not json")
    assert cli("exp", "1", "--config", str(bad), "--out", str(tmp_path)).returncode == 1
    assert cli("exp", "exp7", "--out", str(tmp_path)).returncode == 1


def test_exit_code_io_error(tmp_path):
    res = cli("exp", "1", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path))
    assert res.returncode == 3
    assert cli("report", "--out", str(tmp_path / "nothing")).returncode == 3


def test_exit_code_numerical_failure(tmp_path, workspace):
    data = tmp_path / "data"
    assert main(["gen", "--m", "4", "--n", "6", "--s", "1", "--count", "2", "--out", str(data)]) == 0
    write_matrix(data / "dictionary.csv", np.ones((4, 6)) / 2.0, role="dictionary")
    res = cli("attack", "--data", str(data), "--kind", "da", "--out", str(tmp_path / "a"))
    assert res.returncode == 2
    assert "singular value" in res.stderr


def test_missing_model_is_config_error(workspace, tmp_path):
    assert main(["attack", "--data", str(workspace / "data"), "--kind", "pgd", "--out", str(tmp_path)]) == 1


def test_help_lists_commands():
    res = cli("--help")
    for name in ("gen", "train-lista", "attack", "analyze", "exp", "report"):
        assert name in res.stdout
