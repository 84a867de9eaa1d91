import json
import subprocess
import sys

import numpy as np
import pandas as pd
import pytest

from citeimpact.cli import main


def run(capsys, *args):
    code = main(list(args))
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


def test_end_to_end(workspace, capsys):
    w = workspace
    code, out = run(capsys, "synth", "--n", "300", "--seed", "3", "--out", str(w / "corpus.jsonl"))
    assert code == 0 and out["records"] == 300
    code, out = run(capsys, "ingest", "--input", str(w / "corpus.jsonl"), "--out", str(w / "net"))
    assert code == 0 and out["papers"] == 300
    code, out = run(capsys, "split", "--network", str(w / "net"), "--test-point", "2014", "--delta", "5",
                    "--n-test", "20", "--n-train", "16", "--n-val", "8", "--seed", "0", "--out", str(w / "splits"))
    assert code == 0 and out["train"] == 16 and out["test"] == 20
    code, out = run(capsys, "embed", "--network", str(w / "net"), "--provider", "hashing", "--dim", "32",
                    "--out", str(w / "emb"))
    assert code == 0 and out["dim"] == 32
    targets = [json.loads(line)["target"] for line in (w / "splits" / "test.jsonl").read_text().splitlines()]
    (w / "targets.txt").write_text("\n".join(targets[:5]))
    code, out = run(capsys, "build-graphs", "--network", str(w / "net"), "--targets", str(w / "targets.txt"),
                    "--obs", "2014", "--T", "2", "--k", "2", "--K", "5,2", "--out", str(w / "graphs.jsonl"))
    assert code == 0 and out["graphs"] == 5
    (w / "cfg.yaml").write_text(f"""
data:
  network: {w / 'net'}
  splits: {w / 'splits'}
  embeddings: {w / 'emb'}
  embedding_dim: 32
graph:
  T: 2
  K: [5, 2]
model:
  hidden_dim: 8
  layers: 1
  heads: 2
  temporal_depth: 1
  temporal_heads: 2
train:
  max_epochs: 2
  batch_size: 8
  out_dir: {w / 'run'}
""")
    code, out = run(capsys, "train", "--config", str(w / "cfg.yaml"), "--set", "train.lr=1e-3")
    assert code == 0 and out["epochs"] == 2
    ckpt = str(w / "run" / "checkpoint.pt")
    code, out = run(capsys, "eval", "--checkpoint", ckpt, "--split", "test", "--out", str(w / "report.json"))
    assert code == 0 and out["metrics"]["total"]["n"] == 20
    code, out = run(capsys, "encode", "--checkpoint", ckpt, "--graphs", str(w / "graphs.jsonl"),
                    "--out", str(w / "vecs.npy"))
    assert code == 0 and np.load(w / "vecs.npy").shape == (5, 8)
    code, out = run(capsys, "report", "--breakdowns", str(w / "report_predictions.csv"), "--out",
                    str(w / "tables"))
    assert code == 0
    per = pd.read_csv(w / "tables" / "per_sample.csv")
    assert len(per) == out["positive"]


def test_errors_exit_nonzero(tmp_path, capsys):
    (tmp_path / "bad.jsonl").write_text("{oops\n")
    code = main(["ingest", "--input", str(tmp_path / "bad.jsonl"), "--out", str(tmp_path / "n"), "--strict"])
    assert code == 2 and "error" in capsys.readouterr().err
    assert main(["split", "--network", str(tmp_path / "missing"), "--test-point", "1", "--out", "x"]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "citeimpact", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "build-graphs" in res.stdout
