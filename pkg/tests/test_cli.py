from __future__ import annotations

import json
import subprocess
import sys

import pytest

from scoretoken.cli import main


@pytest.fixture
def synthetic(tmp_path):
    cfg = tmp_path / "task.json"
    cfg.write_text(json.dumps({"D": 4, "N": 150, "latent_map": "linear", "noise_sd": 2.0, "seed": 1}))
    assert main(["gen-synthetic", "--config", str(cfg), "--out", str(tmp_path / "data")]) == 0
    return tmp_path / "data" / "synthetic.jsonl"


def small_plan(tmp_path):
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps({
        "task": {"D": 4, "N": 200, "latent_map": "linear", "noise_sd": 2.0},
        "seeds": [0, 1],
        "train": {"epochs": 4},
        "rows": [{"label": "e100", "codec": "existing100_ordered"}, {"label": "l5", "codec": "level5"}],
    }))
    return plan


class TestDataset:
    def test_load_and_stats(self, synthetic, capsys):
        assert main(["dataset", "load", "--manifest", str(synthetic)]) == 0
        assert "150 records" in capsys.readouterr().out
        assert main(["dataset", "stats", "--manifest", str(synthetic), "--bins", "5"]) == 0
        assert main(["dataset", "stats", "--artimuse"]) == 0
        assert "4111" in capsys.readouterr().out.replace(",", "")

    def test_split_writes_feature_sidecars(self, synthetic, tmp_path):
        out = tmp_path / "split"
        assert main(["dataset", "split", "--manifest", str(synthetic), "--train-frac", "0.8", "--out", str(out)]) == 0
        assert len(list(out.glob("*.jsonl"))) == 2
        assert len(list(out.glob("*.features.npz"))) == 2

    def test_filter(self, synthetic, tmp_path):
        out = tmp_path / "f.jsonl"
        assert main(["dataset", "filter", "--manifest", str(synthetic), "--quota", "0.8", "--out", str(out)]) == 0
        assert out.read_text().count("\n") >= 1

    def test_csv_preset(self, tmp_path):
        csv = tmp_path / "spaq.csv"
        csv.write_text("image,mos,brightness,colorfulness,contrast,sharpness,categories\n1.jpg,80,1,2,3,4,Animal\n")
        out = tmp_path / "spaq.jsonl"
        assert main(["dataset", "load", "--csv", str(csv), "--preset", "spaq", "--out", str(out)]) == 0
        assert json.loads(out.read_text())["id"] == "1.jpg"

    def test_errors_exit_two(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("{nope\n")
        assert main(["dataset", "load", "--manifest", str(bad)]) == 2
        assert "error:" in capsys.readouterr().err


class TestScorer:
    def test_train_then_predict(self, synthetic, tmp_path, capsys):
        params = tmp_path / "p.bin"
        assert main(["scorer", "train", "--manifest", str(synthetic), "--epochs", "5", "--out", str(params)]) == 0
        preds = tmp_path / "preds.csv"
        assert main(["scorer", "predict", "--params", str(params), "--manifest", str(synthetic),
                     "--out", str(preds)]) == 0
        lines = preds.read_text().splitlines()
        assert lines[0] == "id,prediction,target" and len(lines) == 151
        assert "SRCC" in capsys.readouterr().err

    def test_codec_mismatch_is_error(self, synthetic, tmp_path):
        params = tmp_path / "p.bin"
        main(["scorer", "train", "--manifest", str(synthetic), "--codec", "level5", "--epochs", "1",
              "--out", str(params)])
        assert main(["scorer", "predict", "--params", str(params), "--manifest", str(synthetic)]) == 2


class TestAnnotate:
    def test_mock_endpoint(self, synthetic, tmp_path):
        out = tmp_path / "ann.jsonl"
        assert main(["annotate", "--template", "InferScore", "--manifest", str(synthetic),
                     "--endpoint", "mock://local", "--concurrency", "3", "--out", str(out)]) == 0
        recs = [json.loads(line) for line in out.read_text().splitlines()]
        assert len(recs) == 150
        assert all(0 <= r["parsed_score"] <= 100 for r in recs)
        assert {"request_id", "template_id", "prompt_sha256", "reply"} <= set(recs[0])

    def test_attribute_fanout(self, synthetic, tmp_path):
        out = tmp_path / "attr.jsonl"
        assert main(["annotate", "--template", "InferAttribute", "--manifest", str(synthetic),
                     "--endpoint", "mock://x", "--attribute", "Overall Gestalt", "--attribute", "Color Harmony",
                     "--out", str(out)]) == 2
        assert main(["annotate", "--template", "InferAttribute", "--manifest", str(synthetic),
                     "--endpoint", "mock://x", "--attribute", "Overall Gestalt", "--out", str(out)]) == 0
        assert len(out.read_text().splitlines()) == 150


class TestExperiments:
    def test_ablate_deterministic(self, tmp_path):
        plan = small_plan(tmp_path)
        for d in ("a", "b"):
            assert main(["ablate", "--plan", str(plan), "--out", str(tmp_path / d)]) == 0
        for name in ("cells.csv", "summary.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_xdataset(self, tmp_path):
        plan = tmp_path / "x.json"
        plan.write_text(json.dumps({
            "train": {"epochs": 3},
            "datasets": [{"name": "p", "task": {"N": 100, "seed": 1, "latent_map": "linear"}},
                         {"name": "q", "task": {"N": 100, "seed": 2}}],
        }))
        assert main(["xdataset", "--plan", str(plan), "--out", str(tmp_path / "x")]) == 0
        assert len((tmp_path / "x" / "matrix.csv").read_text().splitlines()) == 5

    def test_console_entry_point(self):
        res = subprocess.run([sys.executable, "-m", "scoretoken.cli", "--help"], capture_output=True, text=True)
        assert res.returncode == 0
        assert "ablate" in res.stdout
