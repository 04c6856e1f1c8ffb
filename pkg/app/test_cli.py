"""
Tests for argument handling, exit codes and the command pipeline
"""
import csv
import json

import pytest

from cli import dispatch

SMALL_CONFIG = {
    "d": 4, "d_id": 1, "d_ln": 1, "d_sl": 1, "d_ll": 1, "n_blocks": 1,
    "n_localities": 10, "n_regions": 4, "epochs": 2,
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert dispatch(["generate", "--preset", "grid10", "--seed", "42", "-o", str(root / "data")]) == 0
    config = root / "config.json"
    config.write_text(json.dumps(SMALL_CONFIG))
    return root


def _rows(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


class TestUsage:
    def test_unknown_flag(self):
        assert dispatch(["--no-such-flag"]) == 2

    def test_unknown_command(self):
        assert dispatch(["frobnicate"]) == 2

    def test_missing_command(self):
        assert dispatch([]) == 2

    def test_missing_required_flag(self):
        assert dispatch(["train", "--data", "x"]) == 2

    def test_help(self, capsys):
        assert dispatch(["--help"]) == 0
        assert "generate" in capsys.readouterr().out


class TestVerify:
    def test_passes_and_reports(self, tmp_path):
        out = tmp_path / "verify.json"
        assert dispatch(["verify", "--seed", "7", "--trials", "100", "-o", str(out)]) == 0
        report = json.loads(out.read_text())
        assert report["passed"] is True
        assert report["piecewise_constant_exact"] is True
        assert report["top_eigvec_contracts"] is True
        assert report["trials"] == 100
        assert {"min", "median", "mean", "max"} <= set(report["ratios"])
        assert report["ratios"]["min"] <= report["ratios"]["median"] <= report["ratios"]["max"]
        assert all({"trial", "ratio"} <= set(c) for c in report["counterexamples"])
        assert all(c["ratio"] > 1.0 for c in report["counterexamples"])
        path4 = [c for c in report["counterexamples"] if c["graph"] == "path4"]
        assert len(path4) == 1 and path4[0]["ratio"] == pytest.approx(1.5)

        checks = {c["name"]: c for c in report["checks"]}
        example = checks["path4_counterexample"]["detail"]
        assert example["E_X"] == pytest.approx(6.0, abs=1e-9)
        assert example["E_Y"] == pytest.approx(9.0, abs=1e-9)
        assert checks["random_signal_contraction"]["asserted"] is False

    def test_stdout_when_no_out(self, capsys):
        assert dispatch(["verify", "--seed", "1"]) == 0
        assert json.loads(capsys.readouterr().out)["trials"] == 100

    def test_non_positive_trials(self, capsys):
        assert dispatch(["verify", "--trials", "0"]) == 2
        assert "❌" in capsys.readouterr().err


class TestPipeline:
    def test_generate_writes_bundle(self, workspace):
        data = workspace / "data"
        for name in ("network.json", "trajectories.jsonl", "planted.json", "manifest.json"):
            assert (data / name).exists()
        assert len(json.loads((data / "network.json").read_text())["segments"]) == 100

    def test_train_embed_classify(self, workspace):
        data, run = workspace / "data", workspace / "run"
        assert dispatch(["train", "--data", str(data), "-o", str(run), "--config",
                         str(workspace / "config.json"), "--quiet"]) == 0
        summary = json.loads((run / "summary.json").read_text())
        assert summary["epochs"] == 2 and summary["n_segments"] == 100
        assert len(_rows(run / "loss_trace.csv")) == 3

        emb = workspace / "e.csv"
        assert dispatch(["embed", "--run", str(run), "-o", str(emb)]) == 0
        rows = _rows(emb)
        assert len(rows) == 101
        assert all(len(r) == SMALL_CONFIG["d"] + 1 for r in rows)

        low = workspace / "low.csv"
        assert dispatch(["embed", "--run", str(run), "-o", str(low), "--stream", "low"]) == 0
        assert len(_rows(low)) == 101

        metrics = workspace / "metrics.json"
        assert dispatch(["eval-classify", "--embeddings", str(emb), "--data", str(data), "-o", str(metrics)]) == 0
        report = json.loads(metrics.read_text())
        assert 0.0 <= report["macro_f1"] <= 1.0 and 0.0 <= report["macro_auc"] <= 1.0
        assert {entry["class"] for entry in report["per_class"]} == {0, 1, 2, 3}

    def test_seed_flag_is_deterministic(self, workspace):
        args = ["--data", str(workspace / "data"), "--config", str(workspace / "config.json"), "--seed", "5",
                "--quiet"]
        assert dispatch(["train", "-o", str(workspace / "a")] + args) == 0
        assert dispatch(["train", "-o", str(workspace / "b")] + args) == 0
        assert (workspace / "a" / "loss_trace.csv").read_text() == (workspace / "b" / "loss_trace.csv").read_text()
        assert (workspace / "a" / "checkpoint.hfn").read_bytes() == (workspace / "b" / "checkpoint.hfn").read_bytes()

    def test_bad_config_key(self, workspace, tmp_path, capsys):
        config = tmp_path / "bad.json"
        config.write_text(json.dumps({"d": 4, "dropout": 0.1}))
        code = dispatch(["train", "--data", str(workspace / "data"), "-o", str(tmp_path / "r"),
                         "--config", str(config)])
        assert code == 2
        assert "dropout" in capsys.readouterr().err

    def test_default_config_pipeline(self, workspace, tmp_path):
        run, emb = tmp_path / "run", tmp_path / "e.csv"
        assert dispatch(["train", "--data", str(workspace / "data"), "-o", str(run),
                         "--epochs", "3", "--quiet"]) == 0
        config = json.loads((run / "config.json").read_text())
        assert (config["n_localities"], config["n_regions"]) == (10, 4)
        assert dispatch(["embed", "--run", str(run), "-o", str(emb)]) == 0
        rows = _rows(emb)
        assert len(rows) == 101
        assert all(len(r) == config["d"] + 1 for r in rows)

    def test_explicit_sizes_too_large_for_network(self, workspace, tmp_path, capsys):
        config = tmp_path / "big.json"
        config.write_text(json.dumps({"n_localities": 200, "n_regions": 30}))
        assert dispatch(["train", "--data", str(workspace / "data"), "-o", str(tmp_path / "r"),
                         "--config", str(config), "--epochs", "1", "--quiet"]) == 2
        assert "200" in capsys.readouterr().err

    def test_embed_missing_run(self, tmp_path):
        assert dispatch(["embed", "--run", str(tmp_path / "none"), "-o", str(tmp_path / "e.csv")]) == 2

    def test_spectral_report(self, workspace, capsys):
        assert dispatch(["spectral", "--data", str(workspace / "data"), "--signal", "flow"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["n_segments"] == 100 and report["cut"] == 10
        assert len(report["eigenvalues"]) == 100
        assert 0.0 <= report["low_band_fraction"] <= 1.0
        assert {e["frequency"] for e in report["edges"]} <= {"low", "high"}

    def test_sweep(self, workspace, monkeypatch):
        monkeypatch.setenv("HIFINET_THREADS", "2")
        out = workspace / "sweep.csv"
        assert dispatch(["sweep", "--data", str(workspace / "data"), "--config", str(workspace / "config.json"),
                         "--localities", "6,10,12", "--regions", "2,4,8", "-o", str(out)]) == 0
        rows = _rows(out)
        assert rows[0] == ["n_localities", "n_regions", "seed", "final_loss", "macro_f1", "macro_auc", "status"]
        assert len(rows) == 10
        statuses = {(r[0], r[1]): r[6] for r in rows[1:]}
        assert statuses[("6", "8")].startswith("skipped")
        assert statuses[("10", "4")] == "ok"

    def test_ablate(self, workspace):
        out = workspace / "ablate.csv"
        assert dispatch(["ablate", "--data", str(workspace / "data"), "--config", str(workspace / "config.json"),
                         "--variants", "full,no_hierarchy,no_high", "-o", str(out)]) == 0
        rows = _rows(out)
        assert rows[0] == ["variant", "final_loss", "macro_f1", "macro_auc"]
        assert [r[0] for r in rows[1:]] == ["full", "no_hierarchy", "no_high"]

    def test_ablate_unknown_variant(self, workspace, tmp_path):
        assert dispatch(["ablate", "--data", str(workspace / "data"), "--variants", "full,bogus",
                         "-o", str(tmp_path / "a.csv")]) == 2
