import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from tvnoise.cli import build_parser, main

ROOT = Path(__file__).resolve().parents[1]


def small_config(tmp_path, **train):
    cfg = {
        "data": {"source": "mixture", "n": 400, "n_test": 300, "seed": 0},
        "noise": {"kind": "pair", "rate": 0.4, "seed": 1},
        "train": {"method": "TVD", "iterations": 30, "batch_size": 64, "seed": 0, **train},
        "output_dir": str(tmp_path / "run"),
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def run_usage_error(argv, capsys):
    with pytest.raises(SystemExit) as info:
        main(argv)
    return info.value.code, capsys.readouterr().err


class TestGenNoise:
    def test_symmetric(self, tmp_path):
        out = tmp_path / "t.json"
        assert main(["gen-noise", "--kind", "symmetric", "--k", "10", "--rate", "0.5", "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["K"] == 10
        assert [doc["rows"][i][i] for i in range(10)] == [0.5] * 10

    def test_pair2_overall_rate(self, capsys):
        assert main(["gen-noise", "--kind", "pair2", "--k", "10", "--r1", "0.3", "--r2", "0.2"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["overall_noise_rate"] == pytest.approx(0.44, abs=1e-12)

    def test_bad_rate(self, capsys):
        code, err = run_usage_error(["gen-noise", "--kind", "symmetric", "--k", "3", "--rate", "1.5"], capsys)
        assert code == 2 and "--rate" in err

    def test_rate_not_dominant(self, capsys):
        code, err = run_usage_error(["gen-noise", "--kind", "pair", "--k", "3", "--rate", "0.6"], capsys)
        assert code == 2 and "--rate" in err

    def test_bad_k(self, capsys):
        code, err = run_usage_error(["gen-noise", "--kind", "clean", "--k", "1"], capsys)
        assert code == 2 and "--k" in err


class TestDataPipeline:
    def test_gen_data_and_corrupt(self, tmp_path):
        data, t, noisy = tmp_path / "d.csv", tmp_path / "t.json", tmp_path / "n.csv"
        assert main(["gen-data", "--n", "50", "--seed", "3", "--out", str(data)]) == 0
        assert data.read_text().splitlines()[0] == "f0,f1,y,y_noisy"
        assert main(["gen-noise", "--kind", "pair", "--k", "3", "--rate", "0.3", "--out", str(t)]) == 0
        assert main(["corrupt", "--data", str(data), "--t", str(t), "--seed", "1", "--out", str(noisy)]) == 0
        rows = [line.split(",") for line in noisy.read_text().splitlines()[1:]]
        assert len(rows) == 50 and all(r[3] in {"1", "2", "3"} for r in rows)

    def test_missing_input_is_runtime_error(self, tmp_path, capsys):
        code = main(["corrupt", "--data", str(tmp_path / "nope.csv"), "--t", str(tmp_path / "t.json"),
                     "--out", str(tmp_path / "o.csv")])
        assert code == 1
        assert "error" in json.loads(capsys.readouterr().err)


class TestTrain:
    def test_outputs_and_schema(self, tmp_path):
        cfg = small_config(tmp_path)
        assert main(["train", str(cfg)]) == 0
        out = tmp_path / "run"
        for name in ("metrics.csv", "train_log.csv", "report.json", "t_hat.json", "alpha.json"):
            assert (out / name).exists(), name
        assert (out / "metrics.csv").read_text().splitlines()[0] == "accuracy,avg_tv"
        assert (out / "train_log.csv").read_text().splitlines()[0] == "iter,loss,reg,avg_tv"
        report = json.loads((out / "report.json").read_text())
        assert report["seeds"] == {"data": 0, "noise": 1, "train": 0}
        assert report["config"]["train"]["method"] == "TVD"
        assert set(json.loads((out / "t_hat.json").read_text())) == {"K", "rows"}
        assert set(json.loads((out / "alpha.json").read_text())) == {"K", "alpha"}

    def test_rerun_byte_identical(self, tmp_path):
        cfg = small_config(tmp_path)
        main(["train", str(cfg), "--out", str(tmp_path / "a")])
        main(["train", str(cfg), "--out", str(tmp_path / "b")])
        for name in ("metrics.csv", "train_log.csv", "t_hat.json", "alpha.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_flags_override_config(self, tmp_path):
        cfg = small_config(tmp_path)
        assert main(["run", str(cfg), "--method", "CCE", "--iterations", "5", "--out", str(tmp_path / "o")]) == 0
        report = json.loads((tmp_path / "o" / "report.json").read_text())
        assert report["config"]["train"]["method"] == "CCE"
        assert report["config"]["train"]["iterations"] == 5
        assert not (tmp_path / "o" / "alpha.json").exists()

    def test_missing_method(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"train": {"iterations": 3}}))
        assert main(["train", str(path), "--out", str(tmp_path / "o")]) == 1
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "ConfigError" and "method" in err["message"]

    @pytest.mark.slow
    def test_bundled_config(self, tmp_path):
        assert main(["train", str(ROOT / "configs" / "tvd_pair40.json"), "--out", str(tmp_path)]) == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["metrics"]["avg_tv"] < 0.05


class TestSweepCmd:
    def test_single_n(self, tmp_path, monkeypatch):
        monkeypatch.setenv("TVNOISE_THREADS", "1")
        cfg = small_config(tmp_path)
        assert main(["sweep", str(cfg), "--n-list", "200", "--seeds", "2", "--out", str(tmp_path / "s")]) == 0
        lines = (tmp_path / "s" / "sweep.csv").read_text().splitlines()
        assert lines[0] == "N,median_avg_tv" and len(lines) == 2 and lines[1].startswith("200,")
        per_seed = (tmp_path / "s" / "sweep_per_seed.csv").read_text().splitlines()
        assert per_seed[0] == "N,seed,avg_tv" and len(per_seed) == 3

    @pytest.mark.parametrize("n_list", ["10,abc", "1000,100", ""])
    def test_malformed(self, tmp_path, capsys, n_list):
        code, _ = run_usage_error(["sweep", str(small_config(tmp_path)), "--n-list", n_list], capsys)
        assert code == 2


class TestEvalCmds:
    def test_eval_and_hull_report(self, tmp_path):
        cfg = small_config(tmp_path, method="CCE")
        main(["train", str(cfg)])
        report = tmp_path / "run" / "report.json"
        main(["gen-data", "--n", "100", "--seed", "9", "--out", str(tmp_path / "test.csv")])
        main(["gen-noise", "--kind", "pair", "--k", "3", "--rate", "0.4", "--out", str(tmp_path / "t.json")])
        assert main(["eval", "--report", str(report), "--data", str(tmp_path / "test.csv"),
                     "--t", str(tmp_path / "t.json"), "--out", str(tmp_path / "m.csv")]) == 0
        header, row = (tmp_path / "m.csv").read_text().splitlines()
        assert header == "accuracy,avg_tv"
        acc, tv = map(float, row.split(","))
        assert 0 <= acc <= 1 and tv == pytest.approx(0.4)  # CCE reports the identity
        assert main(["hull-report", "--report", str(report), "--data", str(tmp_path / "test.csv"),
                     "--t", str(tmp_path / "t.json"), "--out", str(tmp_path / "h.csv")]) == 0
        header, row = (tmp_path / "h.csv").read_text().splitlines()
        assert header == "violation_rate,mean_distance"
        assert all(0 <= float(v) <= 1 for v in row.split(","))


class TestHelp:
    def test_every_flag_listed(self):
        parser = build_parser()
        sub = next(a for a in parser._actions if a.__class__.__name__ == "_SubParsersAction")
        assert set(sub.choices) == {"gen-noise", "gen-data", "corrupt", "train", "run", "sweep",
                                    "eval", "hull-report"}
        for name, p in sub.choices.items():
            text = p.format_help()
            for action in p._actions:
                for opt in action.option_strings:
                    assert opt in text, (name, opt)

    def test_module_entry_point(self):
        res = subprocess.run([sys.executable, "-m", "tvnoise", "gen-noise", "--help"],
                             capture_output=True, text=True)
        assert res.returncode == 0 and "--concentration" in res.stdout

    def test_no_command_is_usage_error(self, capsys):
        code, _ = run_usage_error([], capsys)
        assert code == 2


def test_identity_of_noise_files(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    args = ["gen-noise", "--kind", "random", "--k", "4", "--rate", "0.3", "--concentration", "1", "--seed", "5"]
    main(args + ["--out", str(a)])
    main(args + ["--out", str(b)])
    assert a.read_bytes() == b.read_bytes()
    assert np.allclose(np.sum(json.loads(a.read_text())["rows"], axis=1), 1.0)
