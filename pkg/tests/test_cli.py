import csv
import json
from importlib import resources

import pytest
import yaml

from tipslide.cli import EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO, EXIT_OK, OUT_ENV, main
from tipslide.scenarios import scenario_config

TRACE = resources.files("tipslide") / "data" / "synthetic_sliding_wrench.csv"


@pytest.fixture
def short_cfg(tmp_path):
    path = tmp_path / "short.yaml"
    scenario_config("a", "normal_force", stroke=0.2, hold_time=0.3).save(path)
    return path


class TestSimulate:
    def test_writes_run_dir(self, short_cfg, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["simulate", str(short_cfg), "--out", str(out)]) == EXIT_OK
        run = out / "a_normal_force"
        assert {p.name for p in run.iterdir()} == {"series.csv", "summary.json", "config.yaml"}
        assert "tipover_events" in capsys.readouterr().out

    def test_env_default_out(self, short_cfg, tmp_path, monkeypatch):
        monkeypatch.setenv(OUT_ENV, str(tmp_path / "env"))
        assert main(["simulate", str(short_cfg)]) == EXIT_OK
        assert (tmp_path / "env" / "a_normal_force" / "summary.json").is_file()

    def test_rerun_byte_identical(self, short_cfg, tmp_path):
        for d in ("x", "y"):
            main(["simulate", str(short_cfg), "--out", str(tmp_path / d)])
        for name in ("series.csv", "summary.json", "config.yaml"):
            a = (tmp_path / "x" / "a_normal_force" / name).read_bytes()
            assert a == (tmp_path / "y" / "a_normal_force" / name).read_bytes()

    def test_diverged_exit_code(self, tmp_path):
        path = tmp_path / "bad.yaml"
        scenario_config("a", "normal_force", stiffness=1e8, damping=1e4).save(path)
        assert main(["simulate", str(path), "--out", str(tmp_path / "o")]) == EXIT_DIVERGED
        summary = json.loads((tmp_path / "o" / "a_normal_force" / "summary.json").read_text())
        assert summary["diverged"] and summary["metrics"]["instability"]

    def test_missing_config_is_io_error(self, tmp_path):
        assert main(["simulate", str(tmp_path / "none.yaml"), "--out", str(tmp_path)]) == EXIT_IO

    def test_unknown_key_is_config_error(self, short_cfg, tmp_path):
        data = yaml.safe_load(short_cfg.read_text())
        data["stifness"] = 1.0
        short_cfg.write_text(yaml.safe_dump(data))
        assert main(["simulate", str(short_cfg), "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_malformed_yaml(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("name: [unclosed\n")
        assert main(["simulate", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_unwritable_out(self, short_cfg, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("")
        assert main(["simulate", str(short_cfg), "--out", str(blocker)]) == EXIT_IO


class TestRecover:
    def test_angles(self, short_cfg, tmp_path, capsys):
        assert main(["recover", str(short_cfg), "--angles", "0,10", "--out", str(tmp_path)]) == EXIT_OK
        assert (tmp_path / "recovery_0deg" / "summary.json").is_file()
        assert (tmp_path / "recovery_10deg" / "summary.json").is_file()
        assert "recovery_time" in capsys.readouterr().out

    def test_angle_out_of_range(self, short_cfg, tmp_path):
        assert main(["recover", str(short_cfg), "--angles", "50", "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_bad_angle_list(self, short_cfg):
        with pytest.raises(SystemExit):
            main(["recover", str(short_cfg), "--angles", "a,b"])


class TestTraceCommands:
    def test_analyze(self, tmp_path):
        assert main(["analyze", str(TRACE), "--out", str(tmp_path)]) == EXIT_OK
        stem = "synthetic_sliding_wrench"
        with open(tmp_path / f"{stem}_alpha.csv") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) > 10
        assert (tmp_path / f"{stem}_windows.csv").is_file()

    def test_sweep(self, tmp_path):
        rc = main(["sweep", str(TRACE), "--rd", "1,5", "--h", "1,0.2", "--out", str(tmp_path)])
        assert rc == EXIT_OK
        with open(tmp_path / "synthetic_sliding_wrench_sweep.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4
        alpha = {(float(r["r_scale"]), float(r["h_scale"])): float(r["min_alpha"]) for r in rows}
        assert alpha[(5.0, 0.2)] > alpha[(1.0, 1.0)]

    def test_sweep_rejects_nonpositive(self, tmp_path):
        assert main(["sweep", str(TRACE), "--rd", "0,1", "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_missing_trace(self, tmp_path):
        assert main(["analyze", str(tmp_path / "none.csv"), "--out", str(tmp_path)]) == EXIT_IO

    def test_bad_trace_header(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,2\n")
        assert main(["analyze", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_no_subcommand():
    with pytest.raises(SystemExit):
        main([])
