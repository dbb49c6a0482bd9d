import csv
import json

import pytest

from zedsim.cli import main
from zedsim.policy import Thresholds, sweep_thresholds
from zedsim.traces import load_trace


@pytest.fixture()
def trace_file(tmp_path):
    path = tmp_path / "trace.csv"
    assert main(["gen-trace", "--n", "60", "--seed", "7", "--out", str(path)]) == 0
    return path


@pytest.fixture()
def harvest_file(tmp_path):
    path = tmp_path / "harvest.csv"
    path.write_text("t_start_s,i_h_ma\n0.0,0.0\n50.0,2.0\n")
    return path


def _rows(path):
    with open(path) as fh:
        first = fh.readline()
        assert first.startswith("# config_sha256=")
        return list(csv.DictReader(fh))


class TestGenTrace:
    def test_writes_calibrated_trace(self, trace_file, capsys):
        trace = load_trace(trace_file)
        assert len(trace) == 60

    def test_stats_printed(self, tmp_path, capsys):
        out = tmp_path / "t.csv"
        main(["gen-trace", "--n", "50", "--out", str(out)])
        captured = capsys.readouterr().out
        assert "acc_at_half_ex1=" in captured
        assert "person_fraction=" in captured


class TestRun:
    def test_artifacts_and_byte_identical_rerun(self, tmp_path, trace_file, harvest_file):
        out = tmp_path / "out"
        argv = [
            "run", "--trace", str(trace_file), "--harvest", str(harvest_file),
            "--horizon", "60", "--out", str(out),
        ]
        assert main(argv) == 0
        names = {p.name for p in out.iterdir()}
        assert names == {"trajectory.csv", "totals.txt", "resolved_config.json"}
        first = {p.name: p.read_bytes() for p in out.iterdir()}
        assert main(argv) == 0
        second = {p.name: p.read_bytes() for p in out.iterdir()}
        assert first == second

    def test_totals_contents(self, tmp_path, trace_file):
        out = tmp_path / "out"
        main(["run", "--trace", str(trace_file), "--horizon", "30", "--out", str(out)])
        text = (out / "totals.txt").read_text()
        assert "config_sha256=" in text
        assert "completed_pipelines=3" in text
        assert "power_failures=0" in text

    def test_trajectory_header_and_hash(self, tmp_path, trace_file):
        out = tmp_path / "out"
        main(["run", "--trace", str(trace_file), "--horizon", "30", "--out", str(out)])
        with open(out / "trajectory.csv") as fh:
            assert fh.readline().startswith("# config_sha256=")
            assert fh.readline().strip() == "time_s,v_c,mode,event"
        resolved = json.loads((out / "resolved_config.json").read_text())
        assert resolved["device"]["capacitor"]["capacitance_farads"] == 1.5

    def test_missing_trace_is_clean_error(self, tmp_path, capsys):
        assert main(["run", "--trace", str(tmp_path / "nope.csv")]) == 2
        assert "error:" in capsys.readouterr().err

    def test_policy_and_gating_flags(self, tmp_path, trace_file):
        for policy in ("policy-i", "policy-ii"):
            out = tmp_path / policy
            assert main([
                "run", "--trace", str(trace_file), "--horizon", "30",
                "--policy", policy, "--out", str(out),
            ]) == 0
        out = tmp_path / "ls"
        assert main([
            "run", "--trace", str(trace_file), "--horizon", "30",
            "--gating", "load-switch", "--out", str(out),
        ]) == 0
        text = (out / "totals.txt").read_text()
        assert "completed_pipelines=3" in text


class TestValidate:
    def test_defaults_ok(self, capsys):
        assert main(["validate"]) == 0
        assert "ok: config_sha256=" in capsys.readouterr().out

    def test_broken_config_names_invariant(self, tmp_path, capsys):
        cfg = tmp_path / "broken.json"
        cfg.write_text(json.dumps({"schedule": {"window_seconds": 3.0}}))
        assert main(["validate", "--config", str(cfg)]) == 2
        err = capsys.readouterr().err
        assert "deadline + execution time >= window" in err

    def test_unknown_key_diagnosed(self, tmp_path, capsys):
        cfg = tmp_path / "broken.json"
        cfg.write_text(json.dumps({"capacitanse": {}}))
        assert main(["validate", "--config", str(cfg)]) == 2
        assert "unknown" in capsys.readouterr().err


class TestSweeps:
    def test_threshold_sweep_grid_and_spot_check(self, tmp_path, trace_file):
        out = tmp_path / "out"
        assert main([
            "sweep-thresholds", "--trace", str(trace_file),
            "--gamma1", "0.1:0.5:0.05", "--gamma2", "0.5:0.9:0.05",
            "--out", str(out),
        ]) == 0
        rows = _rows(out / "sweep_thresholds.csv")
        assert len(rows) == 81
        # deterministic row-major ordering: gamma1 outer, gamma2 inner
        assert [r["gamma2"] for r in rows[:3]] == ["0.5", "0.55", "0.6"]
        # spot-check three cells against the library sweep
        trace = load_trace(trace_file)
        for row in (rows[0], rows[40], rows[80]):
            th = Thresholds(float(row["gamma1"]), float(row["gamma2"]))
            (cell,) = sweep_thresholds(trace, [th])
            assert int(row["n_ex1"]) == cell.n_ex1
            assert int(row["n_ex2"]) == cell.n_ex2
            if row["acc_ex1"] == "":
                assert cell.acc_ex1 is None
            else:
                assert float(row["acc_ex1"]) == pytest.approx(cell.acc_ex1)

    def test_single_cell_sweep(self, tmp_path, trace_file):
        out = tmp_path / "out"
        assert main([
            "sweep-thresholds", "--trace", str(trace_file),
            "--gamma1", "0.3", "--gamma2", "0.7", "--out", str(out),
        ]) == 0
        assert len(_rows(out / "sweep_thresholds.csv")) == 1

    def test_capacitance_sweep(self, tmp_path, trace_file):
        out = tmp_path / "out"
        assert main([
            "sweep-capacitance", "--trace", str(trace_file),
            "--capacitance", "0.1,1.5", "--horizon", "60",
            "--initial-v", "4.0", "--harvest-ma", "2.0",
            "--jobs", "1", "--out", str(out),
        ]) == 0
        rows = _rows(out / "sweep_capacitance.csv")
        assert len(rows) == 4  # 2 capacitances x 2 variants
        assert {r["variant"] for r in rows} == {"baseline", "proposed"}
        for c in ("0.1", "1.5"):
            by_variant = {r["variant"]: r for r in rows if r["c_farads"] == c}
            assert (
                int(by_variant["proposed"]["completed_pipelines"])
                >= int(by_variant["baseline"]["completed_pipelines"])
            )


class TestCompare:
    def test_comparison_artifacts(self, tmp_path, trace_file):
        out = tmp_path / "out"
        assert main([
            "compare", "--trace", str(trace_file), "--horizon", "60",
            "--variants", "baseline", "proposed", "--out", str(out),
        ]) == 0
        rows = _rows(out / "comparison.csv")
        assert [r["variant"] for r in rows] == ["baseline", "proposed"]
        assert float(rows[1]["energy_delta_pct"]) < 0
        assert (out / "totals_baseline.txt").exists()
        assert (out / "totals_proposed.txt").exists()
