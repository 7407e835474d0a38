"""Command-line interface: config handling, artifacts, exit codes."""

from __future__ import annotations

import copy
import json
import math
import os
from pathlib import Path

import numpy as np
import pytest
import yaml

from twostop import cli


def _lin_stay_problem() -> dict:
    return {
        "horizon": 1.0,
        "site1": {
            "inter_arrival": {"kind": "exponential", "rate": 2.0},
            "catch_size": {"kind": "exponential", "rate": 1.0},
            "utility": {"kind": "linear", "slope": 1.0},
            "cost": {"kind": "linear", "rate": 0.5},
        },
        "site2": {
            "inter_arrival": {"kind": "exponential", "rate": 1.5},
            "catch_size": {"kind": "exponential", "rate": 2.0},
            "utility": {"kind": "linear", "slope": 1.0},
            "cost": {"kind": "linear", "rate": 0.55},
        },
    }


def _base_cfg(outdir: Path, **extra) -> dict:
    cfg = {
        "problem": _lin_stay_problem(),
        "grid": {"mass_nodes": 33, "time_nodes": 17},
        "simulation": {"n": 1500, "seed": 99},
        "output": {"directory": str(outdir)},
    }
    cfg.update(extra)
    return cfg


def _write(tmp_path: Path, cfg: dict, name: str = "cfg.yaml") -> str:
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return str(p)


def _read_rows(path: Path) -> list[dict]:
    import csv

    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- config plumbing -------------------------------------------------------


class TestConfig:
    def test_parse_emit_parse_is_identity(self, tmp_path):
        p = _write(tmp_path, _base_cfg(tmp_path / "out"))
        cfg = cli.load_config(p)
        again = cli.normalize_config(yaml.safe_load(cli.emit_config(cfg)))
        assert again == cfg

    def test_defaults_filled(self, tmp_path):
        p = _write(tmp_path, {"problem": _lin_stay_problem()})
        cfg = cli.load_config(p)
        assert cfg["grid"]["mass_nodes"] == 65
        assert cfg["tolerances"]["fixed_point"] == pytest.approx(1e-6)
        assert cfg["simulation"]["policy"] == "solved"
        assert cfg["compare"]["factors"] == [0.5, 0.9, 1.1, 2.0]
        assert cfg["output"]["format"] == "csv"

    def test_unknown_key_rejected(self, tmp_path):
        bad = _base_cfg(tmp_path / "out")
        bad["grid"]["mass_node"] = 10  # typo
        p = _write(tmp_path, bad)
        with pytest.raises(cli.ConfigError, match="mass_node"):
            cli.load_config(p)

    def test_missing_required_key_rejected(self, tmp_path):
        bad = _base_cfg(tmp_path / "out")
        del bad["problem"]["site1"]["cost"]["rate"]
        p = _write(tmp_path, bad)
        with pytest.raises(cli.ConfigError, match="rate"):
            cli.load_config(p)

    def test_missing_problem_rejected(self, tmp_path):
        p = _write(tmp_path, {"grid": {"mass_nodes": 9}})
        with pytest.raises(cli.ConfigError, match="problem"):
            cli.load_config(p)

    def test_type_errors_rejected(self, tmp_path):
        bad = _base_cfg(tmp_path / "out")
        bad["problem"]["horizon"] = "one"
        p = _write(tmp_path, bad)
        with pytest.raises(cli.ConfigError):
            cli.load_config(p)

    def test_config_hash_ignores_output_section(self, tmp_path):
        a = cli.load_config(_write(tmp_path, _base_cfg(tmp_path / "a"), "a.yaml"))
        b = cli.load_config(_write(tmp_path, _base_cfg(tmp_path / "b"), "b.yaml"))
        assert cli.config_hash(a) == cli.config_hash(b)
        c = copy.deepcopy(a)
        c["simulation"]["seed"] = 123456
        assert cli.config_hash(c) != cli.config_hash(a)

    def test_problem_hash_ignores_simulation(self, tmp_path):
        a = cli.load_config(_write(tmp_path, _base_cfg(tmp_path / "a"), "a.yaml"))
        b = copy.deepcopy(a)
        b["simulation"]["seed"] = 4242
        b["compare"]["factors"] = [0.25]
        assert cli.problem_hash(a) == cli.problem_hash(b)
        c = copy.deepcopy(a)
        c["grid"]["time_nodes"] = 9
        assert cli.problem_hash(c) != cli.problem_hash(a)

    def test_build_problem_roundtrip(self, tmp_path):
        cfg = cli.load_config(_write(tmp_path, _base_cfg(tmp_path / "out")))
        spec = cli.build_problem(cfg)
        assert spec.horizon == 1.0
        assert spec.site1.inter_arrival.kind == "exponential"
        assert spec.site2.cost(1.0) == pytest.approx(0.55)


# --- solve -----------------------------------------------------------------


class TestSolveCommand:
    def test_writes_all_artifacts(self, tmp_path):
        out = tmp_path / "out"
        rc = cli.main(["solve", "--config", _write(tmp_path, _base_cfg(out))])
        assert rc == 0
        for name in (
            "stage2_value.csv", "stage2_delay.csv", "stage1_value.csv",
            "stage1_delay.csv", "switch_curve.csv", "boundary_stage1.csv",
            "boundary_stage2.csv", "summary.json", "summary.csv",
        ):
            assert (out / name).exists(), name
        for fig in ("stage2_value.png", "stage1_value.png", "switch_curve.png",
                    "boundary.png"):
            assert (out / "figures" / fig).exists(), fig
        summary = json.loads((out / "summary.json").read_text())
        assert summary["tool"] == "twostop"
        assert summary["total_value"] == pytest.approx(1.5, rel=5e-3)
        assert summary["stage2"]["collapsed"] is True
        assert summary["stage2"]["residual"] <= 1e-6
        assert len(summary["config_hash"]) == 64

    def test_value_field_artifact_roundtrips(self, tmp_path):
        from twostop.numerics import ValueField

        out = tmp_path / "out"
        assert cli.main(["solve", "--config", _write(tmp_path, _base_cfg(out))]) == 0
        f = ValueField.from_csv(out / "stage2_value.csv")
        assert f.axis_names == ("mass", "remaining")
        assert f.values.shape == (33, 17)

    def test_switch_curve_artifact(self, tmp_path):
        out = tmp_path / "out"
        assert cli.main(["solve", "--config", _write(tmp_path, _base_cfg(out))]) == 0
        rows = _read_rows(out / "switch_curve.csv")
        assert len(rows) == 17
        assert float(rows[0]["remaining"]) == 0.0
        assert float(rows[0]["value"]) == pytest.approx(0.0, abs=1e-12)
        assert float(rows[-1]["value"]) == pytest.approx(0.2, abs=2e-3)

    def test_json_format_skips_csv_record_copies(self, tmp_path):
        out = tmp_path / "out"
        cfg = _base_cfg(out, output={"directory": str(out), "format": "json"})
        assert cli.main(["solve", "--config", _write(tmp_path, cfg)]) == 0
        assert (out / "summary.json").exists()
        assert not (out / "summary.csv").exists()
        assert (out / "stage2_value.csv").exists()  # field grids stay delimited

    def test_invalid_problem_exits_2(self, tmp_path):
        cfg = _base_cfg(tmp_path / "out")
        cfg["problem"]["site2"]["inter_arrival"] = {
            "kind": "uniform", "low": 0.0, "high": 0.5}
        rc = cli.main(["solve", "--config", _write(tmp_path, cfg)])
        assert rc == 2

    def test_config_error_exits_2(self, tmp_path):
        cfg = _base_cfg(tmp_path / "out")
        cfg["grid"]["bogus"] = 1
        assert cli.main(["solve", "--config", _write(tmp_path, cfg)]) == 2

    def test_missing_config_file_exits_2(self, tmp_path):
        assert cli.main(["solve", "--config", str(tmp_path / "nope.yaml")]) == 2

    def test_convergence_error_exits_3(self, tmp_path, monkeypatch):
        from twostop import stage2
        from twostop.model import ConvergenceError

        def boom(*a, **kw):
            raise ConvergenceError("no fixed point")

        monkeypatch.setattr(stage2, "solve", boom)
        rc = cli.main(["solve", "--config", _write(tmp_path, _base_cfg(tmp_path / "o"))])
        assert rc == 3

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["--version"])
        assert exc.value.code == 0

    def test_threads_flag(self, tmp_path, monkeypatch):
        for var in cli._THREAD_VARS:
            monkeypatch.delenv(var, raising=False)
        out = tmp_path / "out"
        rc = cli.main(["solve", "--config", _write(tmp_path, _base_cfg(out)),
                       "--threads", "2"])
        assert rc == 0
        assert os.environ["OMP_NUM_THREADS"] == "2"

    def test_bad_threads_rejected(self, tmp_path):
        rc = cli.main(["solve", "--config", _write(tmp_path, _base_cfg(tmp_path / "o")),
                       "--threads", "0"])
        assert rc == 2


# --- simulate --------------------------------------------------------------


class TestSimulateCommand:
    def test_requires_solve_artifacts(self, tmp_path):
        out = tmp_path / "out"
        rc = cli.main(["simulate", "--config", _write(tmp_path, _base_cfg(out))])
        assert rc == 4

    def test_solved_policy_estimate(self, tmp_path):
        out = tmp_path / "out"
        p = _write(tmp_path, _base_cfg(out))
        assert cli.main(["solve", "--config", p]) == 0
        assert cli.main(["simulate", "--config", p]) == 0
        est = json.loads((out / "estimate.json").read_text())
        assert est["policy"] == "solved"
        assert est["n"] == 1500
        assert abs(est["mean"] - 1.5) <= 3.0 * est["stderr"] + 0.02
        assert (out / "estimate.csv").exists()
        assert (out / "figures" / "payoffs.png").exists()

    def test_stale_artifacts_detected(self, tmp_path):
        out = tmp_path / "out"
        p = _write(tmp_path, _base_cfg(out))
        assert cli.main(["solve", "--config", p]) == 0
        changed = _base_cfg(out)
        changed["grid"]["time_nodes"] = 9
        rc = cli.main(["simulate", "--config", _write(tmp_path, changed, "c2.yaml")])
        assert rc == 4

    def test_seed_override_recorded(self, tmp_path):
        out = tmp_path / "out"
        p = _write(tmp_path, _base_cfg(out))
        assert cli.main(["solve", "--config", p]) == 0
        assert cli.main(["simulate", "--config", p, "--seed", "777"]) == 0
        est = json.loads((out / "estimate.json").read_text())
        assert est["seed"] == 777

    def test_baseline_policy_zero(self, tmp_path):
        out = tmp_path / "out"
        cfg = _base_cfg(out)
        cfg["simulation"]["policy"] = "baseline"
        assert cli.main(["simulate", "--config", _write(tmp_path, cfg)]) == 0
        est = json.loads((out / "estimate.json").read_text())
        assert est["mean"] == 0.0
        assert est["stderr"] == 0.0

    def test_threshold_policy_unsupported_exits_2(self, tmp_path):
        out = tmp_path / "out"
        cfg = _base_cfg(out)
        cfg["simulation"]["policy"] = "threshold"
        cfg["problem"]["site1"]["inter_arrival"] = {
            "kind": "weibull", "shape": 1.5, "scale": 0.5}
        rc = cli.main(["simulate", "--config", _write(tmp_path, cfg)])
        assert rc == 2

    def test_trajectory_dump(self, tmp_path):
        out = tmp_path / "out"
        cfg = _base_cfg(out)
        cfg["simulation"]["trajectories"] = 3
        p = _write(tmp_path, cfg)
        assert cli.main(["solve", "--config", p]) == 0
        assert cli.main(["simulate", "--config", p]) == 0
        summary_rows = _read_rows(out / "trajectory_summary.csv")
        assert len(summary_rows) == 3
        assert {r["replication"] for r in summary_rows} == {"0", "1", "2"}
        header = (out / "trajectories.csv").read_text().splitlines()[0]
        assert header == "replication,stage,claim_index,time,mass"
        for row in summary_rows:
            assert 0.0 <= float(row["switch_time"]) <= float(row["stop_time"]) <= 1.0


# --- compare ---------------------------------------------------------------


class TestCompareCommand:
    def test_report_contents(self, tmp_path):
        out = tmp_path / "out"
        cfg = _base_cfg(out, compare={"max_claims": 4, "factors": [0.5, 0.9, 1.1]})
        cfg["simulation"] = {"n": 800, "seed": 3}
        assert cli.main(["compare", "--config", _write(tmp_path, cfg)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["tool"] == "twostop"
        assert report["solver"]["total_value"] == pytest.approx(1.5, rel=5e-3)
        assert report["mc"]["n"] == 800
        assert report["mc"]["gap_to_solver"] <= report["mc"]["gap_limit"] + 0.05
        q = 1.0 - math.exp(-1.5)
        rows = report["decay"]
        assert [r["claims"] for r in rows] == list(range(0, 5))
        assert math.isnan(rows[0]["ratio"])  # no predecessor to compare against
        for r in rows[1:]:
            assert r["ratio"] <= q + 0.05
        assert report["dominance"]["winners"] == []
        assert (out / "decay.csv").exists()
        assert (out / "dominance.csv").exists()
        assert (out / "figures" / "decay.png").exists()

    def test_dominance_rows(self, tmp_path):
        out = tmp_path / "out"
        cfg = _base_cfg(out, compare={"max_claims": 3, "factors": [1.0]})
        cfg["simulation"] = {"n": 300, "seed": 5}
        assert cli.main(["compare", "--config", _write(tmp_path, cfg)]) == 0
        rows = _read_rows(out / "dominance.csv")
        assert len(rows) == 1
        assert float(rows[0]["diff_mean"]) == 0.0
        assert rows[0]["beats_base"] == "false"


# --- sweep -----------------------------------------------------------------


class TestSweepCommand:
    def test_kink_in_swept_value(self, tmp_path):
        out = tmp_path / "out"
        cfg = _base_cfg(out, sweep={
            "parameter": "problem.site2.inter_arrival.rate",
            "values": [3.1, 4.1, 5.1]})
        assert cli.main(["sweep", "--config", _write(tmp_path, cfg)]) == 0
        rows = _read_rows(out / "sweep.csv")
        assert [r["status"] for r in rows] == ["ok", "ok", "ok"]
        vals = [float(r["total_value"]) for r in rows]
        # rho2 = 0.5 * rate - 0.55 crosses rho1 = 1.5 exactly at rate 4.1
        assert vals[0] == pytest.approx(1.5, rel=5e-3)
        assert vals[1] == pytest.approx(1.5, rel=5e-3)
        assert vals[2] == pytest.approx(2.0, rel=2e-2)  # coarse grid, fast arrivals
        # flat below the crossing, rising past it
        assert abs(vals[1] - vals[0]) <= 1e-2
        assert vals[2] - vals[1] >= 0.4
        assert (out / "figures" / "sweep.png").exists()

    def test_single_point_matches_solve(self, tmp_path):
        out1 = tmp_path / "solve_out"
        base = _base_cfg(out1)
        assert cli.main(["solve", "--config", _write(tmp_path, base, "a.yaml")]) == 0
        solved = json.loads((out1 / "summary.json").read_text())["total_value"]

        out2 = tmp_path / "sweep_out"
        cfg = _base_cfg(out2, sweep={
            "parameter": "problem.site2.inter_arrival.rate", "values": [1.5]})
        assert cli.main(["sweep", "--config", _write(tmp_path, cfg, "b.yaml")]) == 0
        rows = _read_rows(out2 / "sweep.csv")
        assert float(rows[0]["total_value"]) == solved  # bit-identical pipeline

    def test_empty_values_writes_header_only(self, tmp_path):
        out = tmp_path / "out"
        cfg = _base_cfg(out, sweep={"parameter": "problem.horizon", "values": []})
        assert cli.main(["sweep", "--config", _write(tmp_path, cfg)]) == 0
        text = (out / "sweep.csv").read_text().strip().splitlines()
        assert len(text) == 1
        assert text[0].startswith("parameter,value,total_value")

    def test_values_without_parameter_rejected(self, tmp_path):
        cfg = _base_cfg(tmp_path / "out", sweep={"values": [1.0, 2.0]})
        assert cli.main(["sweep", "--config", _write(tmp_path, cfg)]) == 2

    def test_unaddressable_parameter_rejected(self, tmp_path):
        cfg = _base_cfg(tmp_path / "out", sweep={
            "parameter": "problem.site2.nothing.rate", "values": [1.0]})
        assert cli.main(["sweep", "--config", _write(tmp_path, cfg)]) == 2

    def test_failed_point_recorded_and_flagged(self, tmp_path):
        out = tmp_path / "out"
        cfg = _base_cfg(out, sweep={
            "parameter": "problem.site2.inter_arrival.rate",
            "values": [1.5, -1.0]})
        rc = cli.main(["sweep", "--config", _write(tmp_path, cfg)])
        assert rc == 1  # partial failure
        rows = _read_rows(out / "sweep.csv")
        assert rows[0]["status"] == "ok"
        assert rows[1]["status"] == "error"
        assert rows[1]["total_value"] == "nan"
        assert "ValidationError" in rows[1]["message"]
