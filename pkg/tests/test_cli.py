"""Command-line interface: flags, exit codes, config diagnostics, round-trips."""

import json
import os
import subprocess
import sys

import pytest

from corrdetect.cli import main


def run_cli(args, env=None):
    """Run in-process, capturing stdout/stderr and the exit code."""
    import contextlib
    import io

    out, err = io.StringIO(), io.StringIO()
    if env:
        old = {k: os.environ.get(k) for k in env}
        os.environ.update(env)
    try:
        with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
            code = main(args)
    finally:
        if env:
            for k, v in old.items():
                if v is None:
                    os.environ.pop(k, None)
                else:
                    os.environ[k] = v
    return code, out.getvalue(), err.getvalue()


class TestRateCommand:
    def test_sparse_example(self):
        code, out, _ = run_cli(["rate", "--family", "eq", "--p", "100",
                                "--s", "5", "--gamma", "0"])
        assert code == 0
        assert "regime sparse" in out
        assert "rate_sq 8.0472" in out

    def test_perfect_dense(self):
        code, out, _ = run_cli(["rate", "--family", "eq", "--p", "100",
                                "--s", "100", "--gamma", "1"])
        assert code == 0 and "rate_sq 100.0000" in out

    def test_grouped_needs_R(self):
        code, _, err = run_cli(["rate", "--family", "grouped", "--p", "100",
                                "--s", "5", "--gamma", "0.5"])
        assert code == 2 and "model.R" in err

    def test_rank_one_via_pattern_file(self, tmp_path):
        vf = tmp_path / "v.txt"
        vf.write_text("\n".join(["1.0"] * 16) + "\n")
        code, out, _ = run_cli(["rate", "--family", "rankone", "--p", "16",
                                "--s", "2", "--gamma", "0.5", "--v-file", str(vf)])
        assert code == 0 and "regime sparse" in out

    def test_uncharacterized_verdict(self, tmp_path):
        vf = tmp_path / "v.txt"
        vf.write_text("\n".join(["1.0"] * 16) + "\n")
        code, out, _ = run_cli(["rate", "--family", "rankone", "--p", "16",
                                "--s", "10", "--gamma", "0.5", "--v-file", str(vf)])
        assert code == 0 and "rate_sq uncharacterized" in out


def _sweep_config(tmp_path, **overrides):
    cfg = {
        "model": {"family": "equicorrelated", "p": [32], "gamma": [0.0, 0.5]},
        "test": {"mode": "calibrated", "eta": 0.2, "n_cal": 1000},
        "sweep": {"s": [3], "multipliers": [0.25, 8.0], "n_reps": 200},
        "seed": 0,
        "workers": 1,
    }
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


class TestSweepCommand:
    def test_writes_csv_and_manifest(self, tmp_path):
        cfg = _sweep_config(tmp_path)
        out_dir = tmp_path / "out"
        code, out, _ = run_cli(["sweep", "--config", str(cfg), "--out", str(out_dir)])
        assert code == 0
        csv_path = out_dir / "sweep.csv"
        lines = csv_path.read_text().splitlines()
        assert lines[0] == ("family,p,s,gamma,R,regime,rate_sq,multiplier,"
                            "type_i,worst_type_ii,total,se,n_reps,seed")
        assert len(lines) == 5
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert manifest["master_seed"] == 0
        assert all(c["status"] == "ok" for c in manifest["cells"])

    def test_manifest_reproduces_identical_bytes(self, tmp_path):
        cfg = _sweep_config(tmp_path)
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert run_cli(["sweep", "--config", str(cfg), "--out", str(out1)])[0] == 0
        # rerun from the manifest itself (it embeds the config)
        assert run_cli(["sweep", "--config", str(out1 / "manifest.json"),
                        "--out", str(out2)])[0] == 0
        assert (out1 / "sweep.csv").read_bytes() == (out2 / "sweep.csv").read_bytes()

    def test_bad_group_count_diagnostic(self, tmp_path):
        cfg = _sweep_config(tmp_path, model={"family": "grouped", "p": [32],
                                             "gamma": [0.5], "R": [5]})
        code, _, err = run_cli(["sweep", "--config", str(cfg), "--out",
                                str(tmp_path / "x")])
        assert code == 2
        assert "model.R" in err

    def test_unknown_key_rejected(self, tmp_path):
        cfg = _sweep_config(tmp_path, bogus=1)
        code, _, err = run_cli(["sweep", "--config", str(cfg), "--out",
                                str(tmp_path / "x")])
        assert code == 2 and "bogus" in err

    def test_missing_file(self, tmp_path):
        code, _, err = run_cli(["sweep", "--config", str(tmp_path / "none.json"),
                                "--out", str(tmp_path / "x")])
        assert code == 2

    def test_seed_env_fallback(self, tmp_path):
        cfg = _sweep_config(tmp_path)
        data = json.loads(cfg.read_text())
        del data["seed"]
        cfg.write_text(json.dumps(data))
        out_dir = tmp_path / "env-out"
        code, _, _ = run_cli(["sweep", "--config", str(cfg), "--out", str(out_dir)],
                             env={"CORRDETECT_SEED": "77"})
        assert code == 0
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert manifest["master_seed"] == 77

    def test_flag_overrides_env_and_file(self, tmp_path):
        cfg = _sweep_config(tmp_path)
        out_dir = tmp_path / "flag-out"
        code, _, _ = run_cli(["sweep", "--config", str(cfg), "--out", str(out_dir),
                              "--seed", "5"], env={"CORRDETECT_SEED": "77"})
        assert code == 0
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert manifest["master_seed"] == 5


class TestOtherCommands:
    def test_calibrate_emits_descriptor(self, tmp_path):
        out = tmp_path / "test.json"
        code, _, _ = run_cli(["calibrate", "--family", "eq", "--p", "32", "--s", "3",
                              "--gamma", "0.5", "--eta", "0.2", "--n-cal", "1000",
                              "--seed", "0", "--out", str(out)])
        assert code == 0
        desc = json.loads(out.read_text())
        assert desc["mode"] == "calibrated"
        assert desc["constituents"][0]["kind"] == "thresholded"
        assert desc["calibration"]["n_cal"] == 1000

    def test_risk_command(self, tmp_path):
        cfg = {
            "model": {"family": "equicorrelated", "p": 32, "gamma": 0.0},
            "test": {"mode": "calibrated", "eta": 0.2, "n_cal": 1000, "s": 3},
            "risk": {"s": 3, "multiplier": 8.0, "n_reps": 300},
            "seed": 1,
        }
        path = tmp_path / "risk.json"
        path.write_text(json.dumps(cfg))
        code, out, _ = run_cli(["risk", "--config", str(path)])
        assert code == 0
        payload = json.loads(out)
        assert payload["estimate"]["n_reps"] == 300
        assert 0.0 <= payload["estimate"]["total"] <= 2.0

    def test_divergence_command(self):
        code, out, _ = run_cli(["divergence", "--prior", "uniform_sparse",
                                "--family", "eq", "--p", "10", "--s", "2",
                                "--gamma", "0.3", "--magnitude", "0.4",
                                "--method", "hypergeometric_sum"])
        assert code == 0
        row = json.loads(out)
        assert row["method"] == "hypergeometric_sum"
        assert row["risk_bound"] == pytest.approx(1 - 0.5 * row["chi_sq"] ** 0.5)

    def test_console_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "corrdetect", "rate", "--family", "eq",
             "--p", "100", "--s", "5", "--gamma", "0"],
            capture_output=True, text=True, timeout=120)
        assert proc.returncode == 0
        assert "8.0472" in proc.stdout
