"""Command-line front end: schemas, exit codes, round trips, reproducibility."""

import json
import subprocess
import sys

from fracdrift.cli import EXIT_DEGENERATE, EXIT_ERROR, EXIT_OK, EXIT_THRESHOLD, main

HEAT3 = {"kind": "distributed", "d": 1, "m": 1, "n_modes": 3, "alpha": 1.0, "hurst": 0.55}
POINTWISE = {"kind": "pointwise", "y": 0.5, "n_modes": 8, "alpha": 1.0, "hurst": 0.55}


def write(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


class TestTheory:
    def test_emits_tables(self, tmp_path):
        cfg = write(tmp_path, "cfg.json", {
            "model": HEAT3,
            "projection": {"kind": "indicator", "a": 0.0, "b": 0.5},
            "n_values": [16, 64],
        })
        out = tmp_path / "out"
        assert main(["theory", "--config", cfg, "--out", str(out)]) == EXIT_OK
        payload = json.loads((out / "theory.json").read_text())
        names = {q["name"] for q in payload["quantities"]}
        assert {"trace_q_drift1", "qww_drift1", "sigma1", "sigma2", "sigma3",
                "sigma4", "gamma_alpha", "delta_alpha", "s_inf_star", "u_inf_star",
                "s_n[16]", "xi_H[64]"} <= names
        csv_text = (out / "theory.csv").read_text()
        assert csv_text.startswith("quantity,value,note")
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "theory"
        assert "config_sha256" in manifest

    def test_h_above_clt_regime(self, tmp_path):
        model = dict(HEAT3, hurst=0.8)
        cfg = write(tmp_path, "cfg.json", {"model": model})
        out = tmp_path / "out"
        assert main(["theory", "--config", cfg, "--out", str(out)]) == EXIT_OK
        payload = json.loads((out / "theory.json").read_text())
        assert payload["clt_regime"] is False

    def test_unknown_key_rejected(self, tmp_path, capsys):
        cfg = write(tmp_path, "cfg.json", {"model": HEAT3, "oops": 1})
        assert main(["theory", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_ERROR
        assert "error: config" in capsys.readouterr().err


class TestSimulateEstimateRoundTrip:
    def test_csv_roundtrip_and_estimate(self, tmp_path):
        sim_cfg = write(tmp_path, "sim.json", {
            "model": HEAT3,
            "grid": {"dt": 1.0, "n_steps": 400},
            "method": "exact_stationary",
            "projection": {"kind": "indicator", "a": 0.0, "b": 0.5},
            "seed": 5,
        })
        sim_out = tmp_path / "sim"
        assert main(["simulate", "--config", sim_cfg, "--out", str(sim_out)]) == EXIT_OK
        traj_csv = sim_out / "trajectory.csv"
        assert traj_csv.read_text().splitlines()[0] == "t,sq_norm,projection"

        est_cfg = write(tmp_path, "est.json", {
            "model": HEAT3,
            "trajectory": str(traj_csv),
            "estimator": "discrete_norm",
            "true_alpha": 1.0,
        })
        est_out = tmp_path / "est"
        assert main(["estimate", "--config", est_cfg, "--out", str(est_out)]) == EXIT_OK
        report = json.loads((est_out / "estimate.json").read_text())
        assert 0.5 < report["alpha_hat"] < 2.0
        assert report["standardized_error"] is not None
        assert report["truncation_tail_ratio"] > 0

    def test_npz_accepted(self, tmp_path):
        sim_cfg = write(tmp_path, "sim.json", {
            "model": HEAT3, "grid": {"dt": 0.5, "n_steps": 64},
            "method": "exact_stationary", "seed": 2,
        })
        sim_out = tmp_path / "sim"
        main(["simulate", "--config", sim_cfg, "--out", str(sim_out)])
        est_cfg = write(tmp_path, "est.json", {
            "model": HEAT3,
            "trajectory": str(sim_out / "trajectory.npz"),
            "estimator": "continuous_norm",
        })
        assert main(["estimate", "--config", est_cfg, "--out", str(tmp_path / "e")]) == EXIT_OK

    def test_integrator_method(self, tmp_path):
        sim_cfg = write(tmp_path, "sim.json", {
            "model": HEAT3,
            "grid": {"dt": 0.01, "n_steps": 200},
            "init": "burn_in",
            "observe_every": 10,
            "seed": 3,
        })
        out = tmp_path / "sim"
        assert main(["simulate", "--config", sim_cfg, "--out", str(out)]) == EXIT_OK
        rows = (out / "trajectory.csv").read_text().splitlines()
        assert len(rows) == 1 + 21  # header + n/observe_every + 1 points

    def test_degenerate_estimate_exit_code(self, tmp_path, capsys):
        sim_cfg = write(tmp_path, "sim.json", {
            "model": POINTWISE, "grid": {"dt": 1.0, "n_steps": 32},
            "method": "exact_stationary",
            "projection": {"kind": "sine_mode", "mode": 4}, "seed": 1,
        })
        sim_out = tmp_path / "sim"
        main(["simulate", "--config", sim_cfg, "--out", str(sim_out)])
        est_cfg = write(tmp_path, "est.json", {
            "model": POINTWISE,
            "trajectory": str(sim_out / "trajectory.csv"),
            "estimator": "discrete_projection",
            "projection": {"kind": "sine_mode", "mode": 4},
        })
        code = main(["estimate", "--config", est_cfg, "--out", str(tmp_path / "e")])
        assert code == EXIT_DEGENERATE
        assert "error: degenerate:" in capsys.readouterr().err

    def test_missing_trajectory_file(self, tmp_path, capsys):
        est_cfg = write(tmp_path, "est.json", {
            "model": HEAT3, "trajectory": str(tmp_path / "nope.csv"),
            "estimator": "discrete_norm",
        })
        assert main(["estimate", "--config", est_cfg, "--out", str(tmp_path / "e")]) == EXIT_ERROR
        assert "error: config" in capsys.readouterr().err


class TestExperimentCommand:
    def test_pass_and_outputs(self, tmp_path):
        cfg = write(tmp_path, "exp.json", {
            "model": HEAT3, "grid": [64, 256], "replications": 80, "seed": 4,
            "thresholds": {"max_median_error": 0.6},
        })
        out = tmp_path / "out"
        code = main(["experiment", "consistency", "--config", cfg, "--out", str(out)])
        assert code == EXIT_OK
        summary = json.loads((out / "experiment_consistency_summary.json").read_text())
        assert summary["passed"] is True
        csv_lines = (out / "experiment_consistency_report.csv").read_text().splitlines()
        assert csv_lines[0] == "grid,statistic,value,mc_se,n_reps"

    def test_threshold_failure_exit_code(self, tmp_path):
        cfg = write(tmp_path, "exp.json", {
            "model": HEAT3, "grid": [32, 64], "replications": 40, "seed": 4,
            "thresholds": {"max_median_error": 1e-9},
        })
        code = main(["experiment", "consistency", "--config", cfg, "--out",
                     str(tmp_path / "out")])
        assert code == EXIT_THRESHOLD

    def test_degenerate_experiment_exit_code(self, tmp_path, capsys):
        cfg = write(tmp_path, "exp.json", {
            "model": POINTWISE, "grid": [16], "replications": 8, "seed": 1,
            "estimators": ["discrete_projection"],
            "projection": {"kind": "sine_mode", "mode": 4},
        })
        code = main(["experiment", "consistency", "--config", cfg, "--out",
                     str(tmp_path / "out")])
        assert code == EXIT_DEGENERATE

    def test_seed_override(self, tmp_path):
        cfg = write(tmp_path, "exp.json", {
            "model": HEAT3, "grid": [16, 32], "replications": 30, "seed": 4,
            "thresholds": {"max_median_error": 2.0},
        })
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["experiment", "consistency", "--config", cfg, "--out", str(out1),
              "--seed", "99"])
        main(["experiment", "consistency", "--config", cfg, "--out", str(out2)])
        s1 = json.loads((out1 / "experiment_consistency_summary.json").read_text())
        s2 = json.loads((out2 / "experiment_consistency_summary.json").read_text())
        assert s1["seed"] == 99 and s2["seed"] == 4
        assert s1["rows"] != s2["rows"]


class TestReproducibility:
    def test_byte_identical_across_threads(self, tmp_path):
        cfg = write(tmp_path, "exp.json", {
            "model": HEAT3, "grid": [32, 64, 128], "replications": 60, "seed": 8,
        })
        outputs = {}
        for threads in (1, 8):
            out = tmp_path / f"t{threads}"
            main(["experiment", "moment_clt", "--config", cfg, "--out", str(out),
                  "--threads", str(threads)])
            outputs[threads] = {
                "csv": (out / "experiment_moment_clt_report.csv").read_bytes(),
                "json": (out / "experiment_moment_clt_summary.json").read_bytes(),
                "manifest": json.loads((out / "manifest.json").read_text()),
            }
        assert outputs[1]["csv"] == outputs[8]["csv"]
        assert outputs[1]["json"] == outputs[8]["json"]
        m1, m8 = outputs[1]["manifest"], outputs[8]["manifest"]
        m1.pop("created_at"), m8.pop("created_at")
        assert m1 == m8

    def test_rerun_identical(self, tmp_path):
        cfg = write(tmp_path, "exp.json", {
            "model": HEAT3, "grid": [32], "replications": 40, "seed": 8,
            "thresholds": {"ks_localized_max": 1.0},
        })
        blobs = []
        for name in ("a", "b"):
            out = tmp_path / name
            main(["experiment", "estimator_clt", "--config", cfg, "--out", str(out)])
            blobs.append((out / "experiment_estimator_clt_summary.json").read_bytes())
        assert blobs[0] == blobs[1]


class TestEntryPoint:
    def test_module_invocation(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"model": HEAT3, "n_values": [8]}))
        proc = subprocess.run(
            [sys.executable, "-m", "fracdrift.cli", "theory",
             "--config", str(cfg), "--out", str(tmp_path / "o")],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr

    def test_bad_json_config(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["theory", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_ERROR
        assert "error: config" in capsys.readouterr().err
