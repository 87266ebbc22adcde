import json

import numpy as np
import pytest

import scenario_ddc as sd
from scenario_ddc.cli import main
from scenario_ddc.io import load_controller


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestBound:
    def test_benchmark_values(self, capsys):
        code, out, err = run_cli(
            capsys, "bound", "--alpha", "0.05", "--epsilon", "0.01",
            "--nx", "3", "--nu", "3",
        )
        assert code == 0
        payload = json.loads(out.splitlines()[0])
        assert payload["n"] == 20
        assert payload["N"] == 985
        assert payload["raw"] == pytest.approx(984.2068, abs=1e-3)
        assert "984" in out  # the truncated value is mentioned alongside

    def test_invert_for_n(self, capsys):
        code, out, _ = run_cli(
            capsys, "bound", "--alpha", "0.05", "--epsilon", "0.01",
            "--nx", "3", "--nu", "3", "--invert-for-n", "32",
        )
        assert code == 0
        assert "vacuous" in out

    def test_out_of_range_alpha(self, capsys):
        code, out, err = run_cli(
            capsys, "bound", "--alpha", "1.5", "--epsilon", "0.01",
            "--nx", "3", "--nu", "3",
        )
        assert code == 1
        assert "alpha" in err


class TestUsageErrors:
    def test_unknown_flag_exits_one(self, capsys):
        code, out, err = run_cli(capsys, "bound", "--bogus", "1")
        assert code == 1
        assert "usage" in err.lower()

    def test_unknown_command_exits_one(self, capsys):
        code, out, err = run_cli(capsys, "frobnicate")
        assert code == 1

    def test_missing_required_exits_one(self, capsys):
        code, out, err = run_cli(capsys, "synthesize")
        assert code == 1


class TestPipeline:
    def test_generate_synthesize_validate(self, capsys, tmp_path):
        ds = tmp_path / "ds.json"
        code, out, _ = run_cli(
            capsys, "generate", "--sigma2", "1e-4", "--n", "3", "--m", "15",
            "--wbar", "0.015", "--seed", "7", "--out", str(ds),
        )
        assert code == 0
        meta = json.loads(out)
        assert meta["n_trajectories"] == 3
        assert ds.exists()

        ctrl = tmp_path / "K.json"
        code, out, err = run_cli(
            capsys, "synthesize", "--data", str(ds), "--wbar", "0.015",
            "--out", str(ctrl),
        )
        assert code == 0, err
        result = json.loads(out)
        assert result["status"] == "ok"
        doc = load_controller(ctrl)
        assert doc["provenance"]["dataset_sha256"] == meta["sha256"]
        K = doc["K"]
        # spot stability against the benchmark mean
        dist = sd.default_benchmark_fleet(1e-4)
        A, B = dist.unpack(dist.mu)
        assert sd.spectral_radius(A + B @ K) < 1.0

        code, out, _ = run_cli(
            capsys, "validate", "--controller", str(ctrl), "--sigma2", "1e-4",
            "--n-test", "50", "--seed", "3",
        )
        assert code == 0
        report = json.loads(out)
        assert report["n_test"] == 50
        assert report["alpha_hat_spectral"] <= 0.1

    def test_synthesize_infeasible_exit_code(self, capsys, tmp_path):
        # two-state-consistent contradictory dataset: A=2 and A=-2 both fit
        X = np.array([[0.01, 0.02]])
        traj = sd.Trajectory(
            states=np.array([[0.01], [0.02], [0.04]]),
            inputs=np.zeros((3, 1)),
        )
        from scenario_ddc.io import save_dataset

        ds = tmp_path / "bad.json"
        save_dataset(ds, [traj])
        code, out, err = run_cli(
            capsys, "synthesize", "--data", str(ds), "--wbar", "0.01",
            "--out", str(tmp_path / "K.json"),
        )
        assert code == 3
        assert json.loads(out)["status"] == "infeasible"

    def test_synthesize_slater_fail_policy(self, capsys, tmp_path):
        # oscillating zero-input data cannot be explained within the assumed
        # noise budget, so the regularity precheck rejects the rollout
        traj = sd.Trajectory(
            states=np.array([[0.0], [1.0], [0.0], [1.0]]),
            inputs=np.zeros((4, 1)),
        )
        from scenario_ddc.io import save_dataset

        ds = tmp_path / "flat.json"
        save_dataset(ds, [traj])
        code, out, err = run_cli(
            capsys, "synthesize", "--data", str(ds), "--wbar", "1e-6",
            "--slater", "fail", "--out", str(tmp_path / "K.json"),
        )
        assert code == 1
        assert "regularity" in err

        # discard policy leaves no usable data behind
        code, out, err = run_cli(
            capsys, "synthesize", "--data", str(ds), "--wbar", "1e-6",
            "--slater", "discard", "--out", str(tmp_path / "K.json"),
        )
        assert code == 1
        assert "no usable trajectories" in err

    def test_missing_dataset_file(self, capsys, tmp_path):
        code, out, err = run_cli(
            capsys, "synthesize", "--data", str(tmp_path / "nope.json"),
            "--wbar", "0.01",
        )
        assert code == 1


class TestExperimentCommands:
    def test_uncertainty_sets_smoke(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.toml"
        cfg.write_text(
            """
master_seed = 5
[uncertainty]
M_values = [5, 10]
n_seeds = 2
resolution = 11
[output]
figures = false
"""
        )
        code, out, _ = run_cli(
            capsys, "experiment", "uncertainty-sets-1d",
            "--config", str(cfg), "--out", str(tmp_path / "res"),
        )
        assert code == 0
        assert (tmp_path / "res" / "uncertainty_summary.csv").exists()
        assert not (tmp_path / "res" / "uncertainty_sets.png").exists()

    def test_heatmap_smoke_and_aggregate(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.toml"
        cfg.write_text(
            """
master_seed = 11
[fleet]
M = 8
[sweep]
sigma2_values = [1e-4]
N_values = [2]
M_values = [8]
repetitions = 2
n_test = 10
[output]
figures = false
"""
        )
        code, out, _ = run_cli(
            capsys, "experiment", "heatmap-sigma-n",
            "--config", str(cfg), "--out", str(tmp_path / "hm"),
        )
        assert code == 0
        summary = json.loads(out)
        assert summary["cells"] == 2

        code, out, _ = run_cli(
            capsys, "aggregate",
            "--raw", str(tmp_path / "hm" / "heatmap_sigma_N_raw.csv"),
            "--out", str(tmp_path / "hm" / "agg2.csv"),
        )
        assert code == 0
        agg = (tmp_path / "hm" / "agg2.csv").read_text().splitlines()
        assert agg[1] == "sigma2,N,M,stab_freq,feas_freq,reps"

    def test_figures_rendered_by_default(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.toml"
        cfg.write_text(
            """
master_seed = 11
[fleet]
M = 8
[sweep]
sigma2_values = [1e-4]
N_values = [2]
M_values = [8]
repetitions = 1
n_test = 5
"""
        )
        code, out, _ = run_cli(
            capsys, "experiment", "heatmap-sigma-n",
            "--config", str(cfg), "--out", str(tmp_path / "hm"),
        )
        assert code == 0
        assert (tmp_path / "hm" / "heatmap_sigma_N.png").exists()


def test_init_config_round_trip(capsys, tmp_path):
    target = tmp_path / "template.toml"
    code, out, _ = run_cli(capsys, "init-config", "--out", str(target))
    assert code == 0
    from scenario_ddc.config import default_config, load_config

    assert load_config(target) == default_config()


def test_version_flag(capsys):
    code, out, err = run_cli(capsys, "--version")
    assert code == 0
