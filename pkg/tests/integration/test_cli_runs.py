"""
Integration tests for end-to-end experiment runs through the CLI.

Each test writes a config, runs ``main`` with Sentry disabled and checks the
exit code, the artifacts and the run ledger.
"""

import csv
import json
import sqlite3
from unittest.mock import MagicMock

import pytest

from src.base import InvalidConfigError
from src.cli import main
from src.experiment import ExperimentConfig, load_config, run_experiment
from src.provenance import file_sha256
from src.storage import RunStatus, RunStore
from src.thickness import THICKNESS_COLUMNS
from src.verify import CounterexampleRow, CounterexampleTable, GridGrowth

pytestmark = pytest.mark.integration


def _run(command, config_path, out_dir, *extra):
    return main([command, "--config", str(config_path), "--out", str(out_dir), "--no-sentry", *extra])


@pytest.fixture
def obs_config():
    return {
        "command": "verify-obs",
        "seed": 11,
        "params": {
            "grid": {"d": 1, "N": 64, "box": 16.0},
            "symbol": {"kind": "laplacian"},
            "mask": {"family": "periodic_stripes", "duty": 0.5, "period": 1.0},
            "T": 0.5,
            "samples": 4,
            "n_t": 16,
        },
    }


@pytest.fixture
def diss_config():
    return {
        "command": "verify-diss",
        "params": {
            "grid": {"d": 2, "N": 8, "box": 8.0},
            "symbol": {"kind": "laplacian"},
            "lambdas": [1.0],
            "times": [1.0],
            "c": 10.0,
        },
    }


class TestSuccessfulRuns:
    """Tests for runs that exit 0."""

    def test_cert_artifacts(self, temp_dir, write_config, cert_config):
        """Test that cert writes its record, constants, manifest and ledger entry."""
        out = temp_dir / "out"
        assert _run("cert", write_config(cert_config), out) == 0

        for name in ("cert.json", "constants.csv", "manifest.json", "runs.db"):
            assert (out / name).exists(), name

        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["exit_code"] == 0
        assert manifest["seed"] == 0
        assert manifest["seed_stages"] == {"fit": 1, "observability": 2, "control": 3, "mask": 4}
        digests = {entry["path"]: entry["sha256"] for entry in manifest["artifacts"]}
        assert digests["constants.csv"] == file_sha256(out / "constants.csv")
        assert "C_obs" in manifest["constants"]

        with open(out / "constants.csv") as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == ["name", "value", "log_value"]
        names = [row[0] for row in rows[1:]]
        assert names == sorted(names)

        store = RunStore(out / "runs.db")
        run = store.list_runs("cert")[0]
        assert run.status == RunStatus.SUCCEEDED
        assert run.exit_code == 0
        assert run.to_dict()["certificates"] == len(manifest["constants"])

    def test_rerun_is_byte_identical(self, temp_dir, write_config, cert_config):
        """Test that the same config and seed reproduce every artifact exactly."""
        path = write_config(cert_config)
        assert _run("cert", path, temp_dir / "a", "--no-db") == 0
        assert _run("cert", path, temp_dir / "b", "--no-db") == 0
        for name in ("cert.json", "constants.csv", "manifest.json"):
            assert (temp_dir / "a" / name).read_bytes() == (temp_dir / "b" / name).read_bytes()

    def test_no_db(self, temp_dir, write_config, cert_config):
        """Test that --no-db skips the ledger."""
        out = temp_dir / "out"
        assert _run("cert", write_config(cert_config), out, "--no-db") == 0
        assert not (out / "runs.db").exists()

    def test_yaml_config(self, temp_dir, cert_config):
        """Test that YAML configs load like JSON ones."""
        import yaml

        path = temp_dir / "cert.yaml"
        path.write_text(yaml.safe_dump(cert_config))
        assert load_config(path) == cert_config
        assert _run("cert", path, temp_dir / "out", "--no-db") == 0

    def test_thread_count_does_not_change_results(self, temp_dir, write_config, obs_config):
        """Test that 1 and 4 threads give identical ratios and constants."""
        path = write_config(obs_config)
        assert _run("verify-obs", path, temp_dir / "one", "--threads", "1", "--no-db") == 0
        assert _run("verify-obs", path, temp_dir / "four", "--threads", "4", "--no-db") == 0
        for name in ("ratios.csv", "constants.csv"):
            assert (temp_dir / "one" / name).read_bytes() == (temp_dir / "four" / name).read_bytes()
        manifest = json.loads((temp_dir / "four" / "manifest.json").read_text())
        assert manifest["threads"] == 4

    def test_seed_flag_overrides_config(self, temp_dir, write_config, obs_config):
        """Test that --seed replaces the config seed and changes the draws."""
        path = write_config(obs_config)
        assert _run("verify-obs", path, temp_dir / "a", "--no-db") == 0
        assert _run("verify-obs", path, temp_dir / "b", "--seed", "12", "--no-db") == 0
        manifest = json.loads((temp_dir / "b" / "manifest.json").read_text())
        assert manifest["seed"] == 12
        assert (temp_dir / "a" / "ratios.csv").read_bytes() != (temp_dir / "b" / "ratios.csv").read_bytes()

    def test_given_ellipticity_constant_skips_search(self, temp_dir, write_config, monkeypatch):
        """Test that an explicit c is used without sampling the symbol on the sphere."""
        search = MagicMock(side_effect=AssertionError("ellipticity search ran"))
        monkeypatch.setattr("src.experiment.ellipticity_constant", search)
        config = {
            "command": "elliptic-cert",
            "params": {
                "rho": 0.5, "L": [1.0], "symbol": {"kind": "laplacian", "d": 1},
                "c": 1.0, "T": 0.5, "r": 2,
            },
        }
        assert _run("elliptic-cert", write_config(config), temp_dir / "out", "--no-db") == 0
        search.assert_not_called()

    def test_thickness_run(self, temp_dir, write_config):
        """Test the thickness table and the saved mask bitmap."""
        config = {
            "command": "thickness",
            "params": {
                "grid": {"d": 1, "N": 64, "box": 16.0},
                "mask": {"family": "periodic_stripes", "duty": 0.5, "period": 1.0},
                "L": [0.5, 1.0],
                "brute_force": True,
                "save_mask": True,
            },
        }
        out = temp_dir / "out"
        assert _run("thickness", write_config(config), out, "--no-db") == 0
        summary = json.loads((out / "thickness.json").read_text())
        assert summary["brute_force_agrees"] is True
        assert [r["rho"] for r in summary["reports"]] == [0.0, 0.5]
        with open(out / "thickness.csv") as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == THICKNESS_COLUMNS
        assert len(rows) == 3
        assert (out / "mask.pbm").read_bytes().startswith(b"P4")


class TestFailingRuns:
    """Tests for exit codes 2 through 5."""

    def test_invalid_config_exits_2(self, temp_dir, write_config, cert_config, capsys):
        """Test that schema violations exit 2 before anything runs."""
        cert_config["params"]["d2"] = 0.5
        out = temp_dir / "out"
        assert _run("cert", write_config(cert_config), out) == 2
        assert "invalid config" in capsys.readouterr().err
        assert not out.exists()

    def test_command_mismatch_exits_2(self, temp_dir, write_config, cert_config):
        """Test that a config for another command is rejected."""
        assert _run("thickness", write_config(cert_config), temp_dir / "out") == 2

    def test_hypothesis_violation_exits_3(self, temp_dir, write_config, diss_config):
        """Test that a failed dissipation check exits 3 and keeps its artifacts."""
        out = temp_dir / "out"
        assert _run("verify-diss", write_config(diss_config), out) == 3

        report = json.loads((out / "failure_report.json").read_text())
        assert report["error"]["error"] == "HypothesisViolationError"
        assert report["error"]["exit_code"] == 3
        assert (out / "dissipation.csv").exists()
        assert json.loads((out / "manifest.json").read_text())["exit_code"] == 3

        run = RunStore(out / "runs.db").list_runs()[0]
        assert run.status == RunStatus.FAILED
        assert run.error_type == "HypothesisViolationError"

    def test_nonconvergence_exits_4(self, temp_dir, write_config):
        """Test that an iteration cap exits 4 with the residual history."""
        config = {
            "command": "control",
            "params": {
                "grid": {"d": 1, "N": 64, "box": 16.0},
                "symbol": {"kind": "laplacian"},
                "mask": {"family": "periodic_stripes", "duty": 0.5, "period": 1.0},
                "x0": {"kind": "gaussian_bump", "s": 0.25},
                "T": 0.5,
                "n_t": 16,
                "cg_tol": 1e-14,
                "cg_maxiter": 2,
            },
        }
        out = temp_dir / "out"
        assert _run("control", write_config(config), out, "--no-db") == 4
        report = json.loads((out / "failure_report.json").read_text())
        assert report["error"]["error"] == "NonConvergenceError"
        assert len(report["error"]["history"]) == 3

    def test_ledger_locked_mid_run_exits_5(self, temp_dir, cert_config, monkeypatch):
        """Test that a ledger write failing mid-run exits 5 with a failure report."""
        out = temp_dir / "out"
        db_path = temp_dir / "runs.db"
        store = RunStore(db_path, timeout=0.1)
        locker = sqlite3.connect(str(db_path), isolation_level=None)
        start_run = store.start_run

        def start_then_lock(*args, **kwargs):
            run_id = start_run(*args, **kwargs)
            locker.execute("BEGIN EXCLUSIVE")
            return run_id

        monkeypatch.setattr(store, "start_run", start_then_lock)
        try:
            result = run_experiment(ExperimentConfig.from_mapping(cert_config), out, store)
        finally:
            locker.execute("ROLLBACK")
            locker.close()

        assert result.exit_code == 5
        report = json.loads((out / "failure_report.json").read_text())
        assert report["error"]["error"] == "ArtifactIOError"
        assert json.loads((out / "manifest.json").read_text())["exit_code"] == 5

    def test_failed_counterexample_check_exits_3(self, temp_dir, write_config, monkeypatch):
        """Test that a sweep whose ratios shrink with the hole radius exits 3."""
        rows = tuple(
            CounterexampleRow(n=n, box=8.0 * n, N=64, numerator=1.0, kernel_norm=1.0,
                              denominator=1.0 / ratio, ratio=ratio, split_bound=1.0)
            for n, ratio in ((2.0, 5.0), (4.0, 2.0))
        )
        table = CounterexampleTable(T=0.1, r=2.0, p=2.0, growth=GridGrowth(), rows=rows)
        monkeypatch.setattr("src.experiment.counterexample_sweep", lambda *args, **kwargs: table)
        config = {
            "command": "counterexample",
            "params": {"symbol": {"kind": "laplacian", "d": 1}, "radii": [2, 4], "T": 0.1},
        }
        out = temp_dir / "out"
        assert _run("counterexample", write_config(config), out, "--no-db") == 3

        summary = json.loads((out / "counterexample.json").read_text())
        assert summary["monotone"] is False
        report = json.loads((out / "failure_report.json").read_text())
        assert report["error"]["error"] == "HypothesisViolationError"
        assert report["error"]["report"]["failed_checks"] == summary["failed_checks"]
        assert (out / "counterexample.csv").exists()

    def test_non_power_of_two_grid_exits_2(self, temp_dir, write_config, obs_config):
        """Test that a grid size the simulator rejects fails at validation."""
        obs_config["params"]["grid"]["N"] = 60
        out = temp_dir / "out"
        assert _run("verify-obs", write_config(obs_config), out) == 2
        assert not out.exists()

    def test_missing_config_exits_5(self, temp_dir):
        """Test that an unreadable config is an I/O failure."""
        assert _run("cert", temp_dir / "missing.json", temp_dir / "out") == 5

    def test_sentry_called_on_failure(self, temp_dir, diss_config, mock_sentry):
        """Test that failures are reported to error tracking."""
        config = ExperimentConfig.from_mapping(diss_config)
        result = run_experiment(config, temp_dir / "out")
        assert result.exit_code == 3
        mock_sentry.assert_called_once()


class TestExperimentConfig:
    """Tests for ExperimentConfig.from_mapping."""

    def test_threads_from_environment(self, monkeypatch, cert_config):
        """Test that $OBSCERT_THREADS is the fallback thread count."""
        monkeypatch.setenv("OBSCERT_THREADS", "3")
        assert ExperimentConfig.from_mapping(cert_config).threads == 3
        assert ExperimentConfig.from_mapping(cert_config, threads=2).threads == 2

    def test_bad_environment_threads(self, monkeypatch, cert_config):
        """Test that a non-integer $OBSCERT_THREADS is a config error."""
        monkeypatch.setenv("OBSCERT_THREADS", "many")
        with pytest.raises(InvalidConfigError):
            ExperimentConfig.from_mapping(cert_config)

    def test_hash_ignores_seed_and_threads(self, cert_config):
        """Test that the config hash covers only command and parameters."""
        a = ExperimentConfig.from_mapping(cert_config, seed=1, threads=1)
        b = ExperimentConfig.from_mapping(cert_config, seed=2, threads=4)
        assert a.config_hash == b.config_hash
        assert a.run_iri != b.run_iri


class TestCertifiedPipeline:
    """End-to-end runs that fit (d0, d1) and check the assembled certificate."""

    @pytest.fixture
    def fitted_obs_config(self, obs_config):
        obs_config["params"].update(
            {"samples": 64, "n_t": 64, "r": 2, "fit_lambdas": [0.5, 1.0, 2.0], "fit_samples": 16}
        )
        return obs_config

    @pytest.mark.slow
    def test_fitted_certificate_dominates(self, temp_dir, write_config, fitted_obs_config):
        """Test that C_obs from fitted constants bounds every empirical ratio."""
        out = temp_dir / "out"
        assert _run("verify-obs", write_config(fitted_obs_config), out, "--no-db") == 0
        summary = json.loads((out / "verify-obs.json").read_text())
        assert summary["observability"]["acceptable"] is True
        assert summary["observability"]["ln_margin"] >= 0.0
        assert (out / "fit.csv").exists()
        with open(out / "ratios.csv") as handle:
            assert len(list(csv.reader(handle))) == 65

    @pytest.mark.slow
    def test_control_within_certified_cost(self, temp_dir, write_config, fitted_obs_config):
        """Test that the HUM control converges and respects C_obs ||x0||."""
        params = {
            key: fitted_obs_config["params"][key]
            for key in ("grid", "symbol", "mask", "T", "fit_lambdas", "fit_samples")
        }
        params.update({"x0": {"kind": "gaussian_bump", "s": 0.25}, "n_t": 64, "cg_tol": 1e-8,
                       "cg_maxiter": 200})
        out = temp_dir / "out"
        assert _run("control", write_config({"command": "control", "params": params}), out, "--no-db") == 0
        control = json.loads((out / "control.json").read_text())["control"]
        assert control["converged"] is True
        assert control["within_bound"] is True
        assert control["relative_residual"] <= 1e-6
