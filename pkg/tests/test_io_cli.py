import json
import os

import numpy as np
import pytest

from aleflow.errors import ConfigParseError, ConfigValidationError
from aleflow.io_cli import (RunManifest, TimeseriesWriter, load_config, main,
                            read_snapshot, read_timeseries, run_from_config,
                            save_config, state_from_snapshot, write_snapshot,
                            write_timeseries)
from aleflow.timestepper import SolverConfig, TimeStepper


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = SolverConfig(n_r=10, n_theta=40, dt=1e-3, t_end=4e-3,
                       theta=1e-6, output_dir=str(out), snapshot_every=2,
                       seed_case="mode_k_perturbation",
                       perturbation_amplitude=0.01, perturbation_mode=2)
    manifest, code = run_from_config(cfg)
    return out, cfg, manifest, code


class TestConfig:
    def test_empty_file_is_defaults(self, tmp_path):
        path = tmp_path / "empty.cfg"
        path.write_text("")
        cfg = load_config(str(path))
        ref = SolverConfig().normalize()
        assert cfg.n_r == ref.n_r and cfg.theta == ref.theta
        assert cfg.epsilon == pytest.approx(ref.epsilon)

    def test_negative_theta_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("theta = -1\n")
        with pytest.raises(ConfigValidationError):
            load_config(str(path))

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "unknown.cfg"
        path.write_text("swirl = 3\n")
        with pytest.raises(ConfigParseError) as err:
            load_config(str(path))
        assert err.value.key == "swirl"
        assert err.value.line_no == 1

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "malformed.cfg"
        path.write_text("n_r 12\n")
        with pytest.raises(ConfigParseError):
            load_config(str(path))

    def test_duplicate_key(self, tmp_path):
        path = tmp_path / "dup.cfg"
        path.write_text("n_r = 12\nn_r = 14\n")
        with pytest.raises(ConfigParseError):
            load_config(str(path))

    def test_comments_and_values(self, tmp_path):
        path = tmp_path / "ok.cfg"
        path.write_text("# comment\nn_r = 12  # inline\ndt = 5e-4\n"
                        "seed_case = mode_k_perturbation\n")
        cfg = load_config(str(path))
        assert cfg.n_r == 12 and cfg.dt == 5e-4
        assert cfg.seed_case == "mode_k_perturbation"

    def test_round_trip(self, tmp_path):
        cfg = SolverConfig(n_r=14, dt=3.7e-4, relax=0.55).normalize()
        path = save_config(cfg, str(tmp_path / "rt.cfg"))
        back = load_config(path)
        for field in ("n_r", "n_theta", "dt", "t_end", "epsilon", "theta",
                      "sigma", "varsigma", "fp_tol", "relax", "seed_case"):
            assert getattr(back, field) == getattr(cfg, field)


class TestSnapshots:
    def test_files_and_roundtrip(self, tmp_path):
        cfg = SolverConfig(n_r=10, n_theta=40, t_end=1e-3)
        stepper = TimeStepper(cfg)
        h0, w0 = stepper.seed_fields()
        state = stepper.initial_state(h0, w0)
        path = write_snapshot(state, str(tmp_path), index=3)
        files = sorted(os.listdir(tmp_path))
        assert len(files) == 3  # two CSVs and one JSON header
        data = read_snapshot(path)
        assert data["t"] == state.t
        assert np.max(np.abs(data["h"] - state.h)) == 0.0
        assert np.max(np.abs(data["w"] - state.w)) <= 1e-15
        assert np.max(np.abs(data["q"] - state.q)) <= 1e-15

    def test_zero_state_columns(self, tmp_path):
        cfg = SolverConfig(n_r=10, n_theta=40, t_end=1e-3)
        stepper = TimeStepper(cfg)
        state = stepper.initial_state(np.zeros(40), np.zeros((2, 10, 40)))
        path = write_snapshot(state, str(tmp_path))
        data = read_snapshot(path)
        assert np.all(data["h"] == 0.0)

    def test_byte_stable(self, tmp_path):
        cfg = SolverConfig(n_r=10, n_theta=40, t_end=1e-3)
        stepper = TimeStepper(cfg)
        h0 = 0.01 * np.cos(2 * stepper.curve.s)
        state = stepper.initial_state(h0, np.zeros((2, 10, 40)))
        p1 = write_snapshot(state, str(tmp_path / "a"))
        p2 = write_snapshot(state, str(tmp_path / "b"))
        for suffix in (".interface.csv", ".fields.csv"):
            f1 = p1.replace(".json", suffix)
            f2 = p2.replace(".json", suffix)
            assert open(f1, "rb").read() == open(f2, "rb").read()

    def test_restart_from_snapshot_matches(self, tmp_path):
        base = dict(n_r=10, n_theta=40, dt=1e-3, theta=1e-6,
                    seed_case="mode_k_perturbation",
                    perturbation_amplitude=0.01, perturbation_mode=2)
        stepper_a = TimeStepper(SolverConfig(t_end=4e-3, **base))
        full = stepper_a.run()
        stepper_b = TimeStepper(SolverConfig(t_end=2e-3, **base))
        half = stepper_b.run()
        snap = write_snapshot(half.final, str(tmp_path))
        resumed_state = state_from_snapshot(snap, stepper_b)
        stepper_c = TimeStepper(SolverConfig(t_end=4e-3, **base))
        resumed = stepper_c.run(resume_from=resumed_state)
        assert np.max(np.abs(resumed.final.h - full.final.h)) <= 1e-12
        assert np.max(np.abs(resumed.final.w - full.final.w)) <= 1e-12


class TestTimeseries:
    def test_header_schema(self, tmp_path):
        path = str(tmp_path / "ts.csv")
        write_timeseries([], path)
        header = open(path).readline().strip()
        assert header == ("t,kinetic,surface_energy,total_energy,area,"
                          "length,div_norm,h_H2,v_H1,fp_iters")

    def test_zero_step_run(self, tmp_path):
        path = str(tmp_path / "ts.csv")
        write_timeseries([], path)
        assert len(open(path).readlines()) == 1

    def test_rows_monotone_t(self, tiny_run):
        out, cfg, manifest, code = tiny_run
        data = read_timeseries(os.path.join(str(out), "timeseries.csv"))
        assert np.all(np.diff(data["t"]) > 0)


class TestRunManifest:
    def test_run_writes_everything(self, tiny_run):
        out, cfg, manifest, code = tiny_run
        assert code == 0
        assert manifest.status == "completed"
        loaded = RunManifest.load(str(out))
        loaded.validate_files(str(out))
        assert loaded.snapshots  # at least initial + final
        assert loaded.config["n_r"] == 10

    def test_failed_run_still_writes_manifest(self, tmp_path):
        out = tmp_path / "fail"
        cfg = SolverConfig(n_r=10, n_theta=40, dt=1e-3, t_end=3e-3,
                           theta=1e-6, output_dir=str(out),
                           seed_case="mode_k_perturbation",
                           perturbation_amplitude=0.2,
                           perturbation_mode=2, varsigma=0.05)
        manifest, code = run_from_config(cfg)
        assert code == 3
        loaded = RunManifest.load(str(out))
        assert loaded.status == "smallness_violation"


class TestCli:
    def test_check(self, tmp_path, capsys):
        path = tmp_path / "c.cfg"
        path.write_text("n_r = 10\nn_theta = 40\nt_end = 2e-3\n")
        assert main(["check", str(path)]) == 0
        out = capsys.readouterr().out
        assert "velocity unknowns = 800" in out

    def test_config_error_exit_code(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("theta = -3\n")
        assert main(["run", str(path)]) == 2

    def test_run_exit_zero(self, tmp_path):
        out_dir = tmp_path / "out"
        path = tmp_path / "c.cfg"
        path.write_text(
            "n_r = 10\nn_theta = 40\ndt = 1e-3\nt_end = 2e-3\n"
            f"output_dir = {out_dir}\n")
        assert main(["run", str(path)]) == 0
        assert (out_dir / "manifest.json").exists()

    def test_custom_csv_seed(self, tmp_path):
        out_dir = tmp_path / "out"
        cfg_path = tmp_path / "c.cfg"
        cfg_path.write_text(
            "n_r = 10\nn_theta = 40\ndt = 1e-3\nt_end = 2e-3\n"
            "seed_case = custom_csv\n"
            f"output_dir = {out_dir}\n")
        s = np.arange(40) * 2 * np.pi / 40
        with open(tmp_path / "h0.csv", "w") as fh:
            fh.write("s,h\n")
            for sj, hj in zip(s, 0.01 * np.cos(2 * s)):
                fh.write(f"{sj:.17g},{hj:.17g}\n")
        assert main(["run", str(cfg_path)]) == 0
        manifest = RunManifest.load(str(out_dir))
        assert manifest.status == "completed"
