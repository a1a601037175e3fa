import subprocess
import sys

import pytest


def make_run(tmp_dir, seed_case, steps=10, amplitude=0.02):
    """Produce a run directory through the solver CLI (external interface)."""
    out_dir = tmp_dir / f"run_{seed_case}"
    cfg = tmp_dir / f"{seed_case}.cfg"
    cfg.write_text(
        "n_r = 12\nn_theta = 48\ndt = 1e-3\n"
        f"t_end = {steps * 1e-3}\nsnapshot_every = 2\n"
        f"seed_case = {seed_case}\n"
        f"perturbation_amplitude = {amplitude}\nperturbation_mode = 2\n"
        f"output_dir = {out_dir}\n")
    proc = subprocess.run(
        [sys.executable, "-m", "aleflow.io_cli", "run", str(cfg)],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return out_dir


@pytest.fixture(scope="session")
def equilibrium_run(tmp_path_factory):
    return make_run(tmp_path_factory.mktemp("eq"), "equilibrium")


@pytest.fixture(scope="session")
def perturbed_run(tmp_path_factory):
    return make_run(tmp_path_factory.mktemp("pert"), "mode_k_perturbation",
                    steps=16)
