"""Generate real experiment outputs once per session via the statseek CLI."""

import json
import shutil
import subprocess

import pytest

RUN_CONFIGS = (
    "quadratic10",
    "internet",
    "infinite_eq",
    "no_eq",
    "qp_gnep_template",
    "lqr_random",
)
SWEEP_REPS = {"hyper_quadratic10": "3", "hyper_lqr_random": "1"}


def _cli(*argv):
    exe = shutil.which("statseek")
    if exe is None:
        pytest.skip("statseek CLI is not installed")
    subprocess.run([exe, *argv], check=True, capture_output=True, text=True)


@pytest.fixture(scope="session")
def outputs(tmp_path_factory):
    """Mapping of bundled experiment name to its CLI output directory."""
    root = tmp_path_factory.mktemp("experiment_outputs")
    dirs = {}
    for name in RUN_CONFIGS:
        out = root / name
        _cli("run", "--config", name, "--out", str(out))
        dirs[name] = out
    for name, reps in SWEEP_REPS.items():
        out = root / name
        _cli("sweep", "--config", name, "--reps", reps, "--out", str(out))
        dirs[name] = out
    # one-cell sweep of a shortened market game, for the single-curve case
    small = {
        "name": "single_cell",
        "game": {"game": "quadratic10"},
        "K": 12,
        "K_in": 5,
        "alpha": 1e9,
        "beta": 1.0,
        "seed": [0],
        "m_lower": [30.0],
        "m_upper": [70.0],
        "sweep": {"beta": [1.0], "K_in": [5]},
        "reps": 1,
    }
    cfg_path = root / "single_cell.json"
    cfg_path.write_text(json.dumps(small))
    out = root / "single_cell"
    _cli("sweep", "--config", str(cfg_path), "--out", str(out))
    dirs["single_cell"] = out
    return dirs
