import subprocess
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]


def small_config(tmp_path, regime):
    text = (ROOT / "configs" / f"{regime}.cfg").read_text()
    text = text.replace("nx = 32", "nx = 10").replace("ny = 32", "ny = 10")
    text = text.replace("nx = 48", "nx = 12").replace("ny = 48", "ny = 12")
    text = text.replace("n_dirs = 16", "n_dirs = 8")
    path = tmp_path / f"{regime}.cfg"
    path.write_text(text)
    return path


def run(*args):
    return subprocess.run([sys.executable, *map(str, args)], capture_output=True, text=True,
                          check=True)


def test_convergence(tmp_path):
    run(ROOT / "scripts" / "convergence.py", "--sizes", "8", "16", "--n-dirs", "8",
        "--out", tmp_path)
    assert (tmp_path / "convergence.csv").read_text().count("\n") == 9


@pytest.mark.parametrize("regime", ["transport", "diffusion"])
def test_round_trip_and_uq(tmp_path, regime):
    cfg = small_config(tmp_path, regime)
    out = run(ROOT / "scripts" / "round_trip.py", "--config", cfg, "--noise", "0",
              "--out", tmp_path).stdout
    assert float(out.split()[1]) < 1e-8
    out = run(ROOT / "scripts" / "uq_sweep.py", "--config", cfg, "--out", tmp_path).stdout
    assert "zero_bitwise = True" in out


@pytest.mark.parametrize("regime", ["transport", "diffusion"])
def test_shipped_configs_parse(regime):
    from qpat.config import load_config
    assert load_config(ROOT / "configs" / f"{regime}.cfg").regime == regime
