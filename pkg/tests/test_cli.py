import numpy as np
import pytest

from qpat.cli import COMMANDS, main, run_pipeline
from qpat.config import parse_config
from qpat.io import read_field, read_manifest, read_report

TRANSPORT = """regime = transport
nx = 10
ny = 10
n_dirs = 8
sigma_b = bump 1.0 0.5 0.5 0.5 0.2
c0 = 0.5
C0 = 2.0
stability_pairs = 2
"""
DIFFUSION = """regime = diffusion
nx = 12
ny = 12
sigma_b = bump 1.0 0.5 0.5 0.5 0.2
gamma = bump 1.0 0.3 0.4 0.6 0.2
c0 = 0.5
C0 = 2.0
stability_pairs = 2
"""


def run(tmp_path, text, cmd, *overrides, name="out"):
    cfg = parse_config(text, overrides=overrides)
    out = tmp_path / name
    return run_pipeline(cmd, cfg, out), out


@pytest.mark.parametrize("cmd", [c for c in COMMANDS if c != "forward-diffusion"])
def test_transport_commands(tmp_path, cmd):
    status, out = run(tmp_path, TRANSPORT, cmd)
    expected = 2 if cmd == "certify" else 0
    assert status == expected
    manifest = read_manifest(out)
    assert "status.txt" in manifest and len(manifest) >= 2


@pytest.mark.parametrize("cmd", [c for c in COMMANDS if c != "forward-transport"])
def test_diffusion_commands(tmp_path, cmd):
    status, out = run(tmp_path, DIFFUSION, cmd)
    assert status == 0
    assert read_report(out / "status.txt")["exit"] == "0"


def test_regime_mismatch(tmp_path):
    status, out = run(tmp_path, DIFFUSION, "forward-transport")
    assert status == 2
    assert "regime" in read_report(out / "status.txt")["message"]


def test_linear_reference(tmp_path):
    status, out = run(tmp_path, TRANSPORT, "forward-transport", "sigma_b = 0")
    assert status == 0
    assert np.array_equal(read_field(out / "u.qpf"), read_field(out / "u_linear.qpf"))


def test_recon_sigma_b_report(tmp_path):
    status, out = run(tmp_path, TRANSPORT, "recon-sigma-b")
    rep = read_report(out / "recon_sigma_b.txt")
    assert status == 0 and float(rep["relative_l2_error"]) <= 1e-8
    assert rep["in_A2"] == "false"


def test_require_admissible(tmp_path):
    status, out = run(tmp_path, TRANSPORT, "recon-sigma-b", "require_admissible = true")
    assert status == 2
    assert "A2: Pi >= 1" in read_report(out / "status.txt")["message"]


def test_high_contrast_certify(tmp_path):
    text = TRANSPORT.replace("c0 = 0.5\nC0 = 2.0", "c0 = 0.51\nC0 = 51.0")
    status, out = run(tmp_path, text, "certify", "sigma_a = bump 1.0 50.0 0.5 0.5 0.2")
    assert status == 2
    assert "A2" in read_report(out / "status.txt")["message"]


def test_divergence_exit(tmp_path):
    status, out = run(tmp_path, TRANSPORT, "recon-sigma-a", "recon_max_iter = 2",
                      "sigma_a = bump 1.0 0.4 0.5 0.5 0.2")
    assert status == 3
    assert read_report(out / "status.txt")["message"].startswith("divergence")


def test_large_amplitude(tmp_path):
    status, _ = run(tmp_path, TRANSPORT, "forward-transport", "amplitude = 100")
    assert status == 2


def test_bad_coefficients(tmp_path):
    status, _ = run(tmp_path, TRANSPORT, "linearize", "sigma_a = 5")
    assert status == 2


def test_determinism(tmp_path):
    _, a = run(tmp_path, TRANSPORT, "make-data", "noise = 0.01", "seed = 7", name="a")
    _, b = run(tmp_path, TRANSPORT, "make-data", "noise = 0.01", "seed = 7", name="b")
    _, c = run(tmp_path, TRANSPORT, "make-data", "noise = 0.01", "seed = 8", name="c")
    assert read_manifest(a) == read_manifest(b)
    assert read_manifest(a)["h1.qpf"] != read_manifest(c)["h1.qpf"]


def test_main(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(DIFFUSION)
    assert main(["--config", str(cfg), "--cmd", "linearize", "--out",
                 str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "u1.qpf").is_file()
    assert main(["--config", str(cfg), "--cmd", "linearize"]) == 0
    assert (tmp_path / "out" / "manifest.txt").is_file()


def test_main_config_error(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("nx = 3\n")
    assert main(["--config", str(cfg), "--cmd", "linearize"]) == 2
    assert "missing required keys" in capsys.readouterr().err


def test_main_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(DIFFUSION)
    assert main(["--config", str(cfg), "--cmd", "make-data", "--out", str(tmp_path / "o"),
                 "--override", "nx=8", "--override", "ny=6"]) == 0
    assert read_field(tmp_path / "o" / "h1.qpf").shape == (8, 6)
