import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qpat.config import (
    ExperimentConfig,
    build_coefficients,
    build_source,
    load_config,
    parse_config,
    to_text,
)
from qpat.domain import AngularQuadrature, BoundarySource, SpatialGrid
from qpat.errors import ConfigError, ShapeError
from qpat.io import (
    read_boundary_source,
    read_field,
    read_manifest,
    read_report,
    write_boundary_source,
    write_csv,
    write_field,
    write_manifest,
    write_report,
)

MINIMAL = "regime = transport\nnx = 8\nny = 8\n"


class TestParse:
    def test_empty_lists_required(self):
        with pytest.raises(ConfigError, match="regime, nx, ny"):
            parse_config("")

    def test_defaults(self):
        cfg = parse_config(MINIMAL)
        assert cfg.tol == 1e-10 and cfg.max_iter == 200 and cfg.recon_max_iter == 500
        assert cfg.n_dirs == 16 and cfg.seed == 0

    def test_zero_cells(self):
        with pytest.raises(ConfigError, match="grid"):
            parse_config("regime = transport\nnx = 0\nny = 8\n")

    def test_unknown_key_line(self):
        with pytest.raises(ConfigError, match="line 4: unknown key 'colour'"):
            parse_config(MINIMAL + "colour = red\n")

    def test_syntax_line(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config("regime = transport\nnx 8\nny = 8\n")

    def test_comments(self):
        cfg = parse_config("# header\n" + MINIMAL + "tol = 1e-8  # tighter\n")
        assert cfg.tol == 1e-8

    def test_semantic_errors_listed(self):
        with pytest.raises(ConfigError) as info:
            parse_config(MINIMAL + "kernel = foo\nsigma_a = file nowhere.qpf\nuq_p = 2\n")
        msg = str(info.value)
        assert "kernel" in msg and "sigma_a" in msg and "uq_p" in msg

    def test_overrides(self):
        cfg = parse_config(MINIMAL, overrides=["nx = 4", "noise=0.1"])
        assert cfg.nx == 4 and cfg.noise == 0.1


@given(
    st.sampled_from(["transport", "diffusion"]),
    st.integers(3, 64),
    st.integers(3, 64),
    st.floats(1e-14, 1e-2),
    st.booleans(),
    st.lists(st.floats(0.0, 0.5), min_size=1, max_size=4),
    st.floats(0.1, 10.0),
)
def test_round_trip(regime, nx, ny, tol, adm, etas, amp):
    cfg = ExperimentConfig(regime=regime, nx=nx, ny=ny, tol=tol, require_admissible=adm,
                           eta_list=tuple(etas), sigma_b=f"bump 1.0 {amp!r} 0.5 0.5 0.2")
    assert parse_config(to_text(cfg)) == cfg


def test_builders(tmp_path):
    g = SpatialGrid(6, 6)
    write_field(tmp_path / "sa.qpf", np.full(g.shape, 1.5))
    (tmp_path / "run.cfg").write_text(
        "regime = diffusion\nnx = 6\nny = 6\nsigma_a = file sa.qpf\n"
        "gamma = bump 1 0.5 0.5 0.5 0.2\nsource_value = 2\n")
    cfg = load_config(tmp_path / "run.cfg")
    c = build_coefficients(cfg)
    assert np.all(c.sigma_a == 1.5) and c.gamma.max() > 1.4
    assert np.all(build_source(cfg) == 2.0)


def test_transport_source_file(tmp_path):
    g, q = SpatialGrid(4, 4), AngularQuadrature(8)
    src = BoundarySource.constant(g, q, 0.3)
    write_boundary_source(tmp_path / "g.qpf", src)
    (tmp_path / "t.cfg").write_text(
        "regime = transport\nnx = 4\nny = 4\nn_dirs = 8\nsource = file\nsource_file = g.qpf\n")
    out = build_source(load_config(tmp_path / "t.cfg"))
    assert np.array_equal(out.values, src.values)


class TestFieldIO:
    @given(st.integers(1, 6), st.integers(1, 6), st.sampled_from([None, 1, 3]))
    def test_round_trip(self, tmp_path_factory, nx, ny, nv):
        shape = (nx, ny) if nv is None else (nx, ny, nv)
        a = np.random.default_rng(nx * 100 + ny).standard_normal(shape)
        p = tmp_path_factory.mktemp("f") / "a.qpf"
        write_field(p, a)
        assert np.array_equal(read_field(p), a)

    def test_header(self, tmp_path):
        write_field(tmp_path / "a.qpf", np.zeros((2, 3)))
        assert (tmp_path / "a.qpf").read_bytes().startswith(b"qpat-field v1 2 3\n")

    def test_truncated(self, tmp_path):
        write_field(tmp_path / "a.qpf", np.zeros((2, 3)))
        data = (tmp_path / "a.qpf").read_bytes()
        (tmp_path / "a.qpf").write_bytes(data[:-8])
        with pytest.raises(ValueError):
            read_field(tmp_path / "a.qpf")

    def test_bad_rank(self, tmp_path):
        with pytest.raises(ShapeError):
            write_field(tmp_path / "a.qpf", np.zeros(3))

    def test_boundary_source(self, tmp_path):
        g, q = SpatialGrid(3, 5), AngularQuadrature(8)
        src = BoundarySource.constant(g, q, 2.0)
        write_boundary_source(tmp_path / "g.qpf", src)
        assert np.array_equal(read_boundary_source(tmp_path / "g.qpf", g, q).values, src.values)


def test_csv(tmp_path):
    write_csv(tmp_path / "a.csv", np.arange(4.0).reshape(2, 2))
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "i,j,value" and lines[-1] == "1,1,3.0"


def test_report_and_manifest(tmp_path):
    write_report(tmp_path / "r.txt", {"a": 1.5, "b": True, "c": None}, "title")
    assert read_report(tmp_path / "r.txt") == {"a": "1.5", "b": "true", "c": "none"}
    (tmp_path / "sub").mkdir()
    (tmp_path / "sub" / "x.bin").write_bytes(b"x")
    write_manifest(tmp_path)
    m = read_manifest(tmp_path)
    assert sorted(m) == ["r.txt", "sub/x.bin"]
    assert m["sub/x.bin"] == "2d711642b726b04401627ca9fbac32f5c8530fb1903cc4db02258717921a4881"
