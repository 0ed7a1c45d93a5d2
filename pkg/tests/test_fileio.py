import numpy as np
import pytest

from aetlab import fileio
from aetlab.electrostatics import PowerSignal
from aetlab.forward import ForwardMatrix
from aetlab.wave import CartesianGrid, SoundSpeedField, WaveRecord


def test_mesh_round_trip(disk500, tmp_path):
    p = tmp_path / "mesh.txt"
    fileio.write_mesh(p, disk500)
    m = fileio.read_mesh(p)
    assert np.array_equal(m.nodes, disk500.nodes)
    assert np.array_equal(m.triangles, disk500.triangles)
    assert np.array_equal(m.boundary_nodes, disk500.boundary_nodes)


def test_mesh_format_errors(disk500, tmp_path):
    p = tmp_path / "mesh.txt"
    p.write_text("vertices 3\n")
    with pytest.raises(fileio.FormatError):
        fileio.read_mesh(p)
    fileio.write_mesh(p, disk500)
    p.write_text("\n".join(p.read_text().splitlines()[:-5]))
    with pytest.raises(fileio.FormatError):
        fileio.read_mesh(p)


def test_field_round_trip(rng, tmp_path):
    v = rng.standard_normal(17) * 1e-7
    fileio.write_field(tmp_path / "f", v)
    assert np.array_equal(fileio.read_field(tmp_path / "f", 17), v)
    with pytest.raises(fileio.FormatError):
        fileio.read_field(tmp_path / "f", 18)


def test_wave_round_trip(rng, tmp_path):
    w = WaveRecord(rng.standard_normal((5, 9)), 0.0125, 3)
    fileio.write_wave(tmp_path / "w.bin", w)
    r = fileio.read_wave(tmp_path / "w.bin")
    assert np.array_equal(r.values, w.values) and r.dt == w.dt and r.source_id == 3


def test_forward_round_trip(rng, tmp_path):
    K = ForwardMatrix(rng.standard_normal((6, 4)), 1e-3, 2, 3, 0.1, "assumed")
    fileio.write_forward(tmp_path / "K.bin", K)
    head = (tmp_path / "K.bin").read_bytes().split(b"\n", 1)[0]
    assert head.startswith(b"K rows=6 cols=4 eta=0.001")
    R = fileio.read_forward(tmp_path / "K.bin")
    assert np.array_equal(R.matrix, K.matrix)
    assert (R.eta, R.n_sources, R.n_times, R.dt, R.provenance) == (1e-3, 2, 3, 0.1, "assumed")


def test_binary_errors(tmp_path):
    p = tmp_path / "x.bin"
    fileio.write_matrix(p, np.ones((2, 3)), tag="corr")
    with pytest.raises(fileio.FormatError):
        fileio.read_matrix(p, "K")
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(fileio.FormatError):
        fileio.read_matrix(p, "corr")


def test_speed_round_trip(rng, tmp_path):
    g = CartesianGrid(1.6, 1.1, 8)
    c = SoundSpeedField(g, 1 + 0.1 * rng.random((8, 8)))
    fileio.write_speed(tmp_path / "c.bin", c)
    assert (tmp_path / "c.bin").read_bytes().startswith(b"c N=8 L=1.6")
    r = fileio.read_speed(tmp_path / "c.bin")
    assert r.grid == g and np.array_equal(r.values, c.values)


def test_signal_round_trip(rng, tmp_path):
    sig = PowerSignal(rng.standard_normal(6), 0.25, "x2", 4)
    fileio.write_signal(tmp_path / "s.csv", sig)
    r = fileio.read_signal(tmp_path / "s.csv")
    assert np.array_equal(r.values, sig.values)
    assert (r.dt, r.current_id, r.source_id) == (0.25, "x2", 4)
    (tmp_path / "bad.csv").write_text("# x\nfoo,bar\n")
    with pytest.raises(fileio.FormatError):
        fileio.read_signal(tmp_path / "bad.csv")


def test_pgm_orientation(tmp_path):
    img = np.zeros((3, 2))
    img[2, 1] = 1.0  # largest x, largest y: top right pixel
    fileio.write_pgm(tmp_path / "a.pgm", img)
    data = (tmp_path / "a.pgm").read_bytes()
    assert data.startswith(b"P5\n3 2\n255\n")
    px = np.frombuffer(data[len(b"P5\n3 2\n255\n"):], np.uint8).reshape(2, 3)
    assert px[0, 2] == 255 and px.sum() == 255
