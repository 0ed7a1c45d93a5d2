"""Readers and writers for the on-disk artifact formats.

Binary files start with one ASCII header line of ``key=value`` tokens and
continue with row-major little-endian float64 data. Text files use
``%.17g`` so values round-trip exactly.
"""
from __future__ import annotations

import csv
import os
from pathlib import Path

import numpy as np

from .electrostatics import PowerSignal
from .forward import ForwardMatrix
from .mesh import TriangleMesh
from .wave import CartesianGrid, SoundSpeedField, WaveRecord

_F64 = np.dtype("<f8")


class FormatError(ValueError):
    """A file does not match the expected artifact format."""


def _fmt(x) -> str:
    return "%.17g" % x


# ---------------------------------------------------------------- meshes


def write_mesh(path, mesh: TriangleMesh) -> None:
    with open(path, "w") as fh:
        fh.write(f"nodes {mesh.n_nodes} triangles {mesh.n_triangles} "
                 f"boundary {len(mesh.boundary_nodes)}\n")
        for x, y in mesh.nodes:
            fh.write(f"{_fmt(x)} {_fmt(y)}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"{a} {b} {c}\n")
        for i in mesh.boundary_nodes:
            fh.write(f"{i}\n")


def read_mesh(path, radius: float = 1.0) -> TriangleMesh:
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) != 6 or head[0::2] != ["nodes", "triangles", "boundary"]:
            raise FormatError(f"{path}: bad mesh header")
        n, t, b = (int(v) for v in head[1::2])
        body = fh.read().split()
    need = 2 * n + 3 * t + b
    if len(body) != need:
        raise FormatError(f"{path}: expected {need} values, found {len(body)}")
    nodes = np.array(body[:2 * n], dtype=float).reshape(n, 2)
    tris = np.array(body[2 * n:2 * n + 3 * t], dtype=np.int64).reshape(t, 3)
    bnd = np.array(body[2 * n + 3 * t:], dtype=np.int64)
    return TriangleMesh(nodes, tris, bnd, radius=radius)


def write_field(path, values) -> None:
    """NodalField: one value per line, mesh node order."""
    values = np.asarray(values, dtype=float).ravel()
    with open(path, "w") as fh:
        fh.writelines(_fmt(v) + "\n" for v in values)


def read_field(path, n_nodes: int | None = None) -> np.ndarray:
    values = np.loadtxt(path, dtype=float, ndmin=1)
    if n_nodes is not None and values.size != n_nodes:
        raise FormatError(f"{path}: {values.size} values for a {n_nodes}-node mesh")
    return values


# ---------------------------------------------------------------- binary


def _write_binary(path, header: str, array) -> None:
    with open(path, "wb") as fh:
        fh.write((header + "\n").encode("ascii"))
        fh.write(np.ascontiguousarray(array, dtype=_F64).tobytes())


def _read_binary(path, tag: str):
    with open(path, "rb") as fh:
        line = fh.readline().decode("ascii", errors="replace").split()
        data = fh.read()
    if not line or line[0] != tag:
        raise FormatError(f"{path}: expected a '{tag}' header")
    fields = {}
    for tok in line[1:]:
        key, sep, val = tok.partition("=")
        if not sep:
            raise FormatError(f"{path}: malformed header token {tok!r}")
        fields[key] = val
    return fields, np.frombuffer(data, dtype=_F64)


def _reshape(path, arr, rows, cols):
    if arr.size != rows * cols:
        raise FormatError(f"{path}: header says {rows}x{cols}, data has {arr.size} values")
    return arr.reshape(rows, cols).copy()


def write_wave(path, rec: WaveRecord) -> None:
    m, n = rec.values.shape
    _write_binary(path, f"wave m={m} n={n} dt={_fmt(rec.dt)} src={rec.source_id}", rec.values)


def read_wave(path) -> WaveRecord:
    f, arr = _read_binary(path, "wave")
    m, n = int(f["m"]), int(f["n"])
    return WaveRecord(_reshape(path, arr, m, n), float(f["dt"]), int(f["src"]))


def write_matrix(path, matrix, eta: float = 0.0, tag: str = "K", **extra) -> None:
    """Dense matrix with a ``K rows= cols= eta=`` style header."""
    r, c = np.shape(matrix)
    tail = "".join(f" {k}={v}" for k, v in extra.items())
    _write_binary(path, f"{tag} rows={r} cols={c} eta={_fmt(eta)}{tail}", matrix)


def read_matrix(path, tag: str = "K"):
    f, arr = _read_binary(path, tag)
    return _reshape(path, arr, int(f["rows"]), int(f["cols"])), f


def write_forward(path, K: ForwardMatrix) -> None:
    write_matrix(path, K.matrix, K.eta, sources=K.n_sources, times=K.n_times,
                 dt=_fmt(K.dt), provenance=K.provenance.replace(" ", "_") or "-")


def read_forward(path) -> ForwardMatrix:
    A, f = read_matrix(path, "K")
    n_sources = int(f.get("sources", 1))
    n_times = int(f.get("times", A.shape[0]))
    if n_sources * n_times != A.shape[0]:
        raise FormatError(f"{path}: sources x times does not match the row count")
    prov = f.get("provenance", "")
    return ForwardMatrix(A, float(f["eta"]), n_sources, n_times,
                         float(f.get("dt", 0.0)), "" if prov == "-" else prov)


def write_speed(path, c: SoundSpeedField) -> None:
    g = c.grid
    _write_binary(path, f"c N={g.n} L={_fmt(g.half_width)} Li={_fmt(g.inner_half_width)}",
                  c.values)


def read_speed(path, label="true") -> SoundSpeedField:
    f, arr = _read_binary(path, "c")
    n = int(f["N"])
    L = float(f["L"])
    grid = CartesianGrid(L, float(f.get("Li", 1.1)), n)
    return SoundSpeedField(grid, _reshape(path, arr, n, n), label=label)


# ---------------------------------------------------------------- text tables


def write_signal(path, sig: PowerSignal) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# current={sig.current_id} source={sig.source_id}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "I"])
        for t, v in zip(sig.times, sig.values):
            w.writerow([_fmt(t), _fmt(v)])


def read_signal(path) -> PowerSignal:
    with open(path) as fh:
        first = fh.readline()
        meta = dict(tok.split("=", 1) for tok in first.lstrip("# ").split() if "=" in tok)
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["t", "I"]:
        raise FormatError(f"{path}: missing 't,I' header")
    data = np.array(rows[1:], dtype=float).reshape(-1, 2)
    dt = float(data[1, 0] - data[0, 0]) if len(data) > 1 else 0.0
    return PowerSignal(data[:, 1], dt, meta.get("current", "f"), int(meta.get("source", 0)))


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


def write_pgm(path, image, vmin=None, vmax=None) -> None:
    """8-bit grayscale PGM; ``image[ix, iy]`` with ``y`` increasing upward."""
    img = np.asarray(image, dtype=float)
    lo = img.min() if vmin is None else vmin
    hi = img.max() if vmax is None else vmax
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    px = np.clip(np.round((img - lo) * scale), 0, 255).astype(np.uint8).T[::-1]
    with open(path, "wb") as fh:
        fh.write(f"P5\n{px.shape[1]} {px.shape[0]}\n255\n".encode())
        fh.write(px.tobytes())


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
