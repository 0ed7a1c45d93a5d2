"""Image-level summaries of nodal fields on a mesh."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from . import fem
from .mesh import TriangleMesh


def relative_error(M, approx, ref) -> float:
    """``||approx - ref||_M / ||ref||_M``."""
    d = np.asarray(approx) - np.asarray(ref)
    return float(np.sqrt(d @ (M @ d) / (ref @ (M @ ref))))


def region_mean(mesh: TriangleMesh, values, mask) -> float:
    """Lumped-mass weighted mean over the nodes in ``mask``."""
    w = fem.lumped_mass(mesh)[mask]
    return float(w @ np.asarray(values)[mask] / w.sum())


def centroid(mesh: TriangleMesh, mask) -> np.ndarray:
    w = fem.lumped_mass(mesh)[mask]
    return w @ mesh.nodes[mask] / w.sum()


def largest_superlevel_component(mesh: TriangleMesh, values, level: float) -> np.ndarray:
    """Node mask of the heaviest connected part of ``{values > level}``."""
    on = np.asarray(values) > level
    if not on.any():
        return on
    e, _ = mesh.edges()
    e = e[on[e[:, 0]] & on[e[:, 1]]]
    n = mesh.n_nodes
    A = sp.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    _, label = connected_components(A, directed=False)
    w = fem.lumped_mass(mesh)
    weight = np.bincount(label[on], weights=w[on], minlength=label.max() + 1)
    return on & (label == int(np.argmax(weight)))


def jaccard(mesh: TriangleMesh, a, b) -> float:
    """Area-weighted intersection over union of two node masks."""
    w = fem.lumped_mass(mesh)
    union = w[a | b].sum()
    return float(w[a & b].sum() / union) if union > 0 else 0.0


def annulus_mask(mesh: TriangleMesh, r_lo: float, r_hi: float = np.inf) -> np.ndarray:
    r = np.hypot(*mesh.nodes.T)
    return (r >= r_lo) & (r < r_hi)


def rasterize(mesh: TriangleMesh, values, n: int = 128, fill: float = np.nan) -> np.ndarray:
    """Sample a P1 field on an ``n x n`` grid over the bounding square (``[ix, iy]``)."""
    from scipy.interpolate import LinearNDInterpolator
    R = mesh.radius
    x = np.linspace(-R, R, n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    return LinearNDInterpolator(mesh.nodes, values, fill_value=fill)(X, Y)
