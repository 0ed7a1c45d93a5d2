"""Unstructured P1 triangulation of a disk."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay


class MeshError(RuntimeError):
    pass


@dataclass
class TriangleMesh:
    """Triangulated disk with boundary markers.

    ``boundary_nodes`` runs counter-clockwise around the circle and
    ``boundary_edges`` joins consecutive entries (closing the loop).
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_nodes: np.ndarray
    boundary_edges: np.ndarray = field(default=None)
    radius: float = 1.0

    def __post_init__(self):
        self.nodes = np.ascontiguousarray(self.nodes, dtype=float)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        self.boundary_nodes = np.asarray(self.boundary_nodes, dtype=np.int64)
        if self.boundary_edges is None:
            b = self.boundary_nodes
            self.boundary_edges = np.column_stack([b, np.roll(b, -1)])
        self._geom = None

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return self.geometry()[0]

    @property
    def grads(self) -> np.ndarray:
        """Gradients of the three barycentric basis functions, shape (T, 3, 2)."""
        return self.geometry()[1]

    def geometry(self):
        if self._geom is None:
            p = self.nodes[self.triangles]
            area = self.signed_areas()
            # grad(lambda_i) = rot90(edge opposite i) / (2 area)
            g = np.empty((self.n_triangles, 3, 2))
            for i in range(3):
                a = p[:, (i + 1) % 3]
                b = p[:, (i + 2) % 3]
                g[:, i, 0] = (a[:, 1] - b[:, 1]) / (2 * area)
                g[:, i, 1] = (b[:, 0] - a[:, 0]) / (2 * area)
            self._geom = (area, g)
        return self._geom

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique undirected edges and how many triangles use each."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq, counts

    def min_angle(self) -> float:
        """Smallest interior angle over all triangles, in degrees."""
        p = self.nodes[self.triangles]
        angles = []
        for i in range(3):
            u = p[:, (i + 1) % 3] - p[:, i]
            v = p[:, (i + 2) % 3] - p[:, i]
            cos = np.einsum("ij,ij->i", u, v) / (
                np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
            )
            angles.append(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))
        return float(np.min(angles))

    def boundary_lengths(self) -> np.ndarray:
        e = self.boundary_edges
        return np.linalg.norm(self.nodes[e[:, 1]] - self.nodes[e[:, 0]], axis=1)

    def check(self, tol: float = 1e-9) -> None:
        """Raise MeshError if an invariant of the triangulation is violated."""
        if np.any(self.signed_areas() <= 0):
            raise MeshError("triangles with nonpositive signed area")
        r = np.linalg.norm(self.nodes[self.boundary_nodes], axis=1)
        if np.any(np.abs(r - self.radius) > tol):
            raise MeshError("boundary node off the circle")
        edges, counts = self.edges()
        if np.any(counts > 2):
            raise MeshError("edge shared by more than two triangles")
        bset = {tuple(sorted(e)) for e in self.boundary_edges.tolist()}
        open_edges = {tuple(e) for e in edges[counts == 1].tolist()}
        if open_edges != bset:
            raise MeshError("edges used once do not match the boundary loop")


def _ring_counts(n_rings: int, total: int) -> np.ndarray:
    """Nodes per ring k = 1..n_rings, proportional to k, summing to total - 1."""
    k = np.arange(1, n_rings + 1)
    raw = k * (total - 1) / k.sum()
    counts = np.maximum(np.floor(raw).astype(int), 3)
    deficit = (total - 1) - counts.sum()
    # hand out remaining nodes to the rings with the largest rounding loss
    order = np.argsort(-(raw - np.floor(raw)))
    i = 0
    while deficit > 0:
        counts[order[i % n_rings]] += 1
        deficit -= 1
        i += 1
    while deficit < 0:
        j = int(np.argmax(counts - 6 * k))
        if counts[j] <= 3:
            break
        counts[j] -= 1
        deficit += 1
    return counts


def _lloyd(nodes, tris, movable, iters):
    n = nodes.shape[0]
    for _ in range(iters):
        p = nodes[tris]
        area = np.abs(
            0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                   - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
        )
        cen = p.mean(axis=1)
        wsum = np.zeros(n)
        acc = np.zeros((n, 2))
        for i in range(3):
            np.add.at(wsum, tris[:, i], area)
            np.add.at(acc, tris[:, i], area[:, None] * cen)
        new = acc / np.maximum(wsum, 1e-300)[:, None]
        nodes = nodes.copy()
        nodes[movable] = new[movable]
    return nodes


def generate_disk_mesh(radius: float = 1.0, target_nodes: int = 2000,
                       smoothing_iters: int = 4) -> TriangleMesh:
    """Deterministic disk mesh with roughly ``target_nodes`` vertices.

    Nodes are seeded on concentric rings (ring ``k`` carrying a count
    proportional to ``k``), triangulated by Delaunay and relaxed with a few
    Lloyd sweeps over the interior nodes.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if target_nodes < 4:
        raise ValueError("target_nodes must be at least 4")

    n_rings = max(1, int(round((-1 + np.sqrt(1 + 4 * (target_nodes - 1) / np.pi)) / 2)))
    counts = _ring_counts(n_rings, target_nodes)
    pts = [np.zeros((1, 2))]
    for k, nk in enumerate(counts, start=1):
        r = radius * k / n_rings
        # stagger alternate rings to avoid aligned spokes
        th = 2 * np.pi * (np.arange(nk) + 0.5 * (k % 2)) / nk
        pts.append(np.column_stack([r * np.cos(th), r * np.sin(th)]))
    nodes = np.vstack(pts)
    n_b = int(counts[-1])
    boundary = np.arange(nodes.shape[0] - n_b, nodes.shape[0])
    # exact projection onto the circle
    ang = np.arctan2(nodes[boundary, 1], nodes[boundary, 0])
    nodes[boundary] = radius * np.column_stack([np.cos(ang), np.sin(ang)])

    movable = np.ones(nodes.shape[0], dtype=bool)
    movable[boundary] = False
    tris = Delaunay(nodes).simplices
    for _ in range(2):
        nodes = _lloyd(nodes, tris, movable, smoothing_iters)
        tris = Delaunay(nodes).simplices

    tris = _orient(nodes, tris)
    # boundary loop ordered by angle (counter-clockwise)
    ang = np.arctan2(nodes[boundary, 1], nodes[boundary, 0])
    boundary = boundary[np.argsort(ang)]
    mesh = TriangleMesh(nodes, tris, boundary, radius=radius)
    mesh.check()
    if abs(mesh.n_nodes - target_nodes) > 0.15 * target_nodes:
        raise MeshError(f"could not reach {target_nodes} nodes (got {mesh.n_nodes})")
    if mesh.n_nodes > 4 and mesh.min_angle() < 20.0:
        raise MeshError(f"minimum angle {mesh.min_angle():.1f} deg below 20 deg")
    return mesh


def _orient(nodes, tris):
    p = nodes[tris]
    area = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                  - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    tris = tris.copy()
    flip = area < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    # drop degenerate hull slivers (cocircular boundary points)
    keep = np.abs(area) > 1e-14 * np.abs(area).max()
    return tris[keep]
