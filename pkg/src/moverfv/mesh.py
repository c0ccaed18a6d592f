"""Triangulated surface meshes, their topology, and per-step geometry.

Local edge convention: edge ``e`` of triangle ``j`` runs from local vertex
``e`` to local vertex ``(e+1) % 3``; the opposite vertex is ``(e+2) % 3``.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, GeometryError

# Icosahedron with unit-norm vertices and consistent outward winding.
_PHI = (1.0 + np.sqrt(5.0)) / 2.0
_ICO_VERTICES = np.array(
    [
        [-1.0, _PHI, 0.0], [1.0, _PHI, 0.0], [-1.0, -_PHI, 0.0], [1.0, -_PHI, 0.0],
        [0.0, -1.0, _PHI], [0.0, 1.0, _PHI], [0.0, -1.0, -_PHI], [0.0, 1.0, -_PHI],
        [_PHI, 0.0, -1.0], [_PHI, 0.0, 1.0], [-_PHI, 0.0, -1.0], [-_PHI, 0.0, 1.0],
    ]
) / np.sqrt(1.0 + _PHI * _PHI)
_ICO_TRIANGLES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [5, 4, 9], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ],
    dtype=np.int64,
)

# A cell thinner than this fraction of the mean area is treated as collapsed.
COLLAPSE_RATIO = 1e-14


def _freeze(a):
    a.flags.writeable = False
    return a


class ReferenceMesh:
    """Immutable triangulation of the initial surface.

    Holds vertex positions on the initial surface, triangle index triples,
    and the edge adjacency map: ``adj_tri[j, e]`` is the triangle sharing
    edge ``e`` of triangle ``j`` (-1 on defective meshes) and
    ``adj_edge[j, e]`` the matching local edge index in that neighbor.
    """

    def __init__(self, vertices0, triangles):
        self.vertices0 = _freeze(np.asarray(vertices0, dtype=float).copy())
        self.triangles = _freeze(np.asarray(triangles, dtype=np.int64).copy())
        if self.vertices0.ndim != 2 or self.vertices0.shape[1] != 3:
            raise ConfigurationError("vertices must have shape (n, 3)")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ConfigurationError("triangles must have shape (m, 3)")
        if self.triangles.size and self.triangles.max() >= len(self.vertices0):
            raise ConfigurationError("triangle index exceeds vertex count")
        self._build_topology()

    @property
    def n_vertices(self):
        return len(self.vertices0)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edge_tri)

    def _build_topology(self):
        tri = self.triangles
        m = len(tri)
        # (j, e) edge endpoints in traversal order; flat index k = 3*j + e
        heads = tri
        tails = np.roll(tri, -1, axis=1)
        lo = np.minimum(heads, tails).ravel()
        hi = np.maximum(heads, tails).ravel()
        order = np.lexsort((hi, lo))

        adj_tri = np.full((m, 3), -1, dtype=np.int64)
        adj_edge = np.full((m, 3), -1, dtype=np.int64)
        slo, shi = lo[order], hi[order]
        same = np.flatnonzero((slo[1:] == slo[:-1]) & (shi[1:] == shi[:-1]))
        # Pair consecutive occurrences of the same vertex pair. Groups of
        # size != 2 (boundary or non-manifold edges) stay at -1; triples
        # would pair greedily, which check_manifold reports anyway.
        k_a = order[same]
        k_b = order[same + 1]
        adj_tri[k_a // 3, k_a % 3] = k_b // 3
        adj_edge[k_a // 3, k_a % 3] = k_b % 3
        adj_tri[k_b // 3, k_b % 3] = k_a // 3
        adj_edge[k_b // 3, k_b % 3] = k_a % 3
        self.adj_tri = _freeze(adj_tri)
        self.adj_edge = _freeze(adj_edge)

        # Unique-edge table in canonical order: ascending (min vertex, max
        # vertex). Owner is the incident triangle with the smaller index;
        # the solver builds each edge flux once, on the owner side.
        if np.all(adj_tri >= 0):
            keep = order[np.flatnonzero(np.r_[True, (slo[1:] != slo[:-1]) | (shi[1:] != shi[:-1])])]
            j = keep // 3
            e = keep % 3
            other = adj_tri[j, e]
            swap = other < j
            owner = np.where(swap, other, j)
            owner_local = np.where(swap, adj_edge[j, e], e)
            nbr = np.where(swap, j, other)
            self.edge_tri = _freeze(np.stack([owner, nbr], axis=1))
            self.edge_local = _freeze(owner_local)
        else:
            self.edge_tri = _freeze(np.empty((0, 2), dtype=np.int64))
            self.edge_local = _freeze(np.empty(0, dtype=np.int64))

    def is_closed(self):
        return bool(np.all(self.adj_tri >= 0))

    def transformed(self, func):
        """New mesh with vertices mapped through ``func`` (same topology)."""
        return ReferenceMesh(func(self.vertices0), self.triangles)


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    message: str


def check_manifold(mesh):
    """Report whether the mesh is a closed, consistently oriented 2-manifold.

    Never raises: returns a ValidationReport carrying the first violation.
    """
    tri = mesh.triangles
    heads = tri
    tails = np.roll(tri, -1, axis=1)
    lo = np.minimum(heads, tails).ravel()
    hi = np.maximum(heads, tails).ravel()
    pairs = np.stack([lo, hi], axis=1)
    uniq, inverse, counts = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)
    if np.any(counts != 2):
        bad = int(np.argmax(counts != 2))
        a, b = uniq[bad]
        return ValidationReport(False, f"edge ({a}, {b}) has {int(counts[bad])} incident triangle(s), expected 2")
    # Opposite traversal across each shared edge: the two oriented copies
    # of a pair must be (a, b) and (b, a).
    order = np.argsort(inverse, kind="stable")
    h = heads.ravel()[order]
    first, second = h[0::2], h[1::2]
    flipped = np.flatnonzero(first == second)
    if flipped.size:
        a, b = uniq[inverse[order[2 * flipped[0]]]]
        return ValidationReport(False, f"edge ({a}, {b}) traversed twice in the same direction (inconsistent winding)")
    # Adjacency involution
    j = np.arange(len(tri))[:, None]
    e = np.arange(3)[None, :]
    at, ae = mesh.adj_tri, mesh.adj_edge
    if np.any(at < 0):
        return ValidationReport(False, "adjacency incomplete (open edge)")
    if not (np.all(at[at[j, e], ae[j, e]] == j) and np.all(ae[at[j, e], ae[j, e]] == e)):
        return ValidationReport(False, "edge adjacency is not an involution")
    return ValidationReport(True, "ok")


def build_icosphere(subdivision_level):
    """Closed oriented triangulation of the unit sphere, 20*4**level cells."""
    if not isinstance(subdivision_level, (int, np.integer)) or isinstance(subdivision_level, bool):
        raise ConfigurationError("subdivision level must be an integer")
    if not 0 <= subdivision_level <= 8:
        raise ConfigurationError(f"subdivision level {subdivision_level} outside [0, 8]")
    verts = _ICO_VERTICES.copy()
    faces = _ICO_TRIANGLES.copy()
    for _ in range(subdivision_level):
        verts, faces = _subdivide_on_sphere(verts, faces)
    return ReferenceMesh(verts, faces)


def _subdivide_on_sphere(verts, faces):
    heads = faces
    tails = np.roll(faces, -1, axis=1)
    lo = np.minimum(heads, tails)
    hi = np.maximum(heads, tails)
    pairs = np.stack([lo.ravel(), hi.ravel()], axis=1)
    uniq, inverse = np.unique(pairs, axis=0, return_inverse=True)
    mids = verts[uniq[:, 0]] + verts[uniq[:, 1]]
    mids /= np.linalg.norm(mids, axis=1, keepdims=True)
    mid_idx = (len(verts) + inverse).reshape(len(faces), 3)
    a, b, c = faces[:, 0], faces[:, 1], faces[:, 2]
    mab, mbc, mca = mid_idx[:, 0], mid_idx[:, 1], mid_idx[:, 2]
    new_faces = np.concatenate(
        [
            np.stack([a, mab, mca], axis=1),
            np.stack([b, mbc, mab], axis=1),
            np.stack([c, mca, mbc], axis=1),
            np.stack([mab, mbc, mca], axis=1),
        ]
    )
    return np.concatenate([verts, mids]), new_faces


def cell_measure(p0, p1, p2):
    """Area of the flat triangle (p0, p1, p2)."""
    p0 = np.asarray(p0, float)
    p1 = np.asarray(p1, float)
    p2 = np.asarray(p2, float)
    area = 0.5 * np.linalg.norm(np.cross(p1 - p0, p2 - p0))
    if area < 1e-300:
        raise GeometryError("degenerate cell: collinear vertices")
    return float(area)


@dataclass(frozen=True)
class EdgeGeometry:
    """One edge of one cell: length, outward in-plane conormal, midpoint."""

    length: float
    conormal: np.ndarray
    midpoint: np.ndarray
    p_a: Optional[np.ndarray] = None
    p_b: Optional[np.ndarray] = None


def edge_geometry(p_a, p_b, p_opp):
    """Length, outward conormal, and midpoint of edge (p_a, p_b).

    The conormal lies in the triangle plane, is orthogonal to the edge, and
    points away from the opposite vertex ``p_opp``.
    """
    p_a = np.asarray(p_a, float)
    p_b = np.asarray(p_b, float)
    p_opp = np.asarray(p_opp, float)
    cell_measure(p_a, p_b, p_opp)  # rejects degenerate triangles
    edge = p_b - p_a
    length = float(np.linalg.norm(edge))
    midpoint = 0.5 * (p_a + p_b)
    tangent = edge / length
    w = p_opp - midpoint
    inward = w - np.dot(w, tangent) * tangent
    conormal = -inward / np.linalg.norm(inward)
    return length, conormal, midpoint


class MeshSnapshot:
    """Moved geometry of one time step; topology lives in the ReferenceMesh.

    Per-cell arrays: ``cell_measure`` (m,), ``barycenter`` (m, 3).
    Per-(cell, local edge) arrays: ``edge_length`` (m, 3),
    ``edge_conormal`` (m, 3, 3), ``edge_midpoint`` (m, 3, 3).
    """

    def __init__(self, mesh, time, vertices):
        self.mesh = mesh
        self.time = float(time)
        self.vertices = _freeze(vertices)
        tri = mesh.triangles
        p = vertices[tri]  # (m, 3, 3)
        cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        area = 0.5 * np.linalg.norm(cross, axis=1)
        if len(area):
            collapsed = area < COLLAPSE_RATIO * area.mean()
            if np.any(collapsed):
                j = int(np.argmax(collapsed))
                raise GeometryError(f"triangle {j} collapsed at t={self.time:g} (area {area[j]:.3e})")
        self.cell_measure = _freeze(area)
        self.barycenter = _freeze(p.mean(axis=1))

        length = np.empty((len(tri), 3))
        conormal = np.empty((len(tri), 3, 3))
        midpoint = np.empty((len(tri), 3, 3))
        for e in range(3):
            pa = p[:, e]
            pb = p[:, (e + 1) % 3]
            popp = p[:, (e + 2) % 3]
            edge = pb - pa
            ln = np.linalg.norm(edge, axis=1)
            mid = 0.5 * (pa + pb)
            tangent = edge / ln[:, None]
            w = popp - mid
            inward = w - np.einsum("ij,ij->i", w, tangent)[:, None] * tangent
            conormal[:, e] = -inward / np.linalg.norm(inward, axis=1)[:, None]
            length[:, e] = ln
            midpoint[:, e] = mid
        self.edge_length = _freeze(length)
        self.edge_conormal = _freeze(conormal)
        self.edge_midpoint = _freeze(midpoint)

    def edge(self, j, e):
        """EdgeGeometry of local edge e of cell j, endpoints included."""
        tri = self.mesh.triangles[j]
        return EdgeGeometry(
            length=float(self.edge_length[j, e]),
            conormal=self.edge_conormal[j, e],
            midpoint=self.edge_midpoint[j, e],
            p_a=self.vertices[tri[e]],
            p_b=self.vertices[tri[(e + 1) % 3]],
        )


def snapshot(mesh, motion, t):
    """Move the mesh vertices along the motion and rebuild flat geometry."""
    moved = motion.evaluator(mesh.vertices0, float(t))
    return MeshSnapshot(mesh, t, np.asarray(moved, float))


def mean_diameter(snap):
    """Mean over cells of the longest edge length."""
    return float(snap.edge_length.max(axis=1).mean())
