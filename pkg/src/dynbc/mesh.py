"""Bulk and boundary meshes for the interval and the unit square.

The boundary of a 2D mesh is handled as a single closed curve parametrized by
arc length, starting at the lexicographically smallest boundary vertex and
running counterclockwise.  On an interval the boundary is two isolated points.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "MeshError",
    "BulkMesh",
    "BoundaryMesh",
    "build_interval_mesh",
    "build_square_mesh",
    "refine_mesh",
    "extract_boundary_mesh",
    "build_independent_boundary_mesh",
    "mesh_to_json",
]


class MeshError(ValueError):
    """Invalid mesh input or unsupported geometry."""


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class BulkMesh:
    """Simplicial mesh of the bulk domain.

    ``boundary_facets`` holds single node indices for ``dim == 1`` and
    counterclockwise-oriented edges for ``dim == 2``.
    """

    dim: int
    nodes: np.ndarray
    elements: np.ndarray
    boundary_facets: np.ndarray
    boundary_node_ids: np.ndarray = field(init=False)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        object.__setattr__(self, "nodes", _frozen(nodes, float))
        object.__setattr__(self, "elements", _frozen(self.elements, np.int64))
        facets = np.asarray(self.boundary_facets, dtype=np.int64).reshape(-1, self.dim)
        object.__setattr__(self, "boundary_facets", _frozen(facets, np.int64))
        object.__setattr__(
            self, "boundary_node_ids", _frozen(np.unique(facets), np.int64)
        )

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    def element_measures(self) -> np.ndarray:
        """Signed length (1D) or signed area (2D) of every element."""
        p = self.nodes[self.elements]
        if self.dim == 1:
            return p[:, 1, 0] - p[:, 0, 0]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def h(self) -> float:
        """Largest element diameter."""
        p = self.nodes[self.elements]
        if self.dim == 1:
            return float(np.max(np.abs(p[:, 1, 0] - p[:, 0, 0])))
        d = [np.linalg.norm(p[:, i] - p[:, j], axis=1) for i, j in ((0, 1), (1, 2), (0, 2))]
        return float(np.max(d))

    def validate(self) -> None:
        """Raise :class:`MeshError` if a structural invariant is violated."""
        if np.any(self.element_measures() <= 0.0):
            raise MeshError("element with non-positive signed measure")
        if self.dim == 1:
            counts = np.bincount(self.elements.ravel(), minlength=self.n_nodes)
            ends = set(np.flatnonzero(counts == 1).tolist())
            if ends != set(self.boundary_node_ids.tolist()):
                raise MeshError("boundary nodes do not match the interval endpoints")
            return
        edges = _element_edges(self.elements)
        key = np.sort(edges, axis=1)
        uniq, counts = np.unique(key, axis=0, return_counts=True)
        if np.any(counts > 2):
            raise MeshError("non-conforming mesh: edge shared by more than two elements")
        single = {tuple(e) for e in uniq[counts == 1]}
        facets = {tuple(sorted(f)) for f in self.boundary_facets.tolist()}
        if single != facets:
            raise MeshError("boundary facets differ from edges with a single element")
        # hanging nodes would sit in the interior of some edge
        for a, b in uniq:
            pa, pb = self.nodes[a], self.nodes[b]
            t = pb - pa
            rel = self.nodes - pa
            s = rel @ t / (t @ t)
            dist = np.abs(rel[:, 0] * t[1] - rel[:, 1] * t[0]) / np.linalg.norm(t)
            inside = (s > 1e-12) & (s < 1 - 1e-12) & (dist < 1e-12 * np.linalg.norm(t))
            if np.any(inside):
                raise MeshError("hanging node on edge (%d, %d)" % (a, b))


def _element_edges(elements: np.ndarray) -> np.ndarray:
    """Counterclockwise-oriented edges of all triangles, three per element."""
    return np.concatenate(
        [elements[:, [0, 1]], elements[:, [1, 2]], elements[:, [2, 0]]], axis=0
    )


def _boundary_edges(elements: np.ndarray) -> np.ndarray:
    edges = _element_edges(elements)
    key = np.sort(edges, axis=1)
    _, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    return edges[counts[inverse.ravel()] == 1]


def build_interval_mesh(n_elems: int, a: float = 0.0, b: float = 1.0) -> BulkMesh:
    """Uniform mesh of ``[a, b]`` with ``n_elems`` segments."""
    if int(n_elems) != n_elems or n_elems < 1:
        raise MeshError("n_elems must be a positive integer, got %r" % (n_elems,))
    if not a < b:
        raise MeshError("interval requires a < b, got a=%r, b=%r" % (a, b))
    n_elems = int(n_elems)
    x = np.linspace(a, b, n_elems + 1)
    elements = np.column_stack([np.arange(n_elems), np.arange(1, n_elems + 1)])
    return BulkMesh(1, x, elements, [[0], [n_elems]])


def build_square_mesh(n_per_side: int) -> BulkMesh:
    """Structured triangulation of the unit square.

    Every grid cell is split along the diagonal from its lower-left to its
    upper-right corner, which gives ``(n+1)**2`` nodes and ``2 n**2``
    counterclockwise triangles.
    """
    if int(n_per_side) != n_per_side or n_per_side < 1:
        raise MeshError("n_per_side must be a positive integer, got %r" % (n_per_side,))
    n = int(n_per_side)
    g = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(g, g)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    a = j * (n + 1) + i
    b = a + 1
    c = a + n + 2
    d = a + n + 1
    elements = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return BulkMesh(2, nodes, elements, _boundary_edges(elements))


def refine_mesh(mesh: BulkMesh) -> BulkMesh:
    """Uniform refinement: halve every segment, or split triangles into four."""
    if mesh.dim == 1:
        x = mesh.nodes[:, 0]
        elems = mesh.elements
        mid = 0.5 * (x[elems[:, 0]] + x[elems[:, 1]])
        n = mesh.n_nodes
        m = np.arange(n, n + len(elems))
        new_elems = np.concatenate(
            [np.column_stack([elems[:, 0], m]), np.column_stack([m, elems[:, 1]])]
        )
        return BulkMesh(1, np.concatenate([x, mid]), new_elems, mesh.boundary_facets)

    edges = _element_edges(mesh.elements)
    key = np.sort(edges, axis=1)
    uniq, inverse = np.unique(key, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    n = mesh.n_nodes
    mids = 0.5 * (mesh.nodes[uniq[:, 0]] + mesh.nodes[uniq[:, 1]])
    ne = mesh.n_elements
    m01, m12, m20 = (n + inverse[k * ne:(k + 1) * ne] for k in range(3))
    v0, v1, v2 = mesh.elements.T
    elements = np.concatenate(
        [
            np.column_stack([v0, m01, m20]),
            np.column_stack([m01, v1, m12]),
            np.column_stack([m20, m12, v2]),
            np.column_stack([m01, m12, m20]),
        ]
    )
    return BulkMesh(2, np.concatenate([mesh.nodes, mids]), elements, _boundary_edges(elements))


@dataclass(frozen=True)
class BoundaryMesh:
    """Arc-length parametrized mesh of the boundary.

    For ``dim == 2`` the vertices sit at ``arc_coords`` on a closed curve of
    length ``length`` and ``segments`` wraps around periodically.  For
    ``dim == 1`` the boundary is two points, ``segments`` is empty and
    ``length`` is the counting measure 2.

    ``bulk_node_ids`` links each vertex to the bulk node it came from and is
    ``None`` for an independently generated mesh.  ``curve`` is the closed
    polyline (vertices, cumulative arc length) used by :meth:`embed`.
    """

    dim: int
    arc_coords: np.ndarray
    length: float
    normals: np.ndarray
    bulk_node_ids: Optional[np.ndarray] = None
    curve: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "arc_coords", _frozen(self.arc_coords, float))
        object.__setattr__(self, "normals", _frozen(self.normals, float))
        if self.bulk_node_ids is not None:
            object.__setattr__(self, "bulk_node_ids", _frozen(self.bulk_node_ids, np.int64))

    @property
    def n_nodes(self) -> int:
        return len(self.arc_coords)

    @property
    def segments(self) -> np.ndarray:
        if self.dim == 1:
            return np.zeros((0, 2), dtype=np.int64)
        k = np.arange(self.n_nodes)
        return np.column_stack([k, (k + 1) % self.n_nodes])

    def segment_lengths(self) -> np.ndarray:
        if self.dim == 1:
            return np.zeros(0)
        s = self.arc_coords
        return np.diff(np.append(s, s[0] + self.length))

    @property
    def h(self) -> float:
        return float(np.max(self.segment_lengths())) if self.dim == 2 else 0.0

    def embed(self, s) -> np.ndarray:
        """Map arc coordinates to points of the boundary curve in R^d."""
        if self.curve is None:
            raise MeshError("boundary mesh carries no curve geometry to embed into")
        pts, cum = self.curve
        if self.dim == 1:
            idx = np.asarray(s, dtype=np.int64)
            return pts[idx]
        s = np.mod(np.asarray(s, dtype=float), self.length)
        closed = np.vstack([pts, pts[:1]])
        x = np.interp(s, cum, closed[:, 0])
        y = np.interp(s, cum, closed[:, 1])
        return np.stack([x, y], axis=-1)

    def points(self) -> np.ndarray:
        """Coordinates of the mesh vertices."""
        if self.dim == 1:
            return self.embed(np.arange(2))
        return self.embed(self.arc_coords)

    def vertex_normals(self) -> np.ndarray:
        """Outward unit normal at the midpoint of every segment (or per point in 1D)."""
        return self.normals


def extract_boundary_mesh(mesh: BulkMesh) -> BoundaryMesh:
    """Order the boundary facets of ``mesh`` into an arc-length mesh."""
    if mesh.dim == 1:
        ids = mesh.boundary_facets[:, 0]
        x = mesh.nodes[ids, 0]
        order = np.argsort(x, kind="stable")
        ids = ids[order]
        pts = mesh.nodes[ids]
        return BoundaryMesh(
            dim=1,
            arc_coords=[0.0, 1.0],
            length=2.0,
            normals=[[-1.0], [1.0]],
            bulk_node_ids=ids,
            curve=(pts, np.array([0.0, 1.0])),
        )

    facets = mesh.boundary_facets
    nxt = {}
    for a, b in facets.tolist():
        if a in nxt:
            raise MeshError("boundary is not a single closed curve (vertex %d branches)" % a)
        nxt[a] = b
    bnodes = mesh.boundary_node_ids
    coords = mesh.nodes[bnodes]
    anchor = int(bnodes[np.lexsort((coords[:, 1], coords[:, 0]))[0]])
    chain = [anchor]
    while True:
        b = nxt.get(chain[-1])
        if b is None:
            raise MeshError("boundary chain is open at vertex %d" % chain[-1])
        if b == anchor:
            break
        chain.append(b)
        if len(chain) > len(facets):
            raise MeshError("boundary chain does not close")
    if len(chain) != len(facets):
        raise MeshError(
            "boundary is not a single closed curve: %d of %d facets reached"
            % (len(chain), len(facets))
        )
    ids = np.array(chain)
    pts = mesh.nodes[ids]
    seg = np.roll(pts, -1, axis=0) - pts
    lengths = np.linalg.norm(seg, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    normals = np.column_stack([seg[:, 1], -seg[:, 0]]) / lengths[:, None]
    return BoundaryMesh(
        dim=2,
        arc_coords=cum[:-1],
        length=float(cum[-1]),
        normals=normals,
        bulk_node_ids=ids,
        curve=(pts, cum),
    )


def build_independent_boundary_mesh(
    L: float, m: int, offset: float = 0.0, curve: Optional[BoundaryMesh] = None
) -> BoundaryMesh:
    """Uniform periodic mesh of ``[0, L)`` with ``m`` segments shifted by ``offset``.

    Parameters
    ----------
    L : float
        Curve length.
    m : int
        Number of segments, at least 2.
    offset : float
        Shift of the first vertex, ``0 <= offset < L/m``.
    curve : BoundaryMesh, optional
        Mesh of the same curve whose geometry is reused for :meth:`BoundaryMesh.embed`
        and the segment normals.
    """
    if int(m) != m or m < 2:
        raise MeshError("independent boundary mesh needs m >= 2 segments, got %r" % (m,))
    if not L > 0:
        raise MeshError("curve length must be positive, got %r" % (L,))
    m = int(m)
    if not (0.0 <= offset < L / m):
        raise MeshError("offset must satisfy 0 <= offset < L/m = %g, got %r" % (L / m, offset))
    if curve is not None and abs(curve.length - L) > 1e-12 * L:
        raise MeshError("curve length %r differs from L=%r" % (curve.length, L))
    s = offset + L * np.arange(m) / m
    normals = np.full((m, 2), np.nan)
    geom = None
    if curve is not None:
        geom = curve.curve
        pts, cum = geom
        mid = np.mod(s + 0.5 * L / m, L)
        k = np.clip(np.searchsorted(cum, mid, side="right") - 1, 0, len(pts) - 1)
        t = np.roll(pts, -1, axis=0)[k] - pts[k]
        t /= np.linalg.norm(t, axis=1)[:, None]
        normals = np.column_stack([t[:, 1], -t[:, 0]])
    return BoundaryMesh(dim=2, arc_coords=s, length=float(L), normals=normals, curve=geom)


def mesh_to_json(mesh: BulkMesh, bmesh: Optional[BoundaryMesh] = None) -> str:
    """Serialize a mesh as ``{nodes, elements, boundary_facets, arc_coords}``."""
    if bmesh is None:
        bmesh = extract_boundary_mesh(mesh)
    doc = {
        "nodes": mesh.nodes.tolist(),
        "elements": mesh.elements.tolist(),
        "boundary_facets": mesh.boundary_facets.tolist(),
        "arc_coords": bmesh.arc_coords.tolist(),
    }
    return json.dumps(doc)
