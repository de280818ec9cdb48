"""P1 finite element operators on bulk and boundary meshes.

All matrices are returned as finalized ``scipy.sparse.csr_matrix`` objects:
sorted column indices, duplicates summed, explicit zeros removed.

Callables for coefficients and data receive an ``(n, d)`` array of points
(``fn(X)`` for coefficients, ``fn(X, t)`` for time-dependent data).  Boundary
routines accept ``arc=True`` to call them with arc-length coordinates instead.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.io
import scipy.sparse as sp

from .mesh import BoundaryMesh, BulkMesh, MeshError

__all__ = [
    "AssemblyError",
    "CoefficientSet",
    "CouplingSpec",
    "assemble_mass_bulk",
    "assemble_stiffness_bulk",
    "assemble_mass_boundary",
    "assemble_stiffness_boundary",
    "assemble_alpha_boundary",
    "assemble_trace_matrix",
    "assemble_cross_mass",
    "assemble_coupling",
    "assemble_load",
    "export_matrix_market",
]

Coefficient = Union[float, Callable]

# Gauss-Legendre on [0, 1], exact up to degree 9
_GL_X, _GL_W = np.polynomial.legendre.leggauss(5)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W

# 7-point degree-5 rule on the reference triangle (barycentric, weights sum to 1)
_r15 = np.sqrt(15.0)
_a1, _b1 = (6 - _r15) / 21, (9 + 2 * _r15) / 21
_a2, _b2 = (6 + _r15) / 21, (9 - 2 * _r15) / 21
_TRI_BARY = np.array(
    [
        [1 / 3, 1 / 3, 1 / 3],
        [_a1, _a1, _b1], [_a1, _b1, _a1], [_b1, _a1, _a1],
        [_a2, _a2, _b2], [_a2, _b2, _a2], [_b2, _a2, _a2],
    ]
)
_TRI_W = np.array([9 / 40] + [(155 - _r15) / 1200] * 3 + [(155 + _r15) / 1200] * 3)


class AssemblyError(ValueError):
    """Invalid coefficient or incompatible meshes."""


@dataclass(frozen=True)
class CoefficientSet:
    """Diffusion ``kappa`` (bulk), reaction ``alpha`` (boundary), surface diffusion ``beta``."""

    kappa: Coefficient = 1.0
    c_kappa: float = 1.0
    alpha: Coefficient = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if not self.c_kappa > 0:
            raise AssemblyError("c_kappa must be positive, got %r" % (self.c_kappa,))
        if not self.beta >= 0:
            raise AssemblyError("beta must be nonnegative, got %r" % (self.beta,))
        if not callable(self.kappa) and self.kappa < self.c_kappa:
            raise AssemblyError("constant kappa=%r below c_kappa=%r" % (self.kappa, self.c_kappa))


@dataclass(frozen=True)
class CouplingSpec:
    """Trace mesh of the bulk and the mesh carrying the P1 multiplier."""

    trace_mesh: BoundaryMesh
    multiplier_mesh: BoundaryMesh

    def __post_init__(self):
        L1, L2 = self.trace_mesh.length, self.multiplier_mesh.length
        if abs(L1 - L2) > 1e-12 * max(L1, L2):
            raise AssemblyError("trace and multiplier meshes differ in length: %r vs %r" % (L1, L2))
        if self.trace_mesh.dim != self.multiplier_mesh.dim:
            raise AssemblyError("trace and multiplier meshes differ in dimension")

    @property
    def matching(self) -> bool:
        a, b = self.trace_mesh.arc_coords, self.multiplier_mesh.arc_coords
        return a.shape == b.shape and np.allclose(a, b, rtol=0, atol=1e-14 * self.trace_mesh.length)


def _finalize(rows, cols, vals, shape) -> sp.csr_matrix:
    A = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
    A.sum_duplicates()
    A.eliminate_zeros()
    A.sort_indices()
    return A


def _evaluate(fn, X, what):
    if callable(fn):
        v = np.asarray(fn(X), dtype=float)
        return np.broadcast_to(v, X.shape[:1]).astype(float)
    return np.full(X.shape[0], float(fn))


def _bulk_quadrature(mesh: BulkMesh):
    """Physical quadrature points, weights and P1 shape values, per element."""
    p = mesh.nodes[mesh.elements]
    meas = mesh.element_measures()
    if mesh.dim == 1:
        lam = np.column_stack([1 - _GL_X, _GL_X])
        w = _GL_W
    else:
        lam = _TRI_BARY
        w = _TRI_W
    X = np.einsum("qk,ekd->eqd", lam, p)
    W = meas[:, None] * w[None, :]
    return X, W, lam


def _p1_gradients(mesh: BulkMesh) -> np.ndarray:
    """Constant gradients of the local basis, shape (n_elem, d+1, d)."""
    p = mesh.nodes[mesh.elements]
    if mesh.dim == 1:
        h = p[:, 1, 0] - p[:, 0, 0]
        return np.stack([-1 / h, 1 / h], axis=1)[:, :, None]
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns are edge vectors
    Jinv_T = np.linalg.inv(J).transpose(0, 2, 1)
    ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    return np.einsum("eij,kj->eki", Jinv_T, ref)


def _scatter(mesh_elements, local, n):
    k = mesh_elements.shape[1]
    rows = np.repeat(mesh_elements, k, axis=1).ravel()
    cols = np.tile(mesh_elements, (1, k)).ravel()
    return _finalize(rows, cols, local.ravel(), (n, n))


def assemble_mass_bulk(mesh: BulkMesh) -> sp.csr_matrix:
    """Consistent P1 mass matrix of the bulk."""
    meas = mesh.element_measures()
    k = mesh.dim + 1
    ref = (np.ones((k, k)) + np.eye(k)) / ((k) * (k + 1))
    local = meas[:, None, None] * ref[None]
    return _scatter(mesh.elements, local, mesh.n_nodes)


def assemble_stiffness_bulk(mesh: BulkMesh, kappa: Coefficient = 1.0,
                            c_kappa: Optional[float] = None) -> sp.csr_matrix:
    """P1 stiffness matrix of ``(kappa grad u, grad v)``.

    ``kappa`` is sampled at the quadrature points; a non-positive sample, or
    one below ``c_kappa`` when given, raises :class:`AssemblyError`.
    """
    X, W, _ = _bulk_quadrature(mesh)
    kq = _evaluate(kappa, X.reshape(-1, mesh.dim), "kappa").reshape(W.shape)
    floor = 0.0 if c_kappa is None else c_kappa
    bad = kq <= 0.0 if c_kappa is None else kq < floor
    if np.any(bad):
        raise AssemblyError(
            "kappa must satisfy kappa(x) >= c_kappa > 0; sampled min %g" % float(kq.min())
        )
    kbar = np.sum(kq * W, axis=1)  # integral of kappa per element
    G = _p1_gradients(mesh)
    local = kbar[:, None, None] * np.einsum("eid,ejd->eij", G, G)
    return _scatter(mesh.elements, local, mesh.n_nodes)


def _boundary_quadrature(bmesh: BoundaryMesh):
    """Arc coordinates, weights and P1 shape values on every boundary segment."""
    s0 = bmesh.arc_coords
    h = bmesh.segment_lengths()
    S = s0[:, None] + h[:, None] * _GL_X[None, :]
    W = h[:, None] * _GL_W[None, :]
    lam = np.column_stack([1 - _GL_X, _GL_X])
    return S, W, lam


def _boundary_values(bmesh: BoundaryMesh, fn, S, arc, t=None):
    if not callable(fn):
        return np.full(S.shape, float(fn))
    flat = S.ravel()
    arg = flat if arc else (bmesh.embed(flat) if bmesh.dim == 2 else bmesh.points())
    v = fn(arg) if t is None else fn(arg, t)
    return np.broadcast_to(np.asarray(v, dtype=float), flat.shape).reshape(S.shape)


def _weighted_boundary_mass(bmesh: BoundaryMesh, weight, arc=False) -> sp.csr_matrix:
    n = bmesh.n_nodes
    if bmesh.dim == 1:
        if callable(weight):
            arg = bmesh.arc_coords if arc else bmesh.points()
            vals = np.broadcast_to(np.asarray(weight(arg), dtype=float), (2,))
        else:
            vals = np.full(2, float(weight))
        return _finalize(np.arange(2), np.arange(2), vals, (2, 2))
    S, W, lam = _boundary_quadrature(bmesh)
    wq = _boundary_values(bmesh, weight, S, arc) * W
    local = np.einsum("eq,qi,qj->eij", wq, lam, lam)
    return _scatter(bmesh.segments, local, n)


def assemble_mass_boundary(bmesh: BoundaryMesh) -> sp.csr_matrix:
    """P1 mass matrix on the boundary; the identity for the two endpoints of an interval."""
    return _weighted_boundary_mass(bmesh, 1.0)


def assemble_stiffness_boundary(bmesh: BoundaryMesh) -> sp.csr_matrix:
    """Weak Laplace-Beltrami operator: periodic P1 stiffness along the arc length."""
    n = bmesh.n_nodes
    if bmesh.dim == 1:
        return sp.csr_matrix((n, n))
    h = bmesh.segment_lengths()
    local = (1.0 / h)[:, None, None] * np.array([[1.0, -1.0], [-1.0, 1.0]])[None]
    return _scatter(bmesh.segments, local, n)


def assemble_alpha_boundary(bmesh: BoundaryMesh, alpha: Coefficient, arc: bool = False) -> sp.csr_matrix:
    """Boundary reaction matrix of ``(alpha p, q)``; ``alpha`` may be negative."""
    return _weighted_boundary_mass(bmesh, alpha, arc=arc)


def assemble_trace_matrix(mesh: BulkMesh, bmesh: BoundaryMesh) -> sp.csr_matrix:
    """Boolean selection of bulk nodal values at the trace-mesh vertices."""
    ids = bmesh.bulk_node_ids
    if ids is None:
        raise AssemblyError("boundary mesh is not induced by a bulk mesh (no bulk node ids)")
    if ids.max(initial=-1) >= mesh.n_nodes or mesh.dim != bmesh.dim:
        raise AssemblyError("boundary mesh does not belong to this bulk mesh")
    if set(ids.tolist()) != set(mesh.boundary_node_ids.tolist()):
        raise AssemblyError("boundary mesh vertices are not the boundary nodes of the bulk mesh")
    pts = bmesh.points()
    if not np.allclose(pts, mesh.nodes[ids], rtol=0, atol=1e-12):
        raise AssemblyError("boundary mesh geometry does not match the bulk mesh")
    n = len(ids)
    return _finalize(np.arange(n), ids, np.ones(n), (n, mesh.n_nodes))


def _hat_values(bmesh: BoundaryMesh, s: np.ndarray):
    """Indices and values of the two P1 hats of a periodic mesh that are nonzero at ``s``."""
    L = bmesh.length
    nodes = bmesh.arc_coords
    n = len(nodes)
    rel = np.mod(s - nodes[0], L)
    local = nodes - nodes[0]
    k = np.searchsorted(local, rel, side="right") - 1
    k = np.clip(k, 0, n - 1)
    h = bmesh.segment_lengths()[k]
    theta = (rel - local[k]) / h
    return k, (k + 1) % n, 1.0 - theta, theta


def assemble_cross_mass(multiplier_mesh: BoundaryMesh, trace_mesh: BoundaryMesh) -> sp.csr_matrix:
    """``C[i, j] = int chi_i phi_j ds`` with ``chi`` on the multiplier mesh and ``phi`` on the trace mesh.

    The integrand is piecewise quadratic between merged breakpoints of the two
    meshes, so two Gauss points per merged interval integrate it exactly.
    """
    if multiplier_mesh.dim == 1:
        if not np.array_equal(multiplier_mesh.arc_coords, trace_mesh.arc_coords):
            raise AssemblyError("non-matching meshes are not defined for a two-point boundary")
        return assemble_mass_boundary(trace_mesh)
    L = trace_mesh.length
    s0 = trace_mesh.arc_coords[0]
    brk = np.unique(np.concatenate([
        np.mod(trace_mesh.arc_coords - s0, L),
        np.mod(multiplier_mesh.arc_coords - s0, L),
    ]))
    ends = np.append(brk[1:], L)
    keep = ends - brk > 1e-14 * L
    a, b = brk[keep] + s0, ends[keep] + s0
    gx, gw = np.polynomial.legendre.leggauss(2)
    gx, gw = 0.5 * (gx + 1), 0.5 * gw
    S = (a[:, None] + (b - a)[:, None] * gx[None]).ravel()
    W = ((b - a)[:, None] * gw[None]).ravel()
    mi0, mi1, mv0, mv1 = _hat_values(multiplier_mesh, S)
    tj0, tj1, tv0, tv1 = _hat_values(trace_mesh, S)
    rows = np.concatenate([mi0, mi0, mi1, mi1])
    cols = np.concatenate([tj0, tj1, tj0, tj1])
    vals = np.concatenate([W * mv0 * tv0, W * mv0 * tv1, W * mv1 * tv0, W * mv1 * tv1])
    return _finalize(rows, cols, vals, (multiplier_mesh.n_nodes, trace_mesh.n_nodes))


def assemble_coupling(spec: CouplingSpec, trace_matrix: sp.spmatrix) -> sp.csr_matrix:
    """Constraint matrix for ``p - D u``, tested with P1 multiplier hats.

    Returns ``B = [-C T | C]`` acting on ``[u; p]`` with ``C`` the cross mass
    between multiplier and trace meshes (``C = M_Gamma`` when they match).
    """
    if spec.matching:
        C = assemble_mass_boundary(spec.trace_mesh)
    else:
        C = assemble_cross_mass(spec.multiplier_mesh, spec.trace_mesh)
    B = sp.hstack([-(C @ trace_matrix), C], format="csr")
    B.eliminate_zeros()
    B.sort_indices()
    return B


def assemble_load(mesh: Union[BulkMesh, BoundaryMesh], data, t: Optional[float] = None,
                  arc: bool = False) -> np.ndarray:
    """Consistent P1 load vector ``int data * phi_i``.

    ``data`` is a constant or a callable ``data(X, t)`` (``data(X)`` when
    ``t`` is None).  On a bulk mesh the integral is over the domain, on a
    boundary mesh over the curve (point values for an interval).
    """
    if isinstance(mesh, BulkMesh):
        X, W, lam = _bulk_quadrature(mesh)
        flat = X.reshape(-1, mesh.dim)
        if callable(data):
            v = data(flat) if t is None else data(flat, t)
            v = np.broadcast_to(np.asarray(v, dtype=float), flat.shape[:1]).reshape(W.shape)
        else:
            v = np.full(W.shape, float(data))
        local = np.einsum("eq,qi->ei", v * W, lam)
        return np.bincount(mesh.elements.ravel(), local.ravel(), minlength=mesh.n_nodes)
    bmesh = mesh
    if bmesh.dim == 1:
        if callable(data):
            arg = bmesh.arc_coords if arc else bmesh.points()
            v = data(arg) if t is None else data(arg, t)
            return np.broadcast_to(np.asarray(v, dtype=float), (2,)).astype(float)
        return np.full(2, float(data))
    S, W, lam = _boundary_quadrature(bmesh)
    v = _boundary_values(bmesh, data, S, arc, t)
    local = np.einsum("eq,qi->ei", v * W, lam)
    return np.bincount(bmesh.segments.ravel(), local.ravel(), minlength=bmesh.n_nodes)


def export_matrix_market(path, A: sp.spmatrix, comment: str = "") -> None:
    """Write ``A`` in MatrixMarket coordinate format with 17 significant digits."""
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), comment=comment, precision=17)
