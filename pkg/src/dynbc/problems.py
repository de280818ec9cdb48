"""Glue between geometries, manufactured data and the system builders."""
from __future__ import annotations

from typing import Optional

import numpy as np

from . import assembly as asm
from .assembly import CoefficientSet
from .mesh import (
    BoundaryMesh,
    BulkMesh,
    build_independent_boundary_mesh,
    build_interval_mesh,
    build_square_mesh,
    extract_boundary_mesh,
)
from .pdae import (
    InitialState,
    PdaeError,
    PdaeSystem,
    build_dirichlet_pdae,
    build_homogeneous_dirichlet,
    build_nonlocal_pdae,
    build_wentzell_pdae,
    consistent_init,
)

FORMULATIONS = ("homogeneous_dirichlet", "dirichlet_pdae", "wentzell", "nonlocal")


def build_geometry(kind: str, n: int) -> BulkMesh:
    if kind == "interval":
        return build_interval_mesh(n, 0.0, 1.0)
    if kind == "square":
        return build_square_mesh(n)
    raise ValueError("unknown geometry %r (interval or square)" % (kind,))


def multiplier_mesh_for(mesh: BulkMesh, multiplier) -> Optional[BoundaryMesh]:
    """``None``/``"matching"`` or ``("independent", m, offset)``."""
    if multiplier is None or multiplier == "matching":
        return None
    if isinstance(multiplier, BoundaryMesh):
        return multiplier
    kind, m, offset = multiplier
    if kind != "independent":
        raise ValueError("unknown multiplier mesh kind %r" % (kind,))
    trace = extract_boundary_mesh(mesh)
    return build_independent_boundary_mesh(trace.length, m, offset, curve=trace)


def build_system(formulation: str, mesh: BulkMesh, coeffs: CoefficientSet, f=None, g=None,
                 multiplier_mesh: Optional[BoundaryMesh] = None) -> PdaeSystem:
    if formulation == "homogeneous_dirichlet":
        return build_homogeneous_dirichlet(mesh, coeffs, f)
    if formulation == "dirichlet_pdae":
        return build_dirichlet_pdae(mesh, coeffs, f, g)
    if formulation == "wentzell":
        return build_wentzell_pdae(mesh, multiplier_mesh, coeffs, f, g)
    if formulation == "nonlocal":
        return build_nonlocal_pdae(mesh, multiplier_mesh, coeffs, f, g)
    raise PdaeError("unknown formulation %r" % (formulation,))


def build_case(case, n: int, multiplier=None) -> tuple[PdaeSystem, InitialState]:
    """System and consistent initial state for a manufactured case on level ``n``."""
    mesh = build_geometry("interval" if case.dim == 1 else "square", n)
    mult = multiplier_mesh_for(mesh, multiplier)
    sys = build_system(case.formulation, mesh, case.coeffs, case.f, case.g, mult)
    init = consistent_init(sys, case.u0)
    return sys, init


def full_bulk_vector(sys: PdaeSystem, u: np.ndarray) -> np.ndarray:
    """Bulk nodal vector including eliminated boundary nodes (set to zero)."""
    if sys.free_nodes is None:
        return u
    full = np.zeros(sys.mesh.n_nodes)
    full[sys.free_nodes] = u
    return full


def l2_error_bulk(mesh: BulkMesh, uh: np.ndarray, exact) -> float:
    """``||u_h - u||_{L2(Omega)}`` with a quadrature rule of degree >= 5."""
    X, W, lam = asm._bulk_quadrature(mesh)
    uq = np.einsum("qk,ek->eq", lam, uh[mesh.elements])
    ex = np.asarray(exact(X.reshape(-1, mesh.dim)), dtype=float).reshape(W.shape)
    return float(np.sqrt(np.sum(W * (uq - ex) ** 2)))


def l2_error_boundary(bmesh: BoundaryMesh, ph: np.ndarray, exact) -> float:
    """``||p_h - p||_{L2(Gamma)}``; counting measure on the two interval endpoints."""
    if bmesh.dim == 1:
        return float(np.sqrt(np.sum((ph - exact(bmesh.points())) ** 2)))
    S, W, lam = asm._boundary_quadrature(bmesh)
    seg = bmesh.segments
    pq = np.einsum("qk,ek->eq", lam, ph[seg])
    ex = np.asarray(exact(bmesh.embed(S.ravel())), dtype=float).reshape(W.shape)
    return float(np.sqrt(np.sum(W * (pq - ex) ** 2)))
