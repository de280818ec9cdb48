"""Block DAE systems for parabolic problems with Dirichlet and dynamic boundary conditions.

Every constrained builder returns the same structure

    E x' + A x + B^T lam = load(t),    B x = constraint_data(t)

so the time integrators do not need to know which formulation they march.
For the coupled problems ``x = [u; p]`` with ``u`` on the bulk mesh and ``p``
on the trace mesh; ``lam`` lives on the multiplier mesh.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from . import assembly as asm
from .mesh import BoundaryMesh, BulkMesh, extract_boundary_mesh
from .saddle import SaddleOperator, SingularSaddleError, factorize

__all__ = [
    "PdaeError",
    "PdaeSystem",
    "InitialState",
    "build_homogeneous_dirichlet",
    "build_dirichlet_pdae",
    "build_wentzell_pdae",
    "build_nonlocal_pdae",
    "consistent_init",
    "validate_structure",
]

TOL_CONSISTENCY = 1e-10


class PdaeError(ValueError):
    pass


def _zero_data(n):
    z = np.zeros(n)
    z.setflags(write=False)
    return lambda t: z


@dataclass(frozen=True)
class PdaeSystem:
    """Semi-discrete system ``E x' + A x + B^T lam = load(t)``, ``B x = constraint_data(t)``."""

    formulation: str
    E: sp.csr_matrix
    A: sp.csr_matrix
    B: sp.csr_matrix
    load: Callable[[float], np.ndarray]
    constraint_data: Callable[[float], np.ndarray]
    n_u: int
    n_p: int
    mesh: BulkMesh
    trace_mesh: Optional[BoundaryMesh] = None
    multiplier_mesh: Optional[BoundaryMesh] = None
    trace_matrix: Optional[sp.csr_matrix] = None
    coeffs: Optional[asm.CoefficientSet] = None
    # bulk node ids of the unknowns when only a subset is kept (homogeneous Dirichlet)
    free_nodes: Optional[np.ndarray] = None
    blocks: dict = field(default_factory=dict, repr=False)

    @property
    def n_lambda(self) -> int:
        return self.B.shape[0]

    @property
    def n(self) -> int:
        return self.n_u + self.n_p

    def split(self, x):
        return x[..., : self.n_u], x[..., self.n_u:]

    def energy(self, x) -> float:
        return 0.5 * float(x @ (self.E @ x))

    def constraint_residual(self, x, t) -> float:
        if self.n_lambda == 0:
            return 0.0
        C = self.blocks.get("C")
        if C is not None and self.n_p:
            # C (p - T u): exactly zero for p = T u, unlike the row sums of B x
            u, p = self.split(x)
            Bx = C @ (p - self.trace_matrix @ u)
        else:
            Bx = self.B @ x
        return float(np.linalg.norm(Bx - self.constraint_data(t)))

    def summary(self, init: Optional["InitialState"] = None) -> dict:
        doc = {
            "formulation": self.formulation,
            "n_u": self.n_u,
            "n_p": self.n_p,
            "n_lambda": self.n_lambda,
            "nnz": {"E": int(self.E.nnz), "A": int(self.A.nnz), "B": int(self.B.nnz)},
        }
        if init is not None:
            doc["consistency_residual"] = init.consistency_residual
        return doc

    def summary_json(self, init=None) -> str:
        return json.dumps(self.summary(init), indent=2)


@dataclass(frozen=True)
class InitialState:
    u0: np.ndarray
    p0: Optional[np.ndarray]
    consistency_residual: float

    @property
    def x0(self) -> np.ndarray:
        if self.p0 is None:
            return np.array(self.u0, dtype=float)
        return np.concatenate([self.u0, self.p0])


def validate_structure(sys: PdaeSystem) -> None:
    """Shared structural checks: block shapes, SPD ``E``, full row rank ``B``."""
    n = sys.n
    if sys.E.shape != (n, n) or sys.A.shape != (n, n):
        raise PdaeError("E and A must be %dx%d" % (n, n))
    if sys.B.shape[1] != n:
        raise PdaeError("B has %d columns, expected %d" % (sys.B.shape[1], n))
    E = sys.E.toarray()
    if not np.allclose(E, E.T, rtol=0, atol=1e-14 * np.abs(E).max()):
        raise PdaeError("E is not symmetric")
    try:
        np.linalg.cholesky(E)
    except np.linalg.LinAlgError:
        raise PdaeError("E is not positive definite") from None
    if sys.n_lambda:
        rank = np.linalg.matrix_rank(sys.B.toarray())
        if rank < sys.n_lambda:
            raise PdaeError("B has rank %d < %d rows" % (rank, sys.n_lambda))
    if sys.load(0.0).shape != (n,):
        raise PdaeError("load has wrong length")
    if sys.constraint_data(0.0).shape != (sys.n_lambda,):
        raise PdaeError("constraint data has wrong length")


def _time_load(space, data, arc=False):
    if data is None or (not callable(data) and float(data) == 0.0):
        n = space.n_nodes
        return _zero_data(n)
    if not callable(data):
        v = asm.assemble_load(space, data)
        v.setflags(write=False)
        return lambda t: v
    return lambda t: asm.assemble_load(space, data, t, arc=arc)


def build_homogeneous_dirichlet(mesh: BulkMesh, coeffs: asm.CoefficientSet, f=None) -> PdaeSystem:
    """Unconstrained system on the interior nodes (test functions vanish on the boundary)."""
    M = asm.assemble_mass_bulk(mesh)
    K = asm.assemble_stiffness_bulk(mesh, coeffs.kappa, coeffs.c_kappa)
    free = np.setdiff1d(np.arange(mesh.n_nodes), mesh.boundary_node_ids)
    full = _time_load(mesh, f)
    n = len(free)
    sys = PdaeSystem(
        formulation="homogeneous_dirichlet",
        E=M[free][:, free].tocsr(),
        A=K[free][:, free].tocsr(),
        B=sp.csr_matrix((0, n)),
        load=lambda t: full(t)[free],
        constraint_data=_zero_data(0),
        n_u=n,
        n_p=0,
        mesh=mesh,
        coeffs=coeffs,
        free_nodes=free,
    )
    return sys


def _boundary_nodal(bmesh: BoundaryMesh, g, t):
    X = bmesh.points()
    if callable(g):
        return np.broadcast_to(np.asarray(g(X, t), dtype=float), (bmesh.n_nodes,)).copy()
    return np.full(bmesh.n_nodes, float(g))


def build_dirichlet_pdae(mesh: BulkMesh, coeffs: asm.CoefficientSet, f=None, g=None) -> PdaeSystem:
    """Full-space system with the trace constraint ``M_Gamma T u = M_Gamma g(t)``."""
    bmesh = extract_boundary_mesh(mesh)
    M = asm.assemble_mass_bulk(mesh)
    K = asm.assemble_stiffness_bulk(mesh, coeffs.kappa, coeffs.c_kappa)
    T = asm.assemble_trace_matrix(mesh, bmesh)
    MG = asm.assemble_mass_boundary(bmesh)
    B = (MG @ T).tocsr()
    B.sort_indices()
    try:
        _boundary_nodal(bmesh, g if g is not None else 0.0, 0.0)
    except Exception as exc:
        raise PdaeError("Dirichlet data g is not evaluable at the boundary nodes: %s" % exc) from exc
    if g is None:
        cdata = _zero_data(bmesh.n_nodes)
    else:
        cdata = lambda t: MG @ _boundary_nodal(bmesh, g, t)
    return PdaeSystem(
        formulation="dirichlet_pdae",
        E=M,
        A=K,
        B=B,
        load=_time_load(mesh, f),
        constraint_data=cdata,
        n_u=mesh.n_nodes,
        n_p=0,
        mesh=mesh,
        trace_mesh=bmesh,
        multiplier_mesh=bmesh,
        trace_matrix=T,
        coeffs=coeffs,
        blocks={"M": M, "K": K, "M_Gamma": MG},
    )


def _coupled(formulation, mesh, bmesh_mult, coeffs, f, g, with_surface_diffusion,
             constraint_offset=None, alpha_arc=False):
    trace = extract_boundary_mesh(mesh)
    mult = trace if bmesh_mult is None else bmesh_mult
    spec = asm.CouplingSpec(trace, mult)
    M = asm.assemble_mass_bulk(mesh)
    K = asm.assemble_stiffness_bulk(mesh, coeffs.kappa, coeffs.c_kappa)
    MG = asm.assemble_mass_boundary(trace)
    Na = asm.assemble_alpha_boundary(trace, coeffs.alpha, arc=alpha_arc)
    KG = asm.assemble_stiffness_boundary(trace)
    T = asm.assemble_trace_matrix(mesh, trace)
    B = asm.assemble_coupling(spec, T)
    C = MG if spec.matching else asm.assemble_cross_mass(mult, trace)
    Ap = Na + coeffs.beta * KG if with_surface_diffusion else Na
    E = sp.block_diag([M, MG], format="csr")
    A = sp.block_diag([K, Ap], format="csr")
    A.eliminate_zeros()
    fl = _time_load(mesh, f)
    gl = _time_load(trace, g)

    def load(t):
        return np.concatenate([fl(t), gl(t)])

    if constraint_offset is None:
        cdata = _zero_data(B.shape[0])
    else:
        off = np.broadcast_to(np.asarray(constraint_offset, dtype=float), (B.shape[0],)).copy()
        off.setflags(write=False)
        cdata = lambda t: off

    return PdaeSystem(
        formulation=formulation,
        E=E,
        A=A,
        B=B,
        load=load,
        constraint_data=cdata,
        n_u=mesh.n_nodes,
        n_p=trace.n_nodes,
        mesh=mesh,
        trace_mesh=trace,
        multiplier_mesh=mult,
        trace_matrix=T,
        coeffs=coeffs,
        blocks={"M": M, "K": K, "M_Gamma": MG, "K_Gamma": KG, "N_alpha": Na, "C": C},
    )


def build_wentzell_pdae(mesh: BulkMesh, bmesh_mult: Optional[BoundaryMesh],
                        coeffs: asm.CoefficientSet, f=None, g=None, *,
                        constraint_offset=None, alpha_arc: bool = False) -> PdaeSystem:
    """Locally reacting dynamic boundary condition (``beta == 0``).

    ``bmesh_mult=None`` uses the trace mesh for the multiplier.
    ``constraint_offset`` replaces the zero coupling data by a constant vector;
    it exists to exercise inconsistent-initialization paths.
    """
    if coeffs.beta != 0:
        raise PdaeError("build_wentzell_pdae requires beta == 0, got beta=%r" % coeffs.beta)
    return _coupled("wentzell", mesh, bmesh_mult, coeffs, f, g, False, constraint_offset, alpha_arc)


def build_nonlocal_pdae(mesh: BulkMesh, bmesh_mult: Optional[BoundaryMesh],
                        coeffs: asm.CoefficientSet, f=None, g=None, *,
                        constraint_offset=None, alpha_arc: bool = False) -> PdaeSystem:
    """Dynamic boundary condition with surface diffusion ``beta K_Gamma`` (``beta > 0``, 2D only)."""
    if not coeffs.beta > 0:
        raise PdaeError("build_nonlocal_pdae requires beta > 0, got beta=%r" % coeffs.beta)
    if mesh.dim != 2:
        raise PdaeError("beta > 0 needs a boundary curve; the Laplace-Beltrami term is undefined in 1D")
    return _coupled("nonlocal", mesh, bmesh_mult, coeffs, f, g, True, constraint_offset, alpha_arc)


def _nodal(values, X):
    if callable(values):
        return np.broadcast_to(np.asarray(values(X), dtype=float), X.shape[:1]).copy()
    if np.ndim(values) == 0:
        return np.full(X.shape[0], float(values))
    return np.array(values, dtype=float)


def consistent_init(sys: PdaeSystem, u0_raw, p0_raw=None, tol: float = TOL_CONSISTENCY) -> InitialState:
    """Consistent initial data for ``sys``.

    ``u0_raw`` and ``p0_raw`` are nodal vectors or callables of the node
    coordinates.  Without ``p0_raw`` the boundary value is the trace of
    ``u0``; otherwise the pair is projected onto ``{B x = constraint_data(0)}``
    in the ``E`` inner product.  A Dirichlet ``u0`` violating the constraint
    beyond ``tol`` is projected the same way.
    """
    X = sys.mesh.nodes
    if sys.free_nodes is not None:
        X = X[sys.free_nodes]
    u0 = _nodal(u0_raw, X)
    if u0.shape != (sys.n_u,):
        raise PdaeError("u0 has %d entries, expected %d" % (u0.size, sys.n_u))
    if sys.n_lambda == 0:
        return InitialState(u0, None, 0.0)
    c0 = sys.constraint_data(0.0)
    if sys.n_p == 0:
        x = u0
        project = sys.constraint_residual(x, 0.0) > tol
    elif p0_raw is None:
        x = np.concatenate([u0, sys.trace_matrix @ u0])
        project = sys.constraint_residual(x, 0.0) > tol
    else:
        p0 = _nodal(p0_raw, sys.trace_mesh.points())
        x = np.concatenate([u0, p0])
        project = True
    if project:
        try:
            fact = factorize(SaddleOperator(sys.E, sys.B))
        except SingularSaddleError as exc:
            raise PdaeError("initial projection is singular: %s" % exc) from exc
        z = fact.solve(np.concatenate([sys.E @ x, c0]))
        x = z[: sys.n]
    res = sys.constraint_residual(x, 0.0)
    u, p = sys.split(x)
    return InitialState(u.copy(), p.copy() if sys.n_p else None, res)
