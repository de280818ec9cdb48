"""Discrete norm matrices, the inf-sup estimator and the Garding check on ker B.

Fractional boundary norms are spectral: with ``(M + K) v_k = mu_k M v_k``
normalized by ``v_k^T M v_k = 1``,

    X_s = (M V) diag(mu^s) (M V)^T,

which gives ``X_1 = M + K``, ``X_0 = M`` and ``X_{-s} = M X_s^{-1} M``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .. import assembly as asm
from ..mesh import BoundaryMesh, BulkMesh
from ..pdae import PdaeSystem

__all__ = [
    "NormMatrices",
    "fractional_norm_matrix",
    "build_norm_matrices",
    "estimate_discrete_infsup",
    "infsup_for_system",
    "kernel_basis",
    "garding_constant",
]


def fractional_norm_matrix(M, K, s: float) -> np.ndarray:
    M = np.asarray(M.toarray() if sp.issparse(M) else M, dtype=float)
    K = np.asarray(K.toarray() if sp.issparse(K) else K, dtype=float)
    mu, V = sla.eigh(M + K, M)
    MV = M @ V
    X = (MV * mu**s) @ MV.T
    return 0.5 * (X + X.T)


@dataclass(frozen=True)
class NormMatrices:
    X_bulk: np.ndarray
    X_surf_1: np.ndarray
    X_surf_half: np.ndarray
    X_surf_minus_half: np.ndarray  # on the multiplier mesh

    def X_V(self, surface: str = "half") -> np.ndarray:
        """Block norm matrix of the ``[u; p]`` space; ``surface`` is ``"half"`` or ``"one"``."""
        Xp = self.X_surf_half if surface == "half" else self.X_surf_1
        return sla.block_diag(self.X_bulk, Xp)


def build_norm_matrices(mesh: BulkMesh, trace_mesh: BoundaryMesh,
                        multiplier_mesh: BoundaryMesh = None) -> NormMatrices:
    """Discrete H1(Omega), H1(Gamma), H^{1/2}(Gamma) and H^{-1/2}(Gamma) norm matrices."""
    if multiplier_mesh is None:
        multiplier_mesh = trace_mesh
    Xb = (asm.assemble_mass_bulk(mesh) + asm.assemble_stiffness_bulk(mesh, 1.0)).toarray()
    M = asm.assemble_mass_boundary(trace_mesh)
    K = asm.assemble_stiffness_boundary(trace_mesh)
    Mq = asm.assemble_mass_boundary(multiplier_mesh)
    Kq = asm.assemble_stiffness_boundary(multiplier_mesh)
    return NormMatrices(
        X_bulk=Xb,
        X_surf_1=(M + K).toarray(),
        X_surf_half=fractional_norm_matrix(M, K, 0.5),
        X_surf_minus_half=fractional_norm_matrix(Mq, Kq, -0.5),
    )


def estimate_discrete_infsup(B, X_V, N_Q, rank_rtol: float = 1e-10) -> float:
    """``sqrt(lambda_min(N_Q^{-1} B X_V^{-1} B^T))`` by a dense generalized eigensolve.

    Eigenvalues below ``rank_rtol`` times the largest one are numerically zero
    (a rank-deficient ``B``) and give 0.
    """
    B = np.asarray(B.toarray() if sp.issparse(B) else B, dtype=float)
    X_V = np.asarray(X_V, dtype=float)
    N_Q = np.atleast_2d(np.asarray(N_Q, dtype=float))
    try:
        cX = sla.cho_factor(X_V)
        sla.cho_factor(N_Q)
    except np.linalg.LinAlgError:
        raise ValueError("norm matrices must be symmetric positive definite") from None
    S = B @ sla.cho_solve(cX, B.T)
    S = 0.5 * (S + S.T)
    ev = sla.eigh(S, N_Q, eigvals_only=True)
    lam = ev[0]
    if lam <= rank_rtol * ev[-1]:
        return 0.0
    return float(np.sqrt(lam))


def infsup_for_system(sys: PdaeSystem, surface: str = None) -> float:
    """Inf-sup estimate of a coupled system with the norms matching its formulation.

    ``surface`` defaults to ``"half"`` for Wentzell and ``"one"`` for nonlocal.
    """
    if surface is None:
        surface = "one" if sys.formulation == "nonlocal" else "half"
    nm = build_norm_matrices(sys.mesh, sys.trace_mesh, sys.multiplier_mesh)
    return estimate_discrete_infsup(sys.B, nm.X_V(surface), nm.X_surf_minus_half)


def kernel_basis(B) -> np.ndarray:
    B = np.asarray(B.toarray() if sp.issparse(B) else B, dtype=float)
    return sla.null_space(B)


def garding_constant(sys: PdaeSystem, surface: str = None) -> float:
    """Largest ``c`` with ``x^T A x >= c x^T X_V x`` on ``ker B`` (dense, desk scale)."""
    if surface is None:
        surface = "one" if sys.formulation == "nonlocal" else "half"
    nm = build_norm_matrices(sys.mesh, sys.trace_mesh, sys.multiplier_mesh)
    Z = kernel_basis(sys.B)
    A = sys.A.toarray()
    Ar = Z.T @ (0.5 * (A + A.T)) @ Z
    Xr = Z.T @ nm.X_V(surface) @ Z
    return float(sla.eigh(Ar, 0.5 * (Xr + Xr.T), eigvals_only=True)[0])
