"""Direct and Schur-complement solvers for block saddle systems

    [ V  B^T ] [x]   [r1]
    [ B  0   ] [l] = [r2]
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "SaddleError",
    "SingularSaddleError",
    "IndefiniteBlockError",
    "SaddleOperator",
    "Factorization",
    "factorize",
    "solve",
    "schur_solve",
]

BACKWARD_TOL = 1e-12


class SaddleError(RuntimeError):
    pass


class SingularSaddleError(SaddleError):
    """Singular saddle matrix; ``block`` is ``"B"`` or ``"V"``."""

    def __init__(self, block: str, message: str):
        super().__init__(message)
        self.block = block


class IndefiniteBlockError(SaddleError):
    pass


@dataclass(frozen=True)
class SaddleOperator:
    V: sp.csr_matrix
    B: sp.csr_matrix
    matrix: sp.csc_matrix = field(init=False, repr=False)

    def __post_init__(self):
        V = sp.csr_matrix(self.V)
        B = sp.csr_matrix(self.B)
        if V.shape[0] != V.shape[1] or B.shape[1] != V.shape[0]:
            raise ValueError("incompatible blocks: V %s, B %s" % (V.shape, B.shape))
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "B", B)
        m = B.shape[0]
        if m:
            K = sp.bmat([[V, B.T], [B, sp.csr_matrix((m, m))]], format="csc")
        else:
            K = V.tocsc()
        object.__setattr__(self, "matrix", K)

    @property
    def n(self) -> int:
        return self.V.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[0]

    def dump(self, path) -> None:
        """MatrixMarket dump of the assembled block matrix."""
        scipy.io.mmwrite(str(path), self.matrix.tocoo(), precision=17)


def _row_rank(B: sp.spmatrix) -> int:
    if B.shape[0] == 0:
        return 0
    return int(np.linalg.matrix_rank(B.toarray()))


@dataclass(frozen=True)
class Factorization:
    op: SaddleOperator
    lu: object = field(repr=False)

    def solve(self, rhs) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        N = self.op.n + self.op.m
        if rhs.shape != (N,):
            raise ValueError("right-hand side has shape %s, expected (%d,)" % (rhs.shape, N))
        z = self.lu.solve(rhs)
        K = self.op.matrix
        r = rhs - K @ z
        scale = np.linalg.norm(rhs)
        if scale > 0 and np.linalg.norm(r) > 0.1 * BACKWARD_TOL * scale:
            z = z + self.lu.solve(r)
        return z


def factorize(op: SaddleOperator) -> Factorization:
    """Sparse LU of the full block matrix with a fixed COLAMD ordering.

    Raises :class:`SingularSaddleError` with ``block="B"`` when the
    constraint rows are linearly dependent and ``block="V"`` when ``V``
    restricted to the kernel of ``B`` is singular.
    """
    rank = _row_rank(op.B)
    if rank < op.m:
        raise SingularSaddleError(
            "B", "constraint block B is rank deficient (rank %d < %d rows)" % (rank, op.m)
        )
    try:
        lu = spla.splu(op.matrix, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SingularSaddleError("V", "V block is singular on ker B: %s" % exc) from None
    d = np.abs(lu.U.diagonal())
    if d.min() <= 1e-14 * d.max():
        raise SingularSaddleError("V", "V block is numerically singular on ker B")
    return Factorization(op, lu)


def solve(fact: Factorization, rhs) -> np.ndarray:
    return fact.solve(rhs)


def schur_solve(op: SaddleOperator, rhs, tol: float = 1e-12) -> np.ndarray:
    """Solve through the multiplier Schur complement ``B V^{-1} B^T`` with CG.

    Requires a symmetric positive definite ``V``.
    """
    rhs = np.asarray(rhs, dtype=float)
    n, m = op.n, op.m
    if rhs.shape != (n + m,):
        raise ValueError("right-hand side has shape %s, expected (%d,)" % (rhs.shape, n + m))
    V = op.V
    asym = abs(V - V.T).max() if V.nnz else 0.0
    if asym > 1e-12 * max(abs(V).max(), 1.0):
        raise IndefiniteBlockError("V block is not symmetric; use the direct solver")
    lam_min = np.linalg.eigvalsh(V.toarray())[0]
    if lam_min <= 0.0:
        raise IndefiniteBlockError(
            "V block is not positive definite (min eigenvalue %.3e); use the direct solver" % lam_min
        )
    Vlu = spla.splu(V.tocsc(), permc_spec="COLAMD")
    r1, r2 = rhs[:n], rhs[n:]
    if m == 0:
        return Vlu.solve(r1)
    B = op.B
    S = spla.LinearOperator((m, m), matvec=lambda y: B @ Vlu.solve(B.T @ y), dtype=float)
    b = B @ Vlu.solve(r1) - r2
    lam, info = spla.cg(S, b, rtol=tol, atol=0.0, maxiter=10 * m + 100)
    if info != 0:
        raise SaddleError("Schur complement CG did not converge (info=%d)" % info)
    x = Vlu.solve(r1 - B.T @ lam)
    return np.concatenate([x, lam])
