import numpy as np
import pytest
import scipy.sparse as sp

from dynbc.assembly import CoefficientSet
from dynbc.mesh import build_interval_mesh, build_square_mesh
from dynbc.pdae import build_wentzell_pdae
from dynbc.saddle import (
    IndefiniteBlockError,
    SaddleOperator,
    SingularSaddleError,
    factorize,
    schur_solve,
    solve,
)


def toy():
    return SaddleOperator(sp.identity(2, format="csr"), sp.csr_matrix([[1.0, -1.0]]))


def euler_operator(sys, tau):
    return SaddleOperator((sys.E / tau + sys.A).tocsr(), sys.B)


def test_toy_exact():
    op = toy()
    rhs = np.array([1.0, 0.0, 0.0])
    z = solve(factorize(op), rhs)
    dense = np.array([[1, 0, 1], [0, 1, -1], [1, -1, 0]], float)
    assert np.allclose(z, np.linalg.solve(dense, rhs), atol=1e-15)
    assert np.linalg.norm(op.matrix @ z - rhs) <= 1e-15


def test_wentzell_step_backward_error():
    sys = build_wentzell_pdae(build_interval_mesh(4), None, CoefficientSet(alpha=1.0))
    op = euler_operator(sys, 0.1)
    rhs = np.random.default_rng(0).normal(size=op.n + op.m)
    z = factorize(op).solve(rhs)
    assert np.linalg.norm(op.matrix @ z - rhs) / np.linalg.norm(rhs) <= 1e-12


def test_duplicated_row_names_B():
    B = sp.csr_matrix([[1.0, -1.0, 0.0], [1.0, -1.0, 0.0]])
    with pytest.raises(SingularSaddleError) as err:
        factorize(SaddleOperator(sp.identity(3, format="csr"), B))
    assert err.value.block == "B"


def test_singular_V_on_kernel_names_V():
    V = sp.csr_matrix(np.diag([1.0, 0.0, 0.0]))
    B = sp.csr_matrix([[0.0, 1.0, -1.0]])  # kernel contains (0, 1, 1), where V vanishes
    with pytest.raises(SingularSaddleError) as err:
        factorize(SaddleOperator(V, B))
    assert err.value.block == "V"


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        factorize(toy()).solve(np.zeros(2))
    with pytest.raises(ValueError):
        SaddleOperator(sp.identity(2, format="csr"), sp.csr_matrix([[1.0, 0.0, 0.0]]))


def test_schur_toy_agrees():
    op = toy()
    rhs = np.array([0.3, -2.0, 0.7])
    assert np.max(np.abs(schur_solve(op, rhs) - factorize(op).solve(rhs))) <= 1e-12


@pytest.mark.parametrize("n", [2, 4, 8])
def test_schur_wentzell_three_meshes(n):
    sys = build_wentzell_pdae(build_square_mesh(n), None, CoefficientSet(alpha=1.0))
    op = euler_operator(sys, 0.05)
    rhs = np.random.default_rng(n).normal(size=op.n + op.m)
    zd = factorize(op).solve(rhs)
    zs = schur_solve(op, rhs)
    assert np.linalg.norm(zs - zd) <= 1e-9 * np.linalg.norm(zd)


def test_schur_rejects_indefinite_block():
    # strongly negative alpha with a large step makes E/tau + A indefinite
    sys = build_wentzell_pdae(build_interval_mesh(4), None, CoefficientSet(alpha=-50.0))
    op = euler_operator(sys, 1.0)
    assert np.linalg.eigvalsh(op.V.toarray())[0] < 0
    with pytest.raises(IndefiniteBlockError, match="direct"):
        schur_solve(op, np.ones(op.n + op.m))


def test_factorization_reuse_bit_identical():
    sys = build_wentzell_pdae(build_square_mesh(4), None, CoefficientSet(alpha=1.0))
    fact = factorize(euler_operator(sys, 0.1))
    rhs = np.random.default_rng(3).normal(size=fact.op.n + fact.op.m)
    first = fact.solve(rhs)
    for _ in range(3):
        fact.solve(np.random.default_rng(4).normal(size=rhs.size))
        assert np.array_equal(fact.solve(rhs), first)
    assert np.array_equal(factorize(euler_operator(sys, 0.1)).solve(rhs), first)


def test_dump(tmp_path):
    import scipy.io

    op = toy()
    op.dump(tmp_path / "k.mtx")
    assert np.array_equal(scipy.io.mmread(str(tmp_path / "k.mtx")).toarray(), op.matrix.toarray())
