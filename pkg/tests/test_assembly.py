import numpy as np
import pytest
import scipy.sparse as sp
import sympy

from dynbc import assembly as asm
from dynbc.mesh import (
    build_independent_boundary_mesh,
    build_interval_mesh,
    build_square_mesh,
    extract_boundary_mesh,
)

MESHES = [build_interval_mesh(2), build_interval_mesh(5, -1, 2), build_square_mesh(1), build_square_mesh(3)]


def dense(A):
    return A.toarray()


def assert_symmetric(A):
    D = dense(A)
    assert np.max(np.abs(D - D.T)) <= 1e-14 * max(np.max(np.abs(D)), 1e-300)


def assert_csr_canonical(A):
    assert A.has_sorted_indices
    assert np.all(A.data != 0)


def test_mass_bulk_interval_example():
    M = dense(asm.assemble_mass_bulk(build_interval_mesh(2)))
    assert np.allclose(np.diag(M), [1 / 6, 1 / 3, 1 / 6], atol=1e-15)
    assert np.allclose([M[0, 1], M[1, 2]], 1 / 12, atol=1e-15)
    assert M[0, 2] == 0


@pytest.mark.parametrize("mesh", MESHES)
def test_mass_bulk_properties(mesh):
    M = asm.assemble_mass_bulk(mesh)
    assert_symmetric(M)
    assert_csr_canonical(M)
    one = np.ones(mesh.n_nodes)
    assert abs(one @ M @ one - mesh.element_measures().sum()) <= 1e-12
    assert np.linalg.eigvalsh(dense(M)).min() > 0


def test_stiffness_interval_example():
    K = dense(asm.assemble_stiffness_bulk(build_interval_mesh(2), 1.0))
    assert np.allclose(K, [[2, -2, 0], [-2, 4, -2], [0, -2, 2]], atol=1e-14)


@pytest.mark.parametrize("mesh", MESHES)
@pytest.mark.parametrize("kappa", [1.0, lambda X: 1 + X[:, 0] ** 2 + 0.5 * X[:, -1]])
def test_stiffness_kills_constants(mesh, kappa):
    K = asm.assemble_stiffness_bulk(mesh, kappa)
    assert_symmetric(K)
    assert np.max(np.abs(K @ np.ones(mesh.n_nodes))) <= 1e-12
    assert np.linalg.eigvalsh(dense(K)).min() > -1e-12


def test_stiffness_variable_kappa_symbolic():
    x = sympy.symbols("x")
    mesh = build_interval_mesh(2)
    K = dense(asm.assemble_stiffness_bulk(mesh, lambda X: 1 + X[:, 0]))
    h = sympy.Rational(1, 2)
    ref = np.zeros((3, 3))
    for e in range(2):
        a = e * h
        val = float(sympy.integrate((1 + x) / h**2, (x, a, a + h)))
        ref[np.ix_([e, e + 1], [e, e + 1])] += val * np.array([[1, -1], [-1, 1]])
    assert np.max(np.abs(K - ref)) <= 1e-12


def test_stiffness_rejects_nonpositive_kappa():
    with pytest.raises(asm.AssemblyError):
        asm.assemble_stiffness_bulk(build_interval_mesh(4), lambda X: X[:, 0] - 0.5)


def test_coefficient_set_validation():
    with pytest.raises(ValueError):
        asm.CoefficientSet(c_kappa=0.0)
    with pytest.raises(ValueError):
        asm.CoefficientSet(beta=-1.0)


def test_boundary_mass_examples():
    bm1 = extract_boundary_mesh(build_interval_mesh(3))
    assert np.array_equal(dense(asm.assemble_mass_boundary(bm1)), np.eye(2))
    bm = extract_boundary_mesh(build_square_mesh(2))
    M = dense(asm.assemble_mass_boundary(bm))
    assert np.allclose(np.diag(M), 1 / 3) and np.isclose(M[0, 1], 1 / 12) and np.isclose(M[0, 7], 1 / 12)
    assert abs(M.sum() - 4) <= 1e-12
    assert_symmetric(asm.assemble_mass_boundary(bm))


def test_boundary_stiffness_examples():
    bm1 = extract_boundary_mesh(build_interval_mesh(3))
    assert np.array_equal(dense(asm.assemble_stiffness_boundary(bm1)), np.zeros((2, 2)))
    bm = extract_boundary_mesh(build_square_mesh(2))
    K = dense(asm.assemble_stiffness_boundary(bm))
    ref = 2 * (2 * np.eye(8) - np.roll(np.eye(8), 1, axis=1) - np.roll(np.eye(8), -1, axis=1))
    assert np.allclose(K, ref, atol=1e-14)
    assert np.max(np.abs(K.sum(axis=1))) <= 1e-12


def test_alpha_boundary_examples():
    bm1 = extract_boundary_mesh(build_interval_mesh(3))
    assert asm.assemble_alpha_boundary(bm1, 0.0).nnz == 0
    assert np.array_equal(dense(asm.assemble_alpha_boundary(bm1, 2.0)), 2 * np.eye(2))
    bm = extract_boundary_mesh(build_square_mesh(3))
    assert np.allclose(dense(asm.assemble_alpha_boundary(bm, 3.0)), 3 * dense(asm.assemble_mass_boundary(bm)))


def test_alpha_sin_symbolic():
    s = sympy.symbols("s")
    bm = extract_boundary_mesh(build_square_mesh(2))
    N = dense(asm.assemble_alpha_boundary(bm, lambda S: np.sin(2 * np.pi * S / 4), arc=True))
    assert_symmetric(sp.csr_matrix(N))
    h = sympy.Rational(1, 2)
    ref = np.zeros((8, 8))
    for e in range(8):
        a = e * h
        phi = [(a + h - s) / h, (s - a) / h]
        idx = [e, (e + 1) % 8]
        for i in range(2):
            for j in range(2):
                ref[idx[i], idx[j]] += float(
                    sympy.integrate(sympy.sin(2 * sympy.pi * s / 4) * phi[i] * phi[j], (s, a, a + h)))
    assert np.max(np.abs(N - ref)) <= 1e-10


def test_trace_matrix_examples():
    mesh = build_interval_mesh(2)
    T = dense(asm.assemble_trace_matrix(mesh, extract_boundary_mesh(mesh)))
    assert np.array_equal(T, [[1, 0, 0], [0, 0, 1]])
    mesh = build_square_mesh(2)
    bm = extract_boundary_mesh(mesh)
    T = asm.assemble_trace_matrix(mesh, bm)
    assert T.shape == (8, 9) and np.array_equal(T.sum(axis=1).A1, np.ones(8))
    assert np.array_equal(T @ np.full(9, 3.0), np.full(8, 3.0))
    assert np.allclose(T @ mesh.nodes, bm.points())


def test_trace_matrix_rejects_foreign_mesh():
    bm = extract_boundary_mesh(build_square_mesh(2))
    with pytest.raises(asm.AssemblyError):
        asm.assemble_trace_matrix(build_square_mesh(3), bm)


def test_coupling_matching():
    mesh = build_interval_mesh(3)
    bm = extract_boundary_mesh(mesh)
    T = asm.assemble_trace_matrix(mesh, bm)
    B = dense(asm.assemble_coupling(asm.CouplingSpec(bm, bm), T))
    assert np.array_equal(B, [[-1, 0, 0, 0, 1, 0], [0, 0, 0, -1, 0, 1]])
    mesh = build_square_mesh(3)
    bm = extract_boundary_mesh(mesh)
    T = asm.assemble_trace_matrix(mesh, bm)
    B = asm.assemble_coupling(asm.CouplingSpec(bm, bm), T)
    u = np.random.default_rng(1).normal(size=mesh.n_nodes)
    assert np.max(np.abs(B @ np.concatenate([u, T @ u]))) <= 1e-14
    assert np.linalg.matrix_rank(dense(B)) == bm.n_nodes
    # kernel dimension equals the number of bulk dofs
    assert B.shape[1] - np.linalg.matrix_rank(dense(B)) == mesh.n_nodes


def test_coupling_nonmatching_row_sums():
    mesh = build_square_mesh(2)
    trace = extract_boundary_mesh(mesh)
    mult = build_independent_boundary_mesh(4, 6, 0.0, curve=trace)
    C = asm.assemble_cross_mass(mult, trace)
    assert C.shape == (6, 8)
    assert np.allclose(C.sum(axis=1).A1, 2 / 3, atol=1e-12)
    assert abs(C.sum() - 4) <= 1e-12
    spec = asm.CouplingSpec(trace, mult)
    assert not spec.matching
    B = asm.assemble_coupling(spec, asm.assemble_trace_matrix(mesh, trace))
    assert B.shape == (6, 9 + 8)


def _periodic_hat(nodes, L, i, s):
    """Hat function ``i`` of the periodic mesh ``nodes`` evaluated by interpolation."""
    n = len(nodes)
    xs = np.concatenate([nodes - L, nodes, nodes + L])
    ys = np.zeros(3 * n)
    ys[[i, n + i, 2 * n + i]] = 1.0
    return np.interp(s, xs, ys)


def test_cross_mass_exact_with_offset():
    trace = extract_boundary_mesh(build_square_mesh(1))  # 4 segments of length 1
    mult = build_independent_boundary_mesh(4, 3, 0.25, curve=trace)
    C = dense(asm.assemble_cross_mass(mult, trace))
    L = 4.0
    tn = np.arange(4.0)
    mn = 0.25 + 4.0 / 3.0 * np.arange(3)
    # products of hats are quadratic between merged breakpoints: Simpson is exact there
    brk = np.unique(np.concatenate([tn, mn, [0.0, L]]))
    a, b = brk[:-1], brk[1:]
    m = 0.5 * (a + b)
    for i in range(3):
        for j in range(4):
            f = lambda x: _periodic_hat(mn, L, i, x) * _periodic_hat(tn, L, j, x)
            val = np.sum((b - a) / 6 * (f(a) + 4 * f(m) + f(b)))
            assert abs(C[i, j] - val) <= 1e-12


def test_coupling_spec_rejects_length_mismatch():
    trace = extract_boundary_mesh(build_square_mesh(2))
    with pytest.raises(asm.AssemblyError):
        asm.CouplingSpec(trace, build_independent_boundary_mesh(3.0, 6, 0.0))


def test_load_examples():
    mesh = build_interval_mesh(2)
    assert np.array_equal(asm.assemble_load(mesh, 0.0), np.zeros(3))
    b = asm.assemble_load(mesh, 1.0)
    assert np.allclose(b, asm.assemble_mass_bulk(mesh) @ np.ones(3)) and abs(b.sum() - 1) <= 1e-14
    x = sympy.symbols("x")
    b = asm.assemble_load(mesh, lambda X: X[:, 0])
    hats = [sympy.Max(0, 1 - sympy.Abs(x - c) * 2) for c in (0, sympy.Rational(1, 2), 1)]
    ref = [float(sympy.integrate(x * sympy.Piecewise((hh, True)), (x, 0, sympy.Rational(1, 2)))
                 + sympy.integrate(x * hh, (x, sympy.Rational(1, 2), 1))) for hh in hats]
    assert np.max(np.abs(b - ref)) <= 1e-12


def test_load_time_dependent_boundary():
    bm = extract_boundary_mesh(build_square_mesh(2))
    b = asm.assemble_load(bm, lambda X, t: t * np.ones(len(X)), t=2.0)
    assert abs(b.sum() - 8) <= 1e-12


def test_matrix_market_roundtrip(tmp_path):
    import scipy.io

    M = asm.assemble_mass_bulk(build_square_mesh(2))
    asm.export_matrix_market(tmp_path / "m.mtx", M)
    R = scipy.io.mmread(str(tmp_path / "m.mtx"))
    assert np.array_equal(R.toarray(), M.toarray())
