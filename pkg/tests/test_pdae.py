import json

import numpy as np
import pytest
import scipy.sparse as sp

from dynbc.assembly import CoefficientSet
from dynbc.mesh import build_interval_mesh, build_square_mesh, extract_boundary_mesh
from dynbc.pdae import (
    PdaeError,
    PdaeSystem,
    build_dirichlet_pdae,
    build_homogeneous_dirichlet,
    build_nonlocal_pdae,
    build_wentzell_pdae,
    consistent_init,
    validate_structure,
)
from dynbc.problems import build_case, l2_error_bulk, full_bulk_vector
from dynbc.timestepping import StepperConfig, integrate
from dynbc.verification.manufactured import make_manufactured_case

IE = lambda tau, T: StepperConfig("implicit_euler", tau, T)
RADAU = lambda tau, T: StepperConfig("radau_iia_2", tau, T)


def all_builders():
    c1 = CoefficientSet(alpha=1.0)
    yield build_homogeneous_dirichlet(build_interval_mesh(4), c1)
    yield build_dirichlet_pdae(build_square_mesh(3), c1, g=1.0)
    yield build_wentzell_pdae(build_interval_mesh(4), None, c1)
    yield build_wentzell_pdae(build_square_mesh(3), None, c1)
    yield build_nonlocal_pdae(build_square_mesh(3), None, CoefficientSet(alpha=1.0, beta=0.5))


@pytest.mark.parametrize("sys", list(all_builders()), ids=lambda s: s.formulation)
def test_shared_structure(sys):
    validate_structure(sys)
    assert isinstance(sys, PdaeSystem)
    doc = json.loads(sys.summary_json())
    assert doc["n_u"] == sys.n_u and doc["n_lambda"] == sys.n_lambda


def test_validator_rejects_redundant_constraints():
    sys = build_wentzell_pdae(build_interval_mesh(3), None, CoefficientSet())
    bad = PdaeSystem(**{**sys.__dict__, "B": sp.vstack([sys.B, sys.B[:1]]).tocsr(),
                        "constraint_data": lambda t: np.zeros(3)})
    with pytest.raises(PdaeError, match="rank"):
        validate_structure(bad)


def test_validator_rejects_indefinite_mass():
    sys = build_homogeneous_dirichlet(build_interval_mesh(4), CoefficientSet())
    bad = PdaeSystem(**{**sys.__dict__, "E": (-sys.E).tocsr()})
    with pytest.raises(PdaeError, match="positive definite"):
        validate_structure(bad)


def test_homogeneous_dirichlet_zero():
    sys = build_homogeneous_dirichlet(build_interval_mesh(8), CoefficientSet())
    traj = integrate(sys, consistent_init(sys, 0.0), IE(0.1, 0.5))
    assert np.all(traj.states == 0)


def test_homogeneous_dirichlet_separation_of_variables():
    # u = exp(-pi^2 t) sin(pi x); error O(h^2 + tau)
    errs = []
    for n in (8, 16, 32):
        sys = build_homogeneous_dirichlet(build_interval_mesh(n), CoefficientSet())
        init = consistent_init(sys, lambda X: np.sin(np.pi * X[:, 0]))
        tau = 0.4 / n**2
        T = 0.1
        traj = integrate(sys, init, IE(T / round(T / tau), T))
        u = full_bulk_vector(sys, traj.states[-1])
        errs.append(l2_error_bulk(sys.mesh, u, lambda X: np.exp(-np.pi**2 * T) * np.sin(np.pi * X[:, 0])))
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert errs[-1] < 2e-3 and np.all(rates > 1.8)


def test_homogeneous_dirichlet_steady_limit():
    mesh = build_interval_mesh(10)
    sys = build_homogeneous_dirichlet(mesh, CoefficientSet(), f=1.0)
    load = sys.load(0.0)
    steady = np.linalg.solve(sys.A.toarray(), load)
    traj = integrate(sys, consistent_init(sys, 0.0), IE(0.5, 20.0))
    assert np.max(np.abs(traj.states[-1] - steady)) <= 1e-10
    # and the stationary discrete solution is the exact nodal x(1-x)/2
    x = mesh.nodes[sys.free_nodes, 0]
    assert np.allclose(steady, x * (1 - x) / 2, atol=1e-12)


def test_dirichlet_zero_data():
    sys = build_dirichlet_pdae(build_interval_mesh(6), CoefficientSet(), g=0.0)
    traj = integrate(sys, consistent_init(sys, 0.0), IE(0.1, 0.5))
    assert np.all(traj.states == 0) and np.all(traj.multipliers == 0)


def test_dirichlet_constant_steady_state():
    for mesh in (build_interval_mesh(6), build_square_mesh(3)):
        sys = build_dirichlet_pdae(mesh, CoefficientSet(), g=1.0)
        traj = integrate(sys, consistent_init(sys, 1.0), RADAU(0.1, 0.5))
        assert np.max(np.abs(traj.states - 1)) <= 1e-12
        assert np.max(np.abs(traj.multipliers)) <= 1e-10


def test_dirichlet_manufactured_data():
    case = make_manufactured_case("dirichlet_1d_poly")
    X = np.array([[0.0], [0.3], [1.0]])
    assert np.allclose(case.f(X, 0.7), -np.exp(-0.7) * (X[:, 0] ** 2 + 3))
    sys, init = build_case(case, 8)
    assert init.consistency_residual <= 1e-12


def test_dirichlet_rejects_bad_g():
    with pytest.raises(PdaeError):
        build_dirichlet_pdae(build_interval_mesh(4), CoefficientSet(), g=lambda X, t: X[:0, 0])


def test_wentzell_zero_and_constants():
    mesh = build_square_mesh(3)
    sys = build_wentzell_pdae(mesh, None, CoefficientSet())
    traj = integrate(sys, consistent_init(sys, 0.0), IE(0.1, 0.3))
    assert np.all(traj.states == 0)
    traj = integrate(sys, consistent_init(sys, 2.5), RADAU(0.1, 0.3))
    assert np.max(np.abs(traj.states - 2.5)) <= 1e-12


def test_wentzell_requires_beta_zero():
    with pytest.raises(PdaeError, match="beta"):
        build_wentzell_pdae(build_interval_mesh(4), None, CoefficientSet(beta=1.0))


def test_nonlocal_errors():
    with pytest.raises(PdaeError):
        build_nonlocal_pdae(build_interval_mesh(4), None, CoefficientSet(beta=1.0))
    with pytest.raises(PdaeError):
        build_nonlocal_pdae(build_square_mesh(2), None, CoefficientSet(beta=0.0))


def test_nonlocal_zero():
    sys = build_nonlocal_pdae(build_square_mesh(3), None, CoefficientSet(beta=1.0))
    traj = integrate(sys, consistent_init(sys, 0.0), IE(0.1, 0.3))
    assert np.all(traj.states == 0)


def test_nonlocal_surface_heat_flow_feeds_bulk():
    mesh = build_square_mesh(8)
    sys = build_nonlocal_pdae(mesh, None, CoefficientSet(kappa=0.1, c_kappa=0.1, beta=1.0))
    bm = extract_boundary_mesh(mesh)
    p0 = np.sin(2 * np.pi * bm.arc_coords / bm.length)
    init = consistent_init(sys, 0.0, p0)
    assert init.consistency_residual <= 1e-12
    traj = integrate(sys, init, IE(0.01, 0.5))
    assert np.all(np.diff(traj.energy) <= 1e-12 * traj.energy[0])
    assert traj.energy[-1] < 0.5 * traj.energy[0]
    assert np.max(np.abs(traj.multipliers[0])) > 0  # the multiplier transmits the boundary data


def test_consistent_init_matching_exact():
    sys = build_wentzell_pdae(build_square_mesh(3), None, CoefficientSet())
    init = consistent_init(sys, lambda X: X[:, 0] * X[:, 1])
    assert init.consistency_residual == 0.0
    assert np.array_equal(init.p0, sys.trace_matrix @ init.u0)


def test_consistent_init_projection():
    sys = build_wentzell_pdae(build_square_mesh(3), None, CoefficientSet())
    u0 = np.random.default_rng(2).normal(size=sys.n_u)
    eps = 1e-3
    p_raw = sys.trace_matrix @ u0 + eps
    init = consistent_init(sys, u0, p_raw)
    assert init.consistency_residual <= 1e-12
    move = np.concatenate([init.u0 - u0, init.p0 - p_raw])
    assert 0 < np.linalg.norm(move) <= 10 * eps * np.sqrt(sys.n)
    # E-orthogonality of the projection: the correction is E-orthogonal to ker B
    Z = np.vstack([np.eye(sys.n_u), sys.trace_matrix.toarray()])
    assert np.max(np.abs(Z.T @ (sys.E @ move))) <= 1e-12


def test_consistent_init_dirichlet_and_inconsistent_warning():
    sys = build_dirichlet_pdae(build_interval_mesh(4), CoefficientSet(), g=lambda X, t: 1 + t)
    assert consistent_init(sys, 1.0).consistency_residual <= 1e-12
    off = build_wentzell_pdae(build_interval_mesh(4), None, CoefficientSet(), constraint_offset=0.5)
    init = consistent_init(off, 0.0)  # projects onto B x = 0.5
    assert init.consistency_residual <= 1e-12
    from dynbc.pdae import InitialState

    bad = InitialState(np.zeros(off.n_u), np.zeros(off.n_p), off.constraint_residual(np.zeros(off.n), 0.0))
    with pytest.warns(RuntimeWarning, match="violates"):
        integrate(off, bad, IE(0.1, 0.2))
