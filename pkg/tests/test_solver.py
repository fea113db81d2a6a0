import numpy as np
import pytest
import scipy.sparse as sp

from porofem import mesh as pm
from porofem import solver
from porofem.assembly import MaterialParams
from porofem.benchmarks import manufactured_2d
from porofem.fespace import (AnalyticField, constant_field, interpolate_p1,
                             make_layout)
from porofem.problems import BoundaryCondition, ProblemDefinition
from porofem.solver import (BlockSystem, SolverError, State, TimeStepper,
                            backward_euler_run, build_block_matrix,
                            build_block_system, project_initial, sparse_solve)


def make_problem(mesh_n=2, delta=1.0, mean=True):
    problem, exact = manufactured_2d(delta=delta)
    return problem, exact


def operator_set(mesh, params):
    return solver.assemble_operator_matrices(mesh, params)


def test_block_matrix_exactly_symmetric():
    problem, _ = make_problem()
    mesh = problem.build_mesh(2)
    layout = make_layout(mesh, pressure_mean_constraint=True)
    mats = operator_set(mesh, problem.params)
    K = build_block_matrix(mats, 0.1, problem.params, layout, mesh=mesh)
    asym = (K - K.T).toarray()
    assert np.max(np.abs(asym)) == 0.0


def test_block_rhs_zero_for_zero_state():
    problem, _ = make_problem()
    mesh = problem.build_mesh(2)
    layout = make_layout(mesh, pressure_mean_constraint=True)
    mats = operator_set(mesh, problem.params)
    zero = State(0.0, np.zeros(layout.n_u), np.zeros(layout.n_z),
                 np.zeros(layout.n_p))
    rhs = solver.build_block_rhs((np.zeros(layout.n_u), np.zeros(layout.n_z),
                                  np.zeros(layout.n_p)), zero, 0.1,
                                 problem.params, layout, mats)
    assert not rhs.any()


def test_block_matrix_rejects_bad_dt():
    problem, _ = make_problem()
    mesh = problem.build_mesh(1)
    layout = make_layout(mesh)
    mats = operator_set(mesh, problem.params)
    with pytest.raises(ValueError):
        build_block_matrix(mats, 0.0, problem.params, layout, mesh=mesh)


def test_sparse_solve_identity():
    n = 11
    layout = make_layout(pm.unit_square_mesh(1))
    rhs = np.arange(n, dtype=float)
    system = BlockSystem(sp.identity(n, format="csr"), rhs, layout, 0.1)
    x = sparse_solve(system)
    assert np.allclose(x, rhs, atol=1e-14)


def test_sparse_solve_random_spd_vs_dense():
    rng = np.random.default_rng(12)
    G = rng.standard_normal((10, 10))
    A = G @ G.T + 10 * np.eye(10)
    rhs = rng.standard_normal(10)
    layout = make_layout(pm.unit_square_mesh(1))
    x = sparse_solve(BlockSystem(sp.csr_matrix(A), rhs, layout, 1.0))
    assert np.linalg.norm(A @ x - rhs) / np.linalg.norm(rhs) < 1e-12
    assert np.allclose(x, np.linalg.solve(A, rhs), atol=1e-10)


def test_sparse_solve_saddle_toy():
    # [[1, 1], [1, 0]] x = [3, 1] -> x = [1, 2]
    K = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 0.0]]))
    layout = make_layout(pm.unit_square_mesh(1))
    x = sparse_solve(BlockSystem(K, np.array([3.0, 1.0]), layout, 1.0))
    assert np.allclose(x, [1.0, 2.0], atol=1e-13)


def test_sparse_solve_singular_reports_dof():
    K = sp.csr_matrix(np.array([[1.0, 0.0], [0.0, 0.0]]))
    layout = make_layout(pm.unit_square_mesh(1))
    with pytest.raises(solver.SingularSystemError):
        sparse_solve(BlockSystem(K, np.array([1.0, 1.0]), layout, 1.0))


def test_step_matrix_nonsingular_vs_dense_determinant():
    # dense determinant oracle on the n=1 mesh across a kappa sweep
    problem, _ = manufactured_2d(delta=1.0)
    mesh = problem.build_mesh(1)
    for kappa in (1e-7, 1.0, 1e2):
        params = MaterialParams(lam=0.0, mu_s=0.5, kappa=kappa, alpha=1.0,
                                c0=0.0, delta=1.0,
                                operator_mode="vector_laplacian")
        stepper = TimeStepper(
            ProblemDefinition(name="t", mesh_recipe=lambda n: mesh,
                              params=params, bcs=problem.bcs, g=problem.g,
                              T=0.25, dt=0.25,
                              pressure_mean_constraint=True),
            mesh, 0.25)
        dense = stepper.K_elim.toarray()
        sign, logdet = np.linalg.slogdet(dense)
        assert sign != 0 and np.isfinite(logdet)
        zero = State(0.0, np.zeros(stepper.layout.n_u),
                     np.zeros(stepper.layout.n_z), np.zeros(stepper.layout.n_p))
        state = stepper.step(zero, 0.25)
        assert np.all(np.isfinite(state.p))


def test_project_initial_reproduces_fe_function():
    problem, _ = manufactured_2d()
    mesh = problem.build_mesh(3)
    lin = AnalyticField(lambda x, t: np.stack(
        [0.3 * x[..., 0] - 0.1 * x[..., 1], 0.25 * x[..., 1]], axis=-1))
    prob2 = ProblemDefinition(
        name="t", mesh_recipe=lambda n: mesh, params=problem.params,
        bcs=problem.bcs, initial_u=lin, initial_p=constant_field(2.0),
        T=1.0, dt=1.0, pressure_mean_constraint=True)
    state = project_initial(prob2, mesh)
    exact_u = interpolate_p1(mesh, lin)
    assert np.max(np.abs(state.u - exact_u)) < 1e-12
    assert np.allclose(state.p, 2.0, atol=1e-13)


def test_project_initial_zero_data():
    problem, _ = manufactured_2d()
    mesh = problem.build_mesh(2)
    state = project_initial(problem, mesh)
    assert not state.u.any() and not state.z.any()
    # p(x, 0) = 0 for the manufactured problem
    assert np.max(np.abs(state.p)) < 1e-15


def test_project_initial_singular_advice():
    # no Dirichlet anywhere and lam = 0: rigid modes make the a-projection singular
    mesh = pm.unit_square_mesh(2)
    params = MaterialParams(lam=0.0, mu_s=1.0)
    lin = AnalyticField(lambda x, t: x.copy())
    prob = ProblemDefinition(
        name="t", mesh_recipe=lambda n: mesh, params=params,
        bcs=[BoundaryCondition("traction", (1, 2, 3, 4), None),
             BoundaryCondition("flux", (1, 2, 3, 4), None)],
        initial_u=lin, T=1.0, dt=1.0)
    with pytest.raises(SolverError, match="constraint"):
        project_initial(prob, mesh)


def test_zero_data_zero_trajectory():
    problem, _ = manufactured_2d()
    mesh = problem.build_mesh(2)
    prob = ProblemDefinition(
        name="zero", mesh_recipe=lambda n: mesh, params=problem.params,
        bcs=[BoundaryCondition("displacement", (1, 2, 3, 4), None),
             BoundaryCondition("flux", (1, 2, 3, 4), None)],
        T=0.5, dt=0.1, pressure_mean_constraint=True)
    traj = backward_euler_run(prob, mesh=mesh)
    assert len(traj) == 6
    for s in traj:
        assert not s.u.any() and not s.z.any() and not s.p.any()


def test_trajectory_time_grid_and_observers():
    problem, _ = manufactured_2d()
    mesh = problem.build_mesh(2)
    seen = []
    traj = backward_euler_run(problem, mesh=mesh, T=0.25, dt=0.0625,
                              observers=[lambda n, t, s: seen.append((n, t))])
    assert [n for n, _ in seen] == [0, 1, 2, 3, 4]
    assert np.allclose([t for _, t in seen], [0, 0.0625, 0.125, 0.1875, 0.25])
    assert traj.final.t == 0.25


def test_run_requires_integer_steps():
    problem, _ = manufactured_2d()
    mesh = problem.build_mesh(1)
    with pytest.raises(ValueError):
        backward_euler_run(problem, mesh=mesh, T=0.25, dt=0.1)


def test_energy_decay_zero_data():
    # zero sources and homogeneous BCs: a(u,u) + J(p,p) is non-increasing
    problem, _ = manufactured_2d(delta=1.0)
    mesh = problem.build_mesh(4)
    prob = ProblemDefinition(
        name="decay", mesh_recipe=lambda n: mesh, params=problem.params,
        bcs=[BoundaryCondition("displacement", (1, 2, 3, 4), None),
             BoundaryCondition("flux", (1, 2, 3, 4), None)],
        T=1.0, dt=0.02, pressure_mean_constraint=True)
    stepper = TimeStepper(prob, mesh, 0.02)
    layout = stepper.layout
    rng = np.random.default_rng(42)
    u0 = rng.standard_normal(layout.n_u)
    for dof in stepper.cdofs:
        if dof < layout.n_u:
            u0[dof] = 0.0
    state = State(0.0, u0, np.zeros(layout.n_z), np.zeros(layout.n_p))
    A, J = stepper.matrices["A"], stepper.matrices["J"]

    def energy(s):
        return s.u @ (A @ s.u) + s.p @ (J @ s.p)

    energies = [energy(state)]
    traj = backward_euler_run(prob, mesh=mesh, dt=0.02, T=1.0,
                              initial_state=state)
    energies += [energy(s) for s in traj.states[1:]]
    energies = np.array(energies)
    assert len(energies) == 51
    assert np.all(np.diff(energies) <= 1e-12 * energies[0])


def test_refinement_reduces_final_h1_error():
    # manufactured 2D: the h=1/16, dt=1/64 run beats the h=1/8, dt=1/32 run
    from porofem.analysis import error_norms
    finals = {}
    for n in (8, 16):
        problem, exact = manufactured_2d(delta=1.0)
        mesh = problem.build_mesh(n)
        traj = backward_euler_run(problem, mesh=mesh, T=0.25, dt=1.0 / (4 * n))
        finals[n] = error_norms(mesh, traj.final, exact, delta=1.0)["u_H1"]
    assert finals[16] < finals[8]


def test_determinism_bitwise():
    problem, _ = manufactured_2d()
    mesh = problem.build_mesh(3)
    t1 = backward_euler_run(problem, mesh=mesh, T=0.125, dt=0.03125)
    t2 = backward_euler_run(problem, mesh=mesh, T=0.125, dt=0.03125)
    for a, b in zip(t1, t2):
        assert np.array_equal(a.u, b.u)
        assert np.array_equal(a.z, b.z)
        assert np.array_equal(a.p, b.p)


def test_build_block_system_residual():
    problem, _ = manufactured_2d()
    mesh = problem.build_mesh(2)
    layout = make_layout(mesh, pressure_mean_constraint=True)
    mats = operator_set(mesh, problem.params)
    prev = State(0.0, np.zeros(layout.n_u), np.zeros(layout.n_z),
                 np.zeros(layout.n_p))
    loads = (np.zeros(layout.n_u), np.zeros(layout.n_z), np.ones(layout.n_p))
    system = build_block_system(mats, loads, prev, 0.1, problem.params,
                                layout, mesh=mesh)
    x = sparse_solve(system)
    assert (np.linalg.norm(system.K @ x - system.rhs)
            / np.linalg.norm(system.rhs)) < 1e-10


def test_flux_constraint_enforced_at_vertices():
    problem, exact = manufactured_2d()
    mesh = problem.build_mesh(4)
    traj = backward_euler_run(problem, mesh=mesh, T=0.125, dt=0.03125)
    state = traj.final
    stepper = TimeStepper(problem, mesh, 0.03125)
    for bc, cons in stepper.flux_bcs:
        from porofem.fespace import collect_flux_normal
        fresh = collect_flux_normal(mesh, stepper.layout, bc.markers,
                                    bc.field, state.t)
        for v, nvec, val in fresh:
            zv = state.z.reshape(-1, 2)[v]
            assert zv @ nvec == pytest.approx(val, abs=1e-9)
