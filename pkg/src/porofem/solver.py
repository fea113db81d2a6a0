"""Per-step block system assembly, sparse direct solve and backward Euler
marching with initial-condition projections.

The step system is symmetrized by scaling the flux equation with dt and
negating the mass-conservation row:

    [ A        0        alpha*B^T ] [u]   [ F_u                                ]
    [ 0        dt*M     dt*B^T    ] [z] = [ dt*F_z                             ]
    [ alpha*B  dt*B    -(c0*Q+J)  ] [p]   [-dt*F_p + alpha*B*u_prev - (c0*Q+J)*p_prev]

with an optional trailing row/column enforcing a zero pressure mean.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import assembly, fespace

RESIDUAL_TOL = 1e-10


class SolverError(Exception):
    pass


class SingularSystemError(SolverError):
    pass


@dataclass
class State:
    t: float
    u: np.ndarray
    z: np.ndarray
    p: np.ndarray


@dataclass
class Trajectory:
    states: list
    dt: float

    def __iter__(self):
        return iter(self.states)

    def __len__(self):
        return len(self.states)

    def __getitem__(self, i):
        return self.states[i]

    @property
    def final(self):
        return self.states[-1]


@dataclass
class BlockSystem:
    K: sp.csr_matrix
    rhs: np.ndarray
    layout: object
    dt: float


def assemble_operator_matrices(mesh, params):
    """All time-independent matrices of the step system."""
    return {
        "A": assembly.assemble_elasticity(mesh, params),
        "M": assembly.assemble_darcy_mass(mesh, params),
        "B": assembly.assemble_divergence(mesh),
        "Q": assembly.assemble_pressure_mass(mesh),
        "J": assembly.assemble_jump_stabilization(mesh, params.delta),
    }


def build_block_matrix(matrices, dt, params, layout, mesh=None):
    """The symmetric step matrix; structurally symmetric by construction."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    A, M, B, Q, J = (matrices[k] for k in "AMBQJ")
    if A.shape[0] != layout.n_u or B.shape[0] != layout.n_p:
        raise ValueError("matrix shapes do not match the DOF layout")
    a = params.alpha
    BT = B.T.tocsr()
    Kpp = -(params.c0 * Q + J)
    blocks = [
        [A, None, a * BT],
        [None, dt * M, dt * BT],
        [a * B, dt * B, Kpp],
    ]
    if layout.pressure_mean_constraint:
        if mesh is None:
            raise ValueError("mesh required for the mean-pressure multiplier")
        vols = sp.csr_matrix(mesh.volumes().reshape(-1, 1))
        blocks[0].append(None)
        blocks[1].append(None)
        blocks[2].append(vols)
        blocks.append([None, None, vols.T, None])
    return sp.bmat(blocks, format="csr")


def build_block_rhs(loads, prev, dt, params, layout, matrices):
    F_u, F_z, F_p = loads
    B, Q, J = matrices["B"], matrices["Q"], matrices["J"]
    rhs_p = -dt * F_p + params.alpha * (B @ prev.u) - params.c0 * (Q @ prev.p) - J @ prev.p
    parts = [F_u, dt * F_z, rhs_p]
    if layout.pressure_mean_constraint:
        parts.append(np.zeros(1))
    return np.concatenate(parts)


def build_block_system(matrices, loads, prev, dt, params, layout, mesh=None):
    K = build_block_matrix(matrices, dt, params, layout, mesh=mesh)
    rhs = build_block_rhs(loads, prev, dt, params, layout, matrices)
    return BlockSystem(K, rhs, layout, dt)


def _suspect_dof(K):
    """Best-effort diagnosis of a structurally singular matrix."""
    csr = K.tocsr()
    counts = np.diff(csr.indptr)
    empty = np.flatnonzero(counts == 0)
    if len(empty):
        return int(empty[0])
    diag = np.abs(csr.diagonal())
    return int(np.argmin(diag))


class _SpluFactor:
    def __init__(self, K):
        try:
            self.lu = spla.splu(K.tocsc())
        except RuntimeError as exc:
            raise SingularSystemError(
                f"factorization failed ({exc}); suspect dof {_suspect_dof(K)}"
            ) from exc

    def solve(self, b):
        return self.lu.solve(b)


class _BorderedFactor:
    """Factorization of [[K0, v], [v^T, 0]] avoiding fill-in from the dense
    multiplier row.

    K0 is singular exactly on the constant-pressure mode, so K0 + tau e_k e_k^T
    (a single diagonal bump on one pressure DOF) is nonsingular and sparse.
    The bordered solution is recovered through a 2x2 Woodbury correction.
    """

    def __init__(self, K, bump_dof):
        K = K.tocsc()
        n = K.shape[0] - 1
        self.n = n
        self.v = np.asarray(K[:n, n].todense()).ravel()
        K0 = K[:n, :n].tolil()
        diag = np.abs(K.diagonal())
        self.tau = max(1.0, diag.max())
        K0[bump_dof, bump_dof] += self.tau
        self.k = bump_dof
        self.base = _SpluFactor(K0.tocsc())
        ek = np.zeros(n)
        ek[bump_dof] = 1.0
        self.w1 = self.base.solve(ek)   # K_hat^{-1} e_k
        self.w2 = self.base.solve(self.v)  # K_hat^{-1} v

    def solve(self, b):
        b0, c = b[:self.n], b[self.n]
        x0 = self.base.solve(b0)
        # unknowns s = e_k^T x and mu; x = x0 + tau*s*w1 - mu*w2
        a11 = 1.0 - self.tau * self.w1[self.k]
        a12 = self.w2[self.k]
        a21 = -self.tau * (self.v @ self.w1)
        a22 = self.v @ self.w2
        rhs = np.array([x0[self.k], self.v @ x0 - c])
        det = a11 * a22 - a12 * a21
        if det == 0.0 or not np.isfinite(det):
            raise SingularSystemError("bordered multiplier solve is singular")
        s = (a22 * rhs[0] - a12 * rhs[1]) / det
        mu = (-a21 * rhs[0] + a11 * rhs[1]) / det
        x = x0 + (self.tau * s) * self.w1 - mu * self.w2
        return np.concatenate([x, [mu]])


def factorize(K, layout=None):
    """Sparse direct factorization; systems with the trailing mean-pressure
    multiplier row are solved in bordered form."""
    if layout is not None and layout.pressure_mean_constraint:
        return _BorderedFactor(K, layout.p_dof(0))
    return _SpluFactor(K)


def sparse_solve(system, factor=None):
    """Direct solve with a relative-residual guarantee of 1e-10.

    A few steps of iterative refinement recover small residuals on badly
    scaled systems (extreme permeability contrasts).
    """
    K, rhs = system.K, system.rhs
    if not np.all(np.isfinite(rhs)):
        raise SolverError("right-hand side contains non-finite values")
    lu = factor if factor is not None else factorize(K, system.layout)
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError(
            f"solution contains non-finite values; suspect dof {_suspect_dof(K)}")
    rnorm = np.linalg.norm(rhs)
    if rnorm == 0:
        return x
    rel = np.linalg.norm(K @ x - rhs) / rnorm
    for _ in range(3):
        if rel <= 0.01 * RESIDUAL_TOL:
            break
        x = x + lu.solve(rhs - K @ x)
        new_rel = np.linalg.norm(K @ x - rhs) / rnorm
        if new_rel >= rel:
            break
        rel = new_rel
    if rel > RESIDUAL_TOL:
        raise SolverError(f"residual {rel:.3e} exceeds {RESIDUAL_TOL:.0e}")
    return x


class TimeStepper:
    """Caches the eliminated, rotated step matrix and its factorization.

    The constraint *structure* (which DOFs) is fixed over the run; only the
    prescribed values are re-evaluated each step.
    """

    def __init__(self, problem, mesh, dt):
        self.problem = problem
        self.mesh = mesh
        self.dt = dt
        self.layout = fespace.make_layout(
            mesh, pressure_mean_constraint=problem.pressure_mean_constraint)
        self.matrices = assemble_operator_matrices(mesh, problem.params)
        self.K = build_block_matrix(self.matrices, dt, problem.params,
                                    self.layout, mesh=mesh)

        self.flux_bcs = []
        for bc in problem.bcs_of_kind("flux"):
            cons = fespace.collect_flux_normal(mesh, self.layout, bc.markers,
                                               bc.field, 0.0)
            self.flux_bcs.append((bc, cons))
        all_flux = [c for _, cons in self.flux_bcs for c in cons]
        self.T = assembly.flux_rotation(self.layout, all_flux) if all_flux else None
        K_rot = (self.T.T @ self.K @ self.T).tocsr() if self.T is not None else self.K

        self.extra_pins = (problem.extra_dirichlet(mesh, self.layout)
                           if problem.extra_dirichlet else {})
        self.cdofs = self._constraint_dofs()
        self.K_rot = K_rot
        self.K_elim = assembly.eliminate_matrix(K_rot, self.cdofs)
        self.lu = factorize(self.K_elim, self.layout)
        self.traction = [(bc.markers, bc.field)
                         for bc in self.problem.bcs_of_kind("traction")
                         if bc.field is not None]
        self.pressure = [(bc.markers, bc.field)
                         for bc in self.problem.bcs_of_kind("pressure")
                         if bc.field is not None]

    def _constraint_dofs(self):
        dofs = set(self.extra_pins)
        for bc in self.problem.bcs_of_kind("displacement"):
            cons = fespace.collect_dirichlet(self.mesh, self.layout, bc.markers,
                                             bc.field or fespace.constant_field(
                                                 np.zeros(self.mesh.dim)),
                                             0.0, components=bc.components)
            dofs.update(cons)
        for _, cons in self.flux_bcs:
            dofs.update(self.layout.z_dof(v, 0) for v, _, _ in cons)
        return np.array(sorted(dofs), dtype=np.int64)

    def constraint_values(self, t):
        values = dict(self.extra_pins)
        for bc in self.problem.bcs_of_kind("displacement"):
            cons = fespace.collect_dirichlet(self.mesh, self.layout, bc.markers,
                                             bc.field or fespace.constant_field(
                                                 np.zeros(self.mesh.dim)),
                                             t, components=bc.components)
            values.update(cons)
        for bc, cons in self.flux_bcs:
            if bc.field is None:
                values.update((self.layout.z_dof(v, 0), val) for v, _, val in cons)
            else:
                fresh = fespace.collect_flux_normal(self.mesh, self.layout,
                                                    bc.markers, bc.field, t)
                values.update((self.layout.z_dof(v, 0), val) for v, _, val in fresh)
        return np.array([values[d] for d in self.cdofs], dtype=float)

    def step(self, prev, t):
        """One backward-Euler step from `prev` to time t."""
        p = self.problem
        loads = assembly.assemble_loads(self.mesh, self.layout, t,
                                        f=p.f, b=p.b, g=p.g,
                                        traction=self.traction,
                                        pressure_bc=self.pressure)
        rhs = build_block_rhs(loads, prev, self.dt, p.params, self.layout,
                              self.matrices)
        if self.T is not None:
            rhs = self.T.T @ rhs
        vals = self.constraint_values(t)
        rhs_e = assembly.eliminated_rhs(self.K_rot, rhs, self.cdofs, vals)
        x = sparse_solve(BlockSystem(self.K_elim, rhs_e, self.layout, self.dt),
                         factor=self.lu)
        if self.T is not None:
            x = self.T @ x
        u, z, pvec = self.layout.split(x)
        return State(t, u.copy(), z.copy(), pvec.copy())


def project_initial(problem, mesh, layout=None, matrices=None):
    """Initial state: elliptic a-projection for u, P0 L2 projection for p,
    nodal interpolation for z (output only)."""
    layout = layout or fespace.make_layout(
        mesh, pressure_mean_constraint=problem.pressure_mean_constraint)
    d = mesh.dim
    u0 = np.zeros(layout.n_u)
    if problem.initial_u is not None:
        A = (matrices or {}).get("A")
        if A is None:
            A = assembly.assemble_elasticity(mesh, problem.params)
        rhs = A @ fespace.interpolate_p1(mesh, problem.initial_u)
        constraints = {}
        for bc in problem.bcs_of_kind("displacement"):
            constraints.update(fespace.collect_dirichlet(
                mesh, layout, bc.markers, problem.initial_u, 0.0,
                components=bc.components))
        if problem.extra_dirichlet:
            constraints.update(problem.extra_dirichlet(mesh, layout))
        advice = ("initial a-projection is singular; add a Dirichlet, mean or "
                  "rigid-body constraint")
        if not constraints:
            # rigid translations lie in the kernel of both operator modes
            raise SolverError(advice)
        Ke, be = assembly.apply_dirichlet(A, rhs, constraints)
        try:
            lu = factorize(Ke)
            u0 = lu.solve(be)
        except SingularSystemError as exc:
            raise SolverError(advice) from exc
        if not np.all(np.isfinite(u0)):
            raise SolverError(advice)
        bnorm = np.linalg.norm(be)
        if bnorm > 0 and np.linalg.norm(Ke @ u0 - be) / bnorm > 1e-8:
            raise SolverError(advice)
    p0 = np.zeros(layout.n_p)
    if problem.initial_p is not None:
        p0 = fespace.project_p0(mesh, problem.initial_p)
    z0 = np.zeros(layout.n_z)
    if problem.initial_z is not None:
        z0 = fespace.interpolate_p1(mesh, problem.initial_z)
    return State(0.0, u0, z0, p0)


def backward_euler_run(problem, resolution=None, T=None, dt=None,
                       observers=(), initial_state=None, mesh=None):
    """March the fully implicit scheme over [0, T]; T must be a multiple of dt.

    Returns the Trajectory of N+1 states; observers are called per step with
    (n, t_n, state).
    """
    mesh = mesh if mesh is not None else problem.build_mesh(resolution)
    T = problem.T if T is None else T
    dt = problem.dt if dt is None else dt
    nsteps = int(round(T / dt))
    if abs(nsteps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError("T must be an integer multiple of dt")
    stepper = TimeStepper(problem, mesh, dt)
    state = initial_state if initial_state is not None else project_initial(
        problem, mesh, stepper.layout, stepper.matrices)
    states = [state]
    for obs in observers:
        obs(0, 0.0, state)
    for n in range(1, nsteps + 1):
        t = n * dt
        try:
            state = stepper.step(state, t)
        except SolverError as exc:
            raise SolverError(f"step {n} (t={t:g}) failed: {exc}") from exc
        states.append(state)
        for obs in observers:
            obs(n, t, state)
    return Trajectory(states, dt)
