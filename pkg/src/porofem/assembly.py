"""Global sparse matrices and load vectors for the three-field system.

Sign conventions follow the per-step block form: the divergence coupling B has
entries b_{ij} = -integral(psi_i * div(phi_j)), so the momentum rows read
A u + alpha B^T p and the (negated) mass-conservation row reads
alpha B u + dt B z - (c0 Q + J) p.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fespace import cell_gradients
from .quadrature import facet_rule, simplex_rule

OPERATOR_MODES = ("full_biot", "vector_laplacian")


@dataclass
class MaterialParams:
    lam: float = 1.0          # Lame first parameter
    mu_s: float = 1.0         # shear modulus
    kappa: object = 1.0       # scalar or SPD (d, d) dynamic permeability
    alpha: float = 1.0        # Biot-Willis constant
    c0: float = 0.0           # storage coefficient
    delta: float = 1.0        # jump-stabilization penalty
    operator_mode: str = "full_biot"

    def __post_init__(self):
        if self.mu_s <= 0:
            raise ValueError("mu_s must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.alpha <= 0 or self.alpha > 1:
            raise ValueError("alpha must be in (0, 1]")
        if self.c0 < 0:
            raise ValueError("c0 must be nonnegative")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.operator_mode not in OPERATOR_MODES:
            raise ValueError(f"operator_mode must be one of {OPERATOR_MODES}")
        k = np.asarray(self.kappa, dtype=float)
        if k.ndim == 0:
            if k <= 0:
                raise ValueError("kappa must be positive")
        else:
            if not np.allclose(k, k.T) or np.linalg.eigvalsh(k).min() <= 0:
                raise ValueError("kappa tensor must be symmetric positive definite")

    def kappa_inv(self, dim):
        k = np.asarray(self.kappa, dtype=float)
        if k.ndim == 0:
            return np.eye(dim) / float(k)
        return np.linalg.inv(k)


def _vector_dofs(mesh):
    """Global vector-P1 dof indices per cell, shape (C, (d+1)*d)."""
    d = mesh.dim
    return (d * mesh.cells[:, :, None] + np.arange(d)).reshape(len(mesh.cells), -1)


def _scatter(local, dofs, n):
    """Sum (C, m, m) element blocks into an n x n CSR matrix."""
    C, m = dofs.shape
    rows = np.repeat(dofs, m, axis=1).ravel()
    cols = np.tile(dofs, (1, m)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_elasticity(mesh, params):
    """Stiffness A: symmetric-gradient form in full_biot mode, component-wise
    Laplacian in vector_laplacian mode."""
    d = mesh.dim
    G = cell_gradients(mesh)                  # (C, d+1, d)
    vol = mesh.volumes()
    gij = np.einsum("cia,cja->cij", G, G)     # grad(lam_i) . grad(lam_j)
    eye = np.eye(d)
    if params.operator_mode == "vector_laplacian":
        local = np.einsum("cij,ab->ciajb", gij, eye)
    else:
        local = (params.mu_s * np.einsum("cij,ab->ciajb", gij, eye)
                 + params.mu_s * np.einsum("cib,cja->ciajb", G, G)
                 + params.lam * np.einsum("cia,cjb->ciajb", G, G))
    local = local * vol[:, None, None, None, None]
    m = (d + 1) * d
    return _scatter(local.reshape(len(mesh.cells), m, m), _vector_dofs(mesh),
                    d * mesh.num_vertices)


def assemble_darcy_mass(mesh, params):
    """Mass matrix M with kappa^{-1} weight; SPD."""
    d = mesh.dim
    kinv = params.kappa_inv(d)
    vol = mesh.volumes()
    nv = d + 1
    mass = (np.ones((nv, nv)) + np.eye(nv)) / ((d + 1) * (d + 2))
    local = np.einsum("c,ij,ab->ciajb", vol, mass, kinv)
    m = nv * d
    return _scatter(local.reshape(len(mesh.cells), m, m), _vector_dofs(mesh),
                    d * mesh.num_vertices)


def assemble_divergence(mesh):
    """B with rows indexed by cells: b_{cj} = -vol(c) * div(phi_j) on cell c."""
    d = mesh.dim
    G = cell_gradients(mesh)
    vol = mesh.volumes()
    local = -G * vol[:, None, None]           # (C, d+1, d)
    C = len(mesh.cells)
    rows = np.repeat(np.arange(C), (d + 1) * d)
    cols = _vector_dofs(mesh).ravel()
    return sp.coo_matrix((local.reshape(C, -1).ravel(), (rows, cols)),
                         shape=(C, d * mesh.num_vertices)).tocsr()


def assemble_pressure_mass(mesh):
    """Diagonal P0 mass matrix Q with cell volumes."""
    return sp.diags(mesh.volumes()).tocsr()


def assemble_jump_stabilization(mesh, delta):
    """Pressure-jump penalty J: each interior facet f between cells (T, S)
    contributes delta * h(f) * |f| * [[1,-1],[-1,1]]."""
    if not mesh.facets:
        raise ValueError("facets not built")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    C = len(mesh.cells)
    rows, cols, data = [], [], []
    for f in mesh.facets:
        if not f.interior:
            continue
        T, S = f.cells
        w = delta * f.h * f.measure
        rows += [T, S, T, S]
        cols += [T, S, S, T]
        data += [w, w, -w, -w]
    J = sp.coo_matrix((data, (rows, cols)), shape=(C, C)).tocsr()
    J.eliminate_zeros()
    return J


def _cell_quad_points(mesh, rule):
    x0 = mesh.vertices[mesh.cells[:, 0]]
    E = mesh.edge_matrices()
    return x0[:, None, :] + np.einsum("qk,ckd->cqd", rule.points, E)


def _bary_values(rule, dim):
    """Barycentric basis values at the rule's reference points, (Q, d+1)."""
    lam = np.empty((len(rule.points), dim + 1))
    lam[:, 1:] = rule.points
    lam[:, 0] = 1.0 - rule.points.sum(axis=1)
    return lam


def _facet_load(mesh, facet_indices, integrand, t, degree, out, dim):
    """Accumulate integral(field . phi) over given boundary facets into out."""
    rule = facet_rule(mesh.dim, degree)
    lam = _bary_values(rule, mesh.dim - 1)    # basis of the facet simplex
    ref_measure = rule.weights.sum()
    for fi in facet_indices:
        f = mesh.facets[fi]
        pts = mesh.vertices[list(f.vertices)]
        x = pts[0] + rule.points @ (pts[1:] - pts[0])
        vals = integrand(x, t, f)            # (Q, d)
        scale = f.measure / ref_measure
        contrib = np.einsum("q,qi,qc->ic", rule.weights, lam, vals) * scale
        for k, v in enumerate(f.vertices):
            for c in range(dim):
                out[dim * v + c] += contrib[k, c]


def assemble_loads(mesh, layout, t, f=None, b=None, g=None,
                   traction=None, pressure_bc=None, degree=2):
    """Load vectors (F_u, F_z, F_p) at time t.

    ``traction`` and ``pressure_bc`` are lists of (markers, field) pairs for
    the surface terms (t_N, v) on Gamma_t and -(p_D, w.n) on Gamma_p.
    """
    d = mesh.dim
    F_u = np.zeros(layout.n_u)
    F_z = np.zeros(layout.n_z)
    F_p = np.zeros(layout.n_p)

    rule = simplex_rule(d, degree)
    lam = _bary_values(rule, d)
    vol = mesh.volumes()
    ref_measure = rule.weights.sum()
    pts = None
    if f is not None or b is not None or g is not None:
        pts = _cell_quad_points(mesh, rule)
        flat = pts.reshape(-1, d)

    def volume_vector_load(field, out):
        vals = np.asarray(field(flat, t), dtype=float).reshape(len(mesh.cells), -1, d)
        contrib = np.einsum("q,qi,cqa->cia", rule.weights, lam, vals)
        contrib *= (vol / ref_measure)[:, None, None]
        np.add.at(out, (d * mesh.cells[:, :, None] + np.arange(d)).ravel(),
                  contrib.ravel())

    if f is not None:
        volume_vector_load(f, F_u)
    if b is not None:
        volume_vector_load(b, F_z)
    if g is not None:
        gvals = np.asarray(g(flat, t), dtype=float).reshape(len(mesh.cells), -1)
        F_p += (gvals @ rule.weights) * vol / ref_measure

    for markers, field in (traction or []):
        idx = mesh.facets_with_marker(markers)
        _facet_load(mesh, idx,
                    lambda x, tt, fac: np.asarray(field(x, tt), dtype=float),
                    t, degree, F_u, d)
    for markers, field in (pressure_bc or []):
        idx = mesh.facets_with_marker(markers)
        _facet_load(mesh, idx,
                    lambda x, tt, fac: -np.asarray(field(x, tt), dtype=float)[:, None]
                    * fac.normals[0],
                    t, degree, F_z, d)
    return F_u, F_z, F_p


def dump_matrix(matrix, path):
    """Coordinate text dump: one zero-based `i j value` line per entry."""
    coo = matrix.tocoo()
    with open(path, "w") as fh:
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i} {j} {v:.17g}\n")


def flux_rotation(layout, normal_constraints):
    """Block-orthogonal change of basis T making each constrained flux vertex's
    first local component point along its boundary normal (z = T zeta)."""
    n = layout.size
    d = layout.dim
    rows, cols, data = [np.arange(n)], [np.arange(n)], [np.ones(n)]
    touched = []
    for v, nvec, _ in normal_constraints:
        R = _orthonormal_frame(nvec)
        base = layout.z_dof(v, 0)
        idx = np.arange(base, base + d)
        rows.append(np.repeat(idx, d))
        cols.append(np.tile(idx, d))
        data.append(R.ravel())
        touched.append(idx)
    if touched:
        mask = np.ones(n)
        mask[np.concatenate(touched)] = 0.0
        rows[0], cols[0], data[0] = np.arange(n), np.arange(n), mask
    T = sp.coo_matrix((np.concatenate(data),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    T.eliminate_zeros()
    return T


def _orthonormal_frame(n):
    """Orthonormal matrix whose first column is the unit vector n."""
    d = len(n)
    R = np.zeros((d, d))
    R[:, 0] = n
    k = int(np.argmin(np.abs(n)))
    v = np.zeros(d)
    v[k] = 1.0
    t1 = v - n * n[k]
    t1 /= np.linalg.norm(t1)
    R[:, 1] = t1
    if d == 3:
        R[:, 2] = np.cross(n, t1)
    return R


def apply_dirichlet(K, rhs, constraints):
    """Symmetric elimination of `dof -> value` constraints.

    Zeroes constrained rows/columns, sets unit diagonals, moves the known
    columns to the right-hand side. Returns (K_elim, rhs_elim).
    """
    dofs, values = _constraint_arrays(K.shape[0], constraints)
    rhs_e = eliminated_rhs(K, rhs, dofs, values)
    return eliminate_matrix(K, dofs), rhs_e


def _constraint_arrays(n, constraints):
    items = sorted(constraints.items())
    dofs = np.array([d for d, _ in items], dtype=np.int64)
    values = np.array([v for _, v in items], dtype=float)
    if len(dofs) and (dofs.min() < 0 or dofs.max() >= n):
        raise ValueError("constraint dof out of range")
    return dofs, values


def eliminate_matrix(K, dofs):
    """K with constrained rows/columns zeroed and unit diagonal (symmetric)."""
    n = K.shape[0]
    mask = np.ones(n)
    mask[dofs] = 0.0
    P = sp.diags(mask)
    fix = np.zeros(n)
    fix[dofs] = 1.0
    return (P @ K @ P + sp.diags(fix)).tocsr()


def eliminated_rhs(K, rhs, dofs, values):
    """Right-hand side matching eliminate_matrix, using the original columns."""
    xc = np.zeros(K.shape[0])
    xc[dofs] = values
    out = rhs - K @ xc
    out[dofs] = values
    return out
