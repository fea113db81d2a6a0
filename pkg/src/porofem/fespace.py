"""Finite element spaces: continuous vector P1 (displacement, flux), scalar P0
(pressure), with DOF numbering, Dirichlet collection and field interpolation.

Monolithic DOF order: displacement block [0, d*V), flux block [d*V, 2*d*V),
pressure block [2*d*V, 2*d*V + C), optionally one trailing mean-pressure
multiplier. Vector DOFs interleave components: dof(vertex v, component c)
= d*v + c within a block.
"""

from dataclasses import dataclass, field

import numpy as np

from .quadrature import simplex_rule


class DegenerateCellError(Exception):
    pass


@dataclass
class AnalyticField:
    """Closed-form field of space and time.

    ``fn(x, t)`` takes points of shape (..., d) and returns values of shape
    (...,) for scalar fields or (..., d) for vector fields. ``grad(x, t)``
    returns (..., d) for scalars and the Jacobian (..., d, d), row i holding
    the gradient of component i, for vectors.
    """

    fn: callable
    grad: callable = None

    def __call__(self, x, t):
        return self.fn(np.asarray(x, dtype=float), t)

    def gradient(self, x, t):
        if self.grad is None:
            raise ValueError("field has no gradient evaluator")
        return self.grad(np.asarray(x, dtype=float), t)


def constant_field(value):
    value = np.asarray(value, dtype=float)
    if value.ndim == 0:
        return AnalyticField(
            lambda x, t: np.full(x.shape[:-1], float(value)),
            lambda x, t: np.zeros(x.shape))
    d = len(value)
    return AnalyticField(
        lambda x, t: np.broadcast_to(value, x.shape[:-1] + (d,)).copy(),
        lambda x, t: np.zeros(x.shape[:-1] + (d, d)))


zero_scalar = constant_field(0.0)


@dataclass
class DofLayout:
    """Block offsets and constraint bookkeeping for one mesh."""

    dim: int
    n_vertices: int
    n_cells: int
    pressure_mean_constraint: bool = False
    dirichlet_u: list = field(default_factory=list)        # (dof, value) at some time
    dirichlet_z_normal: list = field(default_factory=list)  # (vertex, unit normal, value)

    @property
    def n_u(self):
        return self.dim * self.n_vertices

    @property
    def n_z(self):
        return self.dim * self.n_vertices

    @property
    def n_p(self):
        return self.n_cells

    @property
    def offset_u(self):
        return 0

    @property
    def offset_z(self):
        return self.n_u

    @property
    def offset_p(self):
        return self.n_u + self.n_z

    @property
    def size(self):
        return self.n_u + self.n_z + self.n_p + (1 if self.pressure_mean_constraint else 0)

    def u_dof(self, vertex, component):
        return self.dim * vertex + component

    def z_dof(self, vertex, component):
        return self.offset_z + self.dim * vertex + component

    def p_dof(self, cell):
        return self.offset_p + cell

    def split(self, x):
        """Split a monolithic vector into (u, z, p) coefficient arrays."""
        u = x[:self.n_u]
        z = x[self.offset_z:self.offset_z + self.n_z]
        p = x[self.offset_p:self.offset_p + self.n_p]
        return u, z, p


def make_layout(mesh, pressure_mean_constraint=False):
    return DofLayout(mesh.dim, mesh.num_vertices, mesh.num_cells,
                     pressure_mean_constraint=pressure_mean_constraint)


def p1_reference_gradients(cell_vertices):
    """Constant gradients of the barycentric basis on one cell.

    ``cell_vertices`` is (d+1, d); returns (d+1, d) with row i the gradient of
    the basis function of vertex i. Their sum vanishes (partition of unity).
    """
    x = np.asarray(cell_vertices, dtype=float)
    d = x.shape[1]
    E = x[1:] - x[0]  # rows are edge vectors
    det = np.linalg.det(E)
    if abs(det) < 1e-14 * max(1.0, np.abs(E).max()) ** d:
        raise DegenerateCellError("cell has zero volume")
    G = np.zeros((d + 1, d))
    G[1:] = np.linalg.inv(E).T
    G[0] = -G[1:].sum(axis=0)
    return G


def cell_gradients(mesh):
    """Barycentric gradients for all cells, shape (C, d+1, d)."""
    E = mesh.edge_matrices()
    dets = np.linalg.det(E)
    if np.any(np.abs(dets) < 1e-300):
        raise DegenerateCellError(f"degenerate cell {int(np.argmin(np.abs(dets)))}")
    G = np.zeros((len(mesh.cells), mesh.dim + 1, mesh.dim))
    G[:, 1:, :] = np.transpose(np.linalg.inv(E), (0, 2, 1))
    G[:, 0, :] = -G[:, 1:, :].sum(axis=1)
    return G


def interpolate_p1(mesh, fld, t=0.0):
    """Nodal interpolation of a field onto vector or scalar P1 coefficients."""
    vals = fld(mesh.vertices, t)
    return np.asarray(vals, dtype=float).ravel()


def project_p0(mesh, fld, t=0.0, degree=2):
    """Cellwise L2 projection (= cell average via quadrature) onto P0."""
    rule = simplex_rule(mesh.dim, degree)
    x0 = mesh.vertices[mesh.cells[:, 0]]
    E = mesh.edge_matrices()
    # physical quad points: x0 + sum_k xi_k * edge_k, shape (C, Q, d)
    pts = x0[:, None, :] + np.einsum("qk,ckd->cqd", rule.points, E)
    vals = fld(pts.reshape(-1, mesh.dim), t).reshape(len(mesh.cells), -1)
    ref_measure = rule.weights.sum()
    return vals @ rule.weights / ref_measure


def boundary_vertex_normals(mesh, facet_indices):
    """Measure-weighted average outward unit normal at each vertex of the
    given boundary facets. Returns {vertex: unit normal}."""
    acc = {}
    for fi in facet_indices:
        f = mesh.facets[fi]
        n = f.normals[0] * f.measure
        for v in f.vertices:
            acc[v] = acc.get(v, 0.0) + n
    return {v: n / np.linalg.norm(n) for v, n in acc.items()}


def collect_dirichlet(mesh, layout, markers, fld, t, components=None):
    """Displacement constraints (dof, value) for every vertex on marked facets.

    ``components`` restricts to a subset of components (default: all).
    Conflicting values for the same DOF raise ValueError.
    """
    facet_indices = mesh.facets_with_marker(markers)
    comps = range(mesh.dim) if components is None else components
    verts = sorted({v for fi in facet_indices for v in mesh.facets[fi].vertices})
    if not verts:
        return {}
    vals = fld(mesh.vertices[verts], t)
    vals = np.atleast_2d(np.asarray(vals, dtype=float))
    constraints = {}
    for row, v in enumerate(verts):
        for c in comps:
            dof = layout.u_dof(v, c)
            value = float(vals[row, c])
            if dof in constraints and abs(constraints[dof] - value) > 1e-12:
                raise ValueError(f"conflicting Dirichlet values at dof {dof}")
            constraints[dof] = value
    return constraints


def collect_flux_normal(mesh, layout, markers, data, t):
    """Normal-flux constraints z.n = q_D as (vertex, unit normal, value).

    The vertex normal averages the outward normals of the marked facets around
    the vertex. ``data`` is a vector field (value = field . n), a scalar field,
    or None for a homogeneous condition.
    """
    facet_indices = mesh.facets_with_marker(markers)
    normals = boundary_vertex_normals(mesh, facet_indices)
    out = []
    for v in sorted(normals):
        n = normals[v]
        if data is None:
            val = 0.0
        else:
            raw = np.asarray(data(mesh.vertices[v], t), dtype=float)
            val = float(raw @ n) if raw.ndim >= 1 and raw.shape[-1] == mesh.dim else float(raw)
        out.append((v, n, val))
    return out
