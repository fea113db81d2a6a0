"""Shared independent oracles: quadrature-based element assembly and random
simplices, used by the assembly tests and the acceptance suite."""

import numpy as np

from porofem import mesh as pm
from porofem.quadrature import simplex_rule


def single_cell_mesh(verts):
    verts = np.asarray(verts, dtype=float)
    d = verts.shape[1]
    m = pm.Mesh(d, verts, np.arange(d + 1, dtype=np.int64).reshape(1, -1))
    pm.build_facets(m)
    return m


def random_cell(rng, d):
    # positively oriented so local and global vertex order coincide
    while True:
        verts = rng.uniform(-1.0, 1.0, size=(d + 1, d))
        det = np.linalg.det(verts[1:] - verts[0])
        if abs(det) > 0.05:
            if det < 0:
                verts[[d - 1, d]] = verts[[d, d - 1]]
            return verts


def oracle_cell_matrix(verts, integrand, degree):
    """One element matrix via raw quadrature summation at the given degree."""
    verts = np.asarray(verts, dtype=float)
    d = verts.shape[1]
    rule = simplex_rule(d, degree)
    E = (verts[1:] - verts[0]).T
    detJ = abs(np.linalg.det(E))
    G = np.zeros((d + 1, d))
    G[1:] = np.linalg.inv(E.T).T
    G[0] = -G[1:].sum(axis=0)
    lam = np.empty((len(rule.points), d + 1))
    lam[:, 1:] = rule.points
    lam[:, 0] = 1.0 - rule.points.sum(axis=1)
    out = None
    for q, w in enumerate(rule.weights):
        val = integrand(lam[q], G)
        out = w * val if out is None else out + w * val
    # weights sum to the reference measure, so the physical scale is just detJ
    return out * detJ


def elasticity_integrand(params, d):
    def f(lam, G):
        nv = d + 1
        K = np.zeros((nv * d, nv * d))
        for i in range(nv):
            for a in range(d):
                for j in range(nv):
                    for b in range(d):
                        if params.operator_mode == "vector_laplacian":
                            val = (a == b) * (G[i] @ G[j])
                        else:
                            eps = (0.5 * (G[i] @ G[j]) * (a == b)
                                   + 0.5 * G[i][b] * G[j][a])
                            val = (2.0 * params.mu_s * eps
                                   + params.lam * G[i][a] * G[j][b])
                        K[i * d + a, j * d + b] = val
        return K
    return f


def mass_integrand(params, d):
    kinv = params.kappa_inv(d)

    def f(lam, G):
        nv = d + 1
        K = np.zeros((nv * d, nv * d))
        for i in range(nv):
            for a in range(d):
                for j in range(nv):
                    for b in range(d):
                        K[i * d + a, j * d + b] = kinv[b, a] * lam[i] * lam[j]
        return K
    return f


def divergence_integrand(d):
    def f(lam, G):
        out = np.zeros((1, (d + 1) * d))
        for j in range(d + 1):
            for b in range(d):
                out[0, j * d + b] = -G[j][b]
        return out
    return f


def jump_facet_oracle(mesh, delta, degree=4):
    """J assembled by facet quadrature of delta * h * [psi_T][psi_S] instead of
    the closed-form h*|f| weight."""
    from porofem.quadrature import facet_rule
    import scipy.sparse as sp
    rule = facet_rule(mesh.dim, degree)
    ref = rule.weights.sum()
    C = mesh.num_cells
    rows, cols, data = [], [], []
    for f in mesh.facets:
        if not f.interior:
            continue
        T, S = f.cells
        # integrand is constant (+-1 jumps), quadrature still exercises the path
        w = delta * f.h * (rule.weights.sum() * (f.measure / ref))
        rows += [T, S, T, S]
        cols += [T, S, S, T]
        data += [w, w, -w, -w]
    return sp.coo_matrix((data, (rows, cols)), shape=(C, C)).tocsr()
