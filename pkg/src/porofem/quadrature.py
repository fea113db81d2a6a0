"""Quadrature rules on reference simplices, exact up to degree 4.

Reference cells: interval [0,1], triangle (0,0)-(1,0)-(0,1), tetrahedron
(0,0,0)-(1,0,0)-(0,1,0)-(0,0,1). Weights sum to the reference measure
(1, 1/2, 1/6 respectively).
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

MAX_DEGREE = 4


@dataclass(frozen=True)
class QuadRule:
    dim: int
    degree: int
    points: np.ndarray   # (Q, dim) reference coordinates
    weights: np.ndarray  # (Q,)


def _check_degree(degree):
    if not 1 <= degree <= MAX_DEGREE:
        raise ValueError(f"unsupported quadrature degree {degree} (1..{MAX_DEGREE})")


def _conical_triangle(npts):
    """Conical-product Gauss rule on the reference triangle, degree 2*npts-1."""
    xg, wg = roots_legendre(npts)          # [-1, 1]
    xj, wj = roots_jacobi(npts, 1.0, 0.0)  # weight (1-x) on [-1, 1]
    xg = 0.5 * (xg + 1.0)
    wg = 0.5 * wg
    eta = 0.5 * (xj + 1.0)
    weta = 0.25 * wj  # includes the (1-eta) factor of the collapsed map
    pts, wts = [], []
    for e, we in zip(eta, weta):
        for x, wx in zip(xg, wg):
            pts.append((x * (1.0 - e), e))
            wts.append(wx * we)
    return np.array(pts), np.array(wts)


def _conical_tet(npts):
    """Conical-product Gauss rule on the reference tetrahedron, degree 2*npts-1."""
    xg, wg = roots_legendre(npts)
    x1, w1 = roots_jacobi(npts, 1.0, 0.0)
    x2, w2 = roots_jacobi(npts, 2.0, 0.0)
    xg = 0.5 * (xg + 1.0)
    wg = 0.5 * wg
    e1 = 0.5 * (x1 + 1.0)
    we1 = 0.25 * w1
    e2 = 0.5 * (x2 + 1.0)
    we2 = 0.125 * w2
    pts, wts = [], []
    for c, wc in zip(e2, we2):
        for b, wb in zip(e1, we1):
            for a, wa in zip(xg, wg):
                pts.append((a * (1.0 - b) * (1.0 - c), b * (1.0 - c), c))
                wts.append(wa * wb * wc)
    return np.array(pts), np.array(wts)


def simplex_rule(dim, degree):
    """Rule integrating all monomials of total degree <= degree exactly."""
    _check_degree(degree)
    if dim == 2:
        if degree == 1:
            pts = np.array([[1 / 3, 1 / 3]])
            wts = np.array([0.5])
        elif degree == 2:
            pts = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])
            wts = np.full(3, 1 / 6)
        else:
            pts, wts = _conical_triangle((degree + 2) // 2)
        return QuadRule(2, degree, pts, wts)
    if dim == 3:
        if degree == 1:
            pts = np.array([[0.25, 0.25, 0.25]])
            wts = np.array([1 / 6])
        elif degree == 2:
            a = (5.0 - np.sqrt(5.0)) / 20.0
            b = (5.0 + 3.0 * np.sqrt(5.0)) / 20.0
            pts = np.array([[b, a, a], [a, b, a], [a, a, b], [a, a, a]])
            wts = np.full(4, 1 / 24)
        else:
            pts, wts = _conical_tet((degree + 2) // 2)
        return QuadRule(3, degree, pts, wts)
    raise ValueError(f"unsupported dimension {dim}")


def facet_rule(dim, degree):
    """Rule on the reference facet of a dim-simplex (interval or triangle)."""
    _check_degree(degree)
    if dim == 2:
        npts = (degree + 2) // 2
        x, w = roots_legendre(npts)
        pts = (0.5 * (x + 1.0)).reshape(-1, 1)
        wts = 0.5 * w
        return QuadRule(1, degree, pts, wts)
    if dim == 3:
        rule = simplex_rule(2, degree)
        return QuadRule(2, degree, rule.points, rule.weights)
    raise ValueError(f"unsupported dimension {dim}")
