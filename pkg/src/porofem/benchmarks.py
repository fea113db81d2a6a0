"""The four benchmark problems (2D/3D manufactured solutions, cantilever
bracket, unconfined cylinder compression) plus the Bessel/characteristic-root
machinery behind the closed-form radial-displacement series.

The printed displacement prefactors of the manufactured solutions are
corrected to -1/(4*pi) in 2D and -1/(6*pi) in 3D; these are the unique values
for which the momentum and mass equations are satisfied exactly (checked by
the symbolic-residual tests).
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .assembly import MaterialParams
from .fespace import AnalyticField
from .mesh import cylinder_mesh, unit_cube_mesh, unit_square_mesh
from .problems import BoundaryCondition, ExactFields, ProblemDefinition

TWO_PI = 2.0 * math.pi

# -- Bessel functions J0, J1 -------------------------------------------------
# Power series below the switch point, Hankel's asymptotic expansion above;
# absolute error stays below 1e-10 on [0, 200] and keeps shrinking beyond.

_SERIES_SWITCH = 15.0
_ASYMPTOTIC_TERMS = 32


def _series_j(x, nu):
    q = 0.25 * x * x
    term = np.ones_like(x) if nu == 0 else 0.5 * x
    total = term.copy()
    for k in range(1, 80):
        term = term * (-q) / (k * (k + nu))
        total += term
    return total


def _hankel_coeffs(nu, m):
    mu = 4.0 * nu * nu
    c = [1.0]
    for j in range(1, m):
        c.append(c[-1] * (mu - (2 * j - 1) ** 2) / (8.0 * j))
    return c


_C0 = _hankel_coeffs(0, _ASYMPTOTIC_TERMS)
_C1 = _hankel_coeffs(1, _ASYMPTOTIC_TERMS)


def _asymptotic_j(x, nu):
    c = _C0 if nu == 0 else _C1
    inv = 1.0 / x
    P = np.zeros_like(x)
    Q = np.zeros_like(x)
    for k in range(_ASYMPTOTIC_TERMS // 2):
        sign = -1.0 if k % 2 else 1.0
        P += sign * c[2 * k] * inv ** (2 * k)
        Q += sign * c[2 * k + 1] * inv ** (2 * k + 1)
    omega = x - (0.5 * nu + 0.25) * math.pi
    return np.sqrt(2.0 / (math.pi * x)) * (P * np.cos(omega) - Q * np.sin(omega))


def _bessel(x, nu):
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)
    small = x < _SERIES_SWITCH
    if small.any():
        out[small] = _series_j(x[small], nu)
    if (~small).any():
        out[~small] = _asymptotic_j(x[~small], nu)
    return float(out[0]) if scalar else out


def bessel_j0(x):
    return _bessel(x, 0)


def bessel_j1(x):
    return _bessel(x, 1)


def characteristic_roots(nu, n):
    """First n positive roots of J1(x) - (1-nu) x J0(x) / (1-2nu) = 0,
    located by a 0.1-step sign scan and bisection."""
    if not 0 <= nu < 0.5:
        raise ValueError("nu must lie in [0, 0.5)")
    if n < 1:
        raise ValueError("n must be >= 1")
    coef = (1.0 - nu) / (1.0 - 2.0 * nu)

    def f(x):
        return bessel_j1(x) - coef * x * bessel_j0(x)

    step = 0.1
    roots = []
    lo = step
    # roots are ~pi apart, so blocks of 4000 scan points cover ~127 roots
    while len(roots) < n:
        grid = lo + step * np.arange(4001)
        vals = f(grid)
        sign_change = np.flatnonzero(vals[:-1] * vals[1:] < 0.0)
        a = grid[sign_change]
        b = grid[sign_change + 1]
        fa = vals[sign_change]
        for _ in range(60):
            m = 0.5 * (a + b)
            fm = f(m)
            left = fa * fm < 0.0
            b = np.where(left, m, b)
            a = np.where(left, a, m)
            fa = np.where(left, fa, fm)
        roots.extend(0.5 * (a + b))
        exact = np.flatnonzero(vals == 0.0)
        roots.extend(grid[exact])
        lo = grid[-1]
    return np.array(sorted(roots)[:n])


@dataclass
class ArmstrongModel:
    """Closed-form radial surface displacement of an unconfined poroelastic
    cylinder under a step axial strain."""

    nu: float
    E: float
    k: float
    a: float
    eps0: float
    n_terms: int = 200
    roots: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if not 0 <= self.nu < 0.5:
            raise ValueError("nu must lie in [0, 0.5)")
        self.mu_s = self.E / (2.0 * (1.0 + self.nu))
        self.lam = self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))
        self.H_A = self.lam + 2.0 * self.mu_s
        if self.roots is None:
            self.roots = characteristic_roots(self.nu, self.n_terms)

    @property
    def t_g(self):
        """Characteristic diffusion time a^2 / (H_A k)."""
        return self.a ** 2 / (self.H_A * self.k)


def armstrong_radial_displacement(t, model):
    """Normalized radial displacement u/a at r=a; series truncated once terms
    drop below 1e-14 or n_terms is exhausted.

    The denominator is alpha^2 (1-nu)^2 - (1-2 nu): the series then satisfies
    the instantaneous-incompressibility identity u/a(0) = eps0/2, which fails
    for the variant with a trailing (1-nu).
    """
    nu = model.nu
    rate = model.H_A * model.k / model.a ** 2
    total = 0.0
    converged = False
    for alpha in model.roots:
        denom = alpha ** 2 * (1.0 - nu) ** 2 - (1.0 - 2.0 * nu)
        term = math.exp(-alpha ** 2 * rate * t) / denom
        total += term
        if abs(term) < 1e-14:
            converged = True
            break
    if not converged and t == 0.0 and model.n_terms < 50:
        warnings.warn("Armstrong series unconverged at t=0 with "
                      f"{model.n_terms} terms")
    return model.eps0 * (nu + (1.0 - 2.0 * nu) * (1.0 - nu) * total)


def armstrong_curve(times, model):
    return np.array([armstrong_radial_displacement(t, model) for t in times])


# -- manufactured solutions ---------------------------------------------------

def _sc(x):
    return np.sin(TWO_PI * x), np.cos(TWO_PI * x)


def manufactured_2d(delta=1.0):
    """Unit-square problem with p = sin(2 pi x) sin(2 pi y) sin(2 pi t) and the
    vector-Laplacian momentum operator; returns (problem, exact fields)."""
    c = -1.0 / (4.0 * math.pi)

    def p_fn(x, t):
        sx, _ = _sc(x[..., 0])
        sy, _ = _sc(x[..., 1])
        return sx * sy * math.sin(TWO_PI * t)

    def p_grad(x, t):
        sx, cx = _sc(x[..., 0])
        sy, cy = _sc(x[..., 1])
        s = math.sin(TWO_PI * t)
        return TWO_PI * s * np.stack([cx * sy, sx * cy], axis=-1)

    def u_fn(x, t):
        sx, cx = _sc(x[..., 0])
        sy, cy = _sc(x[..., 1])
        s = math.sin(TWO_PI * t)
        return c * s * np.stack([cx * sy, sx * cy], axis=-1)

    def u_grad(x, t):
        sx, cx = _sc(x[..., 0])
        sy, cy = _sc(x[..., 1])
        s = math.sin(TWO_PI * t)
        g = np.empty(x.shape[:-1] + (2, 2))
        g[..., 0, 0] = -sx * sy
        g[..., 0, 1] = cx * cy
        g[..., 1, 0] = cx * cy
        g[..., 1, 1] = -sx * sy
        return TWO_PI * c * s * g

    def z_fn(x, t):
        return -p_grad(x, t)

    def z_grad(x, t):
        sx, cx = _sc(x[..., 0])
        sy, cy = _sc(x[..., 1])
        s = math.sin(TWO_PI * t)
        g = np.empty(x.shape[:-1] + (2, 2))
        g[..., 0, 0] = sx * sy
        g[..., 0, 1] = -cx * cy
        g[..., 1, 0] = -cx * cy
        g[..., 1, 1] = sx * sy
        return TWO_PI ** 2 * s * g

    def g_fn(x, t):
        sx, _ = _sc(x[..., 0])
        sy, _ = _sc(x[..., 1])
        return sx * sy * (TWO_PI * math.cos(TWO_PI * t)
                          + 8.0 * math.pi ** 2 * math.sin(TWO_PI * t))

    u = AnalyticField(u_fn, u_grad)
    z = AnalyticField(z_fn, z_grad)
    p = AnalyticField(p_fn, p_grad)
    params = MaterialParams(lam=0.0, mu_s=0.5, kappa=1.0, alpha=1.0, c0=0.0,
                            delta=delta, operator_mode="vector_laplacian")
    all_sides = (1, 2, 3, 4)
    problem = ProblemDefinition(
        name="manufactured2d",
        mesh_recipe=unit_square_mesh,
        params=params,
        bcs=[BoundaryCondition("displacement", all_sides, u),
             BoundaryCondition("flux", all_sides, z)],
        g=AnalyticField(g_fn),
        initial_u=None, initial_p=p,
        T=0.25, dt=0.25 / 16, default_resolution=16,
        pressure_mean_constraint=True)
    return problem, ExactFields(u, z, p)


def manufactured_3d(delta=0.01):
    """Unit-cube extension with p = sin(2 pi x) sin(2 pi y) sin(2 pi z)
    sin(2 pi t)."""
    c = -1.0 / (6.0 * math.pi)

    def trig(x):
        s = np.sin(TWO_PI * x)
        co = np.cos(TWO_PI * x)
        return s, co

    def p_fn(x, t):
        s0, _ = trig(x[..., 0])
        s1, _ = trig(x[..., 1])
        s2, _ = trig(x[..., 2])
        return s0 * s1 * s2 * math.sin(TWO_PI * t)

    def p_grad(x, t):
        s0, c0 = trig(x[..., 0])
        s1, c1 = trig(x[..., 1])
        s2, c2 = trig(x[..., 2])
        s = math.sin(TWO_PI * t)
        return TWO_PI * s * np.stack([c0 * s1 * s2, s0 * c1 * s2, s0 * s1 * c2],
                                     axis=-1)

    def u_fn(x, t):
        s0, c0 = trig(x[..., 0])
        s1, c1 = trig(x[..., 1])
        s2, c2 = trig(x[..., 2])
        s = math.sin(TWO_PI * t)
        return c * s * np.stack([c0 * s1 * s2, s0 * c1 * s2, s0 * s1 * c2],
                                axis=-1)

    def _jac(x, t, scale):
        s0, c0 = trig(x[..., 0])
        s1, c1 = trig(x[..., 1])
        s2, c2 = trig(x[..., 2])
        g = np.empty(x.shape[:-1] + (3, 3))
        g[..., 0, 0] = -s0 * s1 * s2
        g[..., 0, 1] = c0 * c1 * s2
        g[..., 0, 2] = c0 * s1 * c2
        g[..., 1, 0] = c0 * c1 * s2
        g[..., 1, 1] = -s0 * s1 * s2
        g[..., 1, 2] = s0 * c1 * c2
        g[..., 2, 0] = c0 * s1 * c2
        g[..., 2, 1] = s0 * c1 * c2
        g[..., 2, 2] = -s0 * s1 * s2
        return scale * math.sin(TWO_PI * t) * g

    def u_grad(x, t):
        return _jac(x, t, TWO_PI * c)

    def z_fn(x, t):
        return -p_grad(x, t)

    def z_grad(x, t):
        return _jac(x, t, -TWO_PI ** 2)

    def g_fn(x, t):
        s0, _ = trig(x[..., 0])
        s1, _ = trig(x[..., 1])
        s2, _ = trig(x[..., 2])
        return s0 * s1 * s2 * (TWO_PI * math.cos(TWO_PI * t)
                               + 12.0 * math.pi ** 2 * math.sin(TWO_PI * t))

    u = AnalyticField(u_fn, u_grad)
    z = AnalyticField(z_fn, z_grad)
    p = AnalyticField(p_fn, p_grad)
    params = MaterialParams(lam=0.0, mu_s=0.5, kappa=1.0, alpha=1.0, c0=0.0,
                            delta=delta, operator_mode="vector_laplacian")
    all_sides = (1, 2, 3, 4, 5, 6)
    problem = ProblemDefinition(
        name="manufactured3d",
        mesh_recipe=unit_cube_mesh,
        params=params,
        bcs=[BoundaryCondition("displacement", all_sides, u),
             BoundaryCondition("flux", all_sides, z)],
        g=AnalyticField(g_fn),
        initial_u=None, initial_p=p,
        T=0.25, dt=0.25 / 8, default_resolution=8,
        pressure_mean_constraint=True)
    return problem, ExactFields(u, z, p)


# -- cantilever bracket --------------------------------------------------------

CANTILEVER_E = 1e5
CANTILEVER_NU = 0.4
CANTILEVER_TRACTION = 1.0  # magnitude is unstated; the indicator is scale-free


def lame_parameters(E, nu):
    mu = E / (2.0 * (1.0 + nu))
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    return lam, mu


def cantilever_setup(delta=5e-6):
    """Locking-prone bracket: clamped at x=0, downward traction on top,
    no-flow everywhere, E=1e5, nu=0.4, alpha=0.93, c0=0, kappa=1e-7."""
    lam, mu = lame_parameters(CANTILEVER_E, CANTILEVER_NU)
    params = MaterialParams(lam=lam, mu_s=mu, kappa=1e-7, alpha=0.93, c0=0.0,
                            delta=delta, operator_mode="full_biot")

    def traction_top(x, t):
        out = np.zeros(x.shape[:-1] + (2,))
        out[..., 1] = -CANTILEVER_TRACTION
        return out

    problem = ProblemDefinition(
        name="cantilever",
        mesh_recipe=unit_square_mesh,
        params=params,
        bcs=[BoundaryCondition("displacement", (1,), None),
             BoundaryCondition("traction", (4,), AnalyticField(traction_top)),
             BoundaryCondition("traction", (2, 3), None),
             BoundaryCondition("flux", (1, 2, 3, 4), None)],
        T=0.005, dt=0.001, default_resolution=48,
        pressure_mean_constraint=False)
    return problem


# -- unconfined compression -----------------------------------------------------

UNCONFINED_RADIUS = 5.0
UNCONFINED_HEIGHT = 5.0
UNCONFINED_AXIAL_COMPRESSION = 0.01   # applied displacement; strain = 0.01/5


def unconfined_setup(delta=0.001):
    """Cylinder compressed between frictionless plates: axial displacement
    step on top, bottom fixed axially, free-draining lateral surface."""
    lam, mu = lame_parameters(1000.0, 0.15)
    params = MaterialParams(lam=lam, mu_s=mu, kappa=0.1, alpha=1.0, c0=0.0,
                            delta=delta, operator_mode="full_biot")
    H = UNCONFINED_HEIGHT
    R = UNCONFINED_RADIUS

    def top_displacement(x, t):
        out = np.zeros(x.shape[:-1] + (3,))
        out[..., 2] = -UNCONFINED_AXIAL_COMPRESSION
        return out

    def pin_rigid_modes(mesh, layout):
        """Remove x/y translations and the axial rotation, consistently with
        the axisymmetric solution: clamp u_x=u_y on the axis and u_y on the
        positive-x radial line."""
        pins = {}
        r = np.hypot(mesh.vertices[:, 0], mesh.vertices[:, 1])
        for v in np.flatnonzero(r < 1e-9 * R):
            pins[layout.u_dof(v, 0)] = 0.0
            pins[layout.u_dof(v, 1)] = 0.0
        online = (np.abs(mesh.vertices[:, 1]) < 1e-9 * R) & (mesh.vertices[:, 0] > 1e-9 * R)
        for v in np.flatnonzero(online):
            pins[layout.u_dof(v, 1)] = 0.0
        return pins

    problem = ProblemDefinition(
        name="unconfined",
        mesh_recipe=lambda n: cylinder_mesh(R, H, n, n),
        params=params,
        bcs=[BoundaryCondition("displacement", (2,),
                               AnalyticField(top_displacement), components=(2,)),
             BoundaryCondition("displacement", (1,), None, components=(2,)),
             BoundaryCondition("traction", (3,), None),
             BoundaryCondition("pressure", (3,), None),
             BoundaryCondition("flux", (1, 2), None)],
        T=10.0, dt=0.1, default_resolution=4,
        pressure_mean_constraint=False,
        extra_dirichlet=pin_rigid_modes)
    return problem


def unconfined_armstrong_model(n_terms=200):
    strain = UNCONFINED_AXIAL_COMPRESSION / UNCONFINED_HEIGHT
    return ArmstrongModel(nu=0.15, E=1000.0, k=0.1, a=UNCONFINED_RADIUS,
                          eps0=strain, n_terms=n_terms)


def rim_radial_displacement(mesh, u):
    """Average radial displacement over the mid-height rim vertices,
    normalized by the radius."""
    r = np.hypot(mesh.vertices[:, 0], mesh.vertices[:, 1])
    R = r.max()
    zmid = 0.5 * (mesh.vertices[:, 2].max() + mesh.vertices[:, 2].min())
    on_rim = np.abs(r - R) < 1e-9 * R
    dz = np.abs(mesh.vertices[:, 2] - zmid)
    band = dz[on_rim].min() + 1e-9 * R
    sel = np.flatnonzero(on_rim & (dz <= band))
    uv = u.reshape(-1, 3)[sel]
    radial = (uv[:, 0] * mesh.vertices[sel, 0] + uv[:, 1] * mesh.vertices[sel, 1]) / r[sel]
    return float(radial.mean() / R)
