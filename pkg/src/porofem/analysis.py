"""Error norms against analytic solutions, time aggregation, convergence-rate
tables with CSV round trip, pressure-oscillation indicator and jump seminorm."""

import math
from dataclasses import dataclass, field

import numpy as np

from .fespace import cell_gradients
from .quadrature import simplex_rule

NORM_KEYS = ("u_H1", "z_L2", "z_div", "z_Hdiv", "p_L2", "p_J")
CSV_NORMS = ("u_H1", "z_L2", "z_Hdiv", "p_L2")


def error_norms(mesh, state, exact, delta=0.0, degree=4):
    """Quadrature-evaluated errors of one state against exact fields.

    Returns a dict with the full H1 displacement error, L2 / divergence /
    H(div) flux errors, L2 pressure error and the jump seminorm of the
    discrete pressure. Exact fields are sampled pointwise at the quadrature
    nodes of a rule of the given degree.
    """
    d = mesh.dim
    t = state.t
    rule = simplex_rule(d, degree)
    lam = np.empty((len(rule.points), d + 1))
    lam[:, 1:] = rule.points
    lam[:, 0] = 1.0 - rule.points.sum(axis=1)
    x0 = mesh.vertices[mesh.cells[:, 0]]
    E = mesh.edge_matrices()
    pts = x0[:, None, :] + np.einsum("qk,ckd->cqd", rule.points, E)
    flat = pts.reshape(-1, d)
    C = len(mesh.cells)
    vol = mesh.volumes()
    ref = rule.weights.sum()
    scale = vol / ref  # physical cell measure per unit reference weight
    G = cell_gradients(mesh)

    def vector_error(coeffs, fld, with_grad):
        cellc = coeffs.reshape(-1, d)[mesh.cells]          # (C, d+1, d)
        vals_h = np.einsum("qi,cid->cqd", lam, cellc)
        vals_e = np.asarray(fld(flat, t), dtype=float).reshape(C, -1, d)
        diff2 = ((vals_e - vals_h) ** 2).sum(axis=2)       # (C, Q)
        l2sq = float(np.einsum("cq,q,c->", diff2, rule.weights, scale))
        if not with_grad:
            return l2sq, None
        jac_h = np.einsum("cia,cib->cab", cellc, G)        # (C, d, d)
        jac_e = np.asarray(fld.gradient(flat, t), dtype=float).reshape(C, -1, d, d)
        gdiff2 = ((jac_e - jac_h[:, None, :, :]) ** 2).sum(axis=(2, 3))
        h1sq = float(np.einsum("cq,q,c->", gdiff2, rule.weights, scale))
        div_h = np.trace(jac_h, axis1=1, axis2=2)
        div_e = np.trace(jac_e, axis1=2, axis2=3)
        ddiff2 = (div_e - div_h[:, None]) ** 2
        divsq = float(np.einsum("cq,q,c->", ddiff2, rule.weights, scale))
        return l2sq, (h1sq, divsq)

    out = {}
    u_l2sq, (u_h1sq, _) = vector_error(state.u, exact.u, True)
    out["u_H1"] = math.sqrt(u_l2sq + u_h1sq)
    if exact.z.grad is not None:
        z_l2sq, (_, z_divsq) = vector_error(state.z, exact.z, True)
    else:
        raise ValueError("H(div) flux error requires a gradient evaluator")
    out["z_L2"] = math.sqrt(z_l2sq)
    out["z_div"] = math.sqrt(z_divsq)
    out["z_Hdiv"] = math.sqrt(z_l2sq + z_divsq)

    p_e = np.asarray(exact.p(flat, t), dtype=float).reshape(C, -1)
    pdiff2 = (p_e - state.p[:, None]) ** 2
    out["p_L2"] = math.sqrt(float(np.einsum("cq,q,c->", pdiff2, rule.weights, scale)))
    out["p_J"] = jump_seminorm(state.p, mesh, delta)
    return out


def jump_seminorm(p, mesh, delta):
    """|p|_J = sqrt(delta * sum_f h(f) |f| [p]^2) over interior facets."""
    acc = 0.0
    for f in mesh.facets:
        if not f.interior:
            continue
        T, S = f.cells
        jump = p[T] - p[S]
        acc += f.h * f.measure * jump * jump
    return math.sqrt(delta * acc)


def oscillation_indicator(p, mesh):
    """Largest inter-cell pressure jump as a fraction of the pressure range."""
    p = np.asarray(p, dtype=float)
    jump = 0.0
    for f in mesh.facets:
        if f.interior:
            T, S = f.cells
            jump = max(jump, abs(p[T] - p[S]))
    rng = float(p.max() - p.min()) if len(p) else 0.0
    return jump / (rng + 1e-30)


def aggregate_in_time(series, dt):
    """(linf, l2) time aggregates of a per-step error series."""
    series = np.asarray(series, dtype=float)
    if series.size == 0:
        raise ValueError("empty series")
    linf = float(series.max())
    l2 = float(math.sqrt(dt * float((series ** 2).sum())))
    return linf, l2


@dataclass
class ErrorReport:
    """Per-step error series for one run plus their time aggregates."""

    dt: float
    steps: list = field(default_factory=list)   # dicts keyed by NORM_KEYS

    def append(self, errs):
        self.steps.append(dict(errs))

    def series(self, key):
        return np.array([s[key] for s in self.steps])

    def linf(self, key):
        return aggregate_in_time(self.series(key), self.dt)[0]

    def l2(self, key):
        return aggregate_in_time(self.series(key), self.dt)[1]

    def aggregates(self):
        out = {}
        for key in NORM_KEYS:
            out[f"linf_{key}"] = self.linf(key)
            out[f"l2_{key}"] = self.l2(key)
        return out

    def canonical(self):
        """The aggregates used in convergence tables: linf for displacement
        and pressure, dt-weighted l2 for the flux norms."""
        return {
            "u_H1": self.linf("u_H1"),
            "z_L2": self.l2("z_L2"),
            "z_div": self.l2("z_div"),
            "z_Hdiv": self.l2("z_Hdiv"),
            "p_L2": self.linf("p_L2"),
        }


def convergence_rates(hs, errors):
    """Rates log(e_i/e_{i+1}) / log(h_i/h_{i+1}) between consecutive rows.

    A zero error in the denominator reports +inf.
    """
    hs = list(hs)
    errors = list(errors)
    if len(hs) < 2:
        raise ValueError("need at least two rows")
    rates = []
    for i in range(len(hs) - 1):
        if errors[i + 1] == 0.0:
            rates.append(math.inf)
        else:
            rates.append(math.log(errors[i] / errors[i + 1])
                         / math.log(hs[i] / hs[i + 1]))
    return rates


@dataclass
class ConvergenceTable:
    """Rows of (h, dt, per-norm errors) with rates between consecutive rows."""

    norms: tuple = CSV_NORMS
    rows: list = field(default_factory=list)    # (h, dt, {norm: err})

    def add_row(self, h, dt, errors):
        if self.rows and h >= self.rows[-1][0]:
            raise ValueError("h must decrease down the rows")
        self.rows.append((float(h), float(dt), dict(errors)))

    def rates(self):
        hs = [r[0] for r in self.rows]
        return {n: convergence_rates(hs, [r[2][n] for r in self.rows])
                for n in self.norms}


def write_convergence_csv(table, path):
    cols = ["h", "dt"] + [f"err_{n}" for n in table.norms] \
        + [f"rate_{n}" for n in table.norms]
    rates = table.rates() if len(table.rows) >= 2 else {n: [] for n in table.norms}
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for i, (h, dt, errs) in enumerate(table.rows):
            vals = [h, dt] + [errs[n] for n in table.norms]
            for n in table.norms:
                vals.append(rates[n][i - 1] if i >= 1 and len(rates[n]) else math.nan)
            fh.write(",".join(f"{v:.17g}" for v in vals) + "\n")


def read_convergence_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        norms = tuple(c[4:] for c in header if c.startswith("err_"))
        table = ConvergenceTable(norms=norms)
        rates = []
        for line in fh:
            if not line.strip():
                continue
            vals = [float(v) for v in line.strip().split(",")]
            rec = dict(zip(header, vals))
            table.add_row(rec["h"], rec["dt"],
                          {n: rec[f"err_{n}"] for n in norms})
            rates.append({n: rec[f"rate_{n}"] for n in norms})
    return table, rates
