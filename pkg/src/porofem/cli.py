"""Command-line entry point.

Subcommands: converge2d, converge3d, cantilever, unconfined, run <config>.
Flags --delta, --dt, --T, --res, --out, --vtk-every can also be supplied via
POROFEM_DELTA, POROFEM_DT, POROFEM_T, POROFEM_RES, POROFEM_OUT,
POROFEM_VTK_EVERY environment variables (explicit flags win).

Exit codes: 0 success, 2 invalid arguments, 3 solver/singularity failure,
4 acceptance-threshold failure.
"""

import argparse
import configparser
import math
import os
import sys

import numpy as np

from . import analysis, benchmarks, solver

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SOLVER = 3
EXIT_THRESHOLD = 4

FMT = "{:.17g}"


def write_vtk(mesh, state, path):
    """Legacy ASCII VTK unstructured grid with point vectors u, z and the
    cellwise pressure."""
    d = mesh.dim
    cell_type = 5 if d == 2 else 10
    u = state.u.reshape(-1, d)
    z = state.z.reshape(-1, d)
    try:
        with open(path, "w") as fh:
            fh.write("# vtk DataFile Version 3.0\n")
            fh.write(f"porofem state t={state.t:.17g}\n")
            fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
            fh.write(f"POINTS {mesh.num_vertices} double\n")
            for v in mesh.vertices:
                coords = list(v) + [0.0] * (3 - d)
                fh.write(" ".join(FMT.format(c) for c in coords) + "\n")
            nv = d + 1
            fh.write(f"CELLS {mesh.num_cells} {mesh.num_cells * (nv + 1)}\n")
            for c in mesh.cells:
                fh.write(f"{nv} " + " ".join(str(int(i)) for i in c) + "\n")
            fh.write(f"CELL_TYPES {mesh.num_cells}\n")
            for _ in range(mesh.num_cells):
                fh.write(f"{cell_type}\n")
            fh.write(f"POINT_DATA {mesh.num_vertices}\n")
            for name, vec in (("u", u), ("z", z)):
                fh.write(f"VECTORS {name} double\n")
                for row in vec:
                    comps = list(row) + [0.0] * (3 - d)
                    fh.write(" ".join(FMT.format(c) for c in comps) + "\n")
            fh.write(f"CELL_DATA {mesh.num_cells}\n")
            fh.write("SCALARS p double 1\nLOOKUP_TABLE default\n")
            for val in state.p:
                fh.write(FMT.format(val) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write VTK file {path}: {exc}") from exc


def _env_default(name, fallback=None):
    return os.environ.get(f"POROFEM_{name}", fallback)


def _float_list(text):
    try:
        return [float(v) for v in str(text).split(",") if v != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad float list {text!r}")


def _int_list(text):
    try:
        return [int(v) for v in str(text).split(",") if v != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}")


def _ensure_out(path):
    os.makedirs(path, exist_ok=True)
    return path


def run_convergence(problem_factory, resolutions, deltas, T, out_dir,
                    label, dt_rule=None, verbose=True):
    """One convergence CSV per delta; returns the worst final observed rate."""
    _ensure_out(out_dir)
    worst = math.inf
    for delta in deltas:
        table = analysis.ConvergenceTable(norms=("u_H1", "z_L2", "z_Hdiv",
                                                 "p_L2"))
        for n in resolutions:
            if n < 1:
                raise ValueError(f"invalid resolution {n}")
            problem, exact = problem_factory(delta)
            mesh = problem.build_mesh(n)
            dt = dt_rule(n) if dt_rule else 1.0 / (4 * n)
            report = analysis.ErrorReport(dt=dt)

            def observe(k, t, state, _mesh=mesh, _exact=exact,
                        _rep=report, _delta=delta):
                if k == 0:
                    return
                _rep.append(analysis.error_norms(_mesh, state, _exact,
                                                 delta=_delta))

            traj = solver.backward_euler_run(problem, mesh=mesh, T=T, dt=dt,
                                             observers=[observe])
            table.add_row(mesh.h_max(), dt, report.canonical())
            osc = analysis.oscillation_indicator(traj.final.p, mesh)
            if verbose:
                errs = report.canonical()
                flag = "  [flagged: oscillatory pressure]" if osc > 0.15 else ""
                print(f"[{label} delta={delta:g}] n={n} h={mesh.h_max():.4g} "
                      + " ".join(f"{k}={v:.3e}" for k, v in errs.items())
                      + f" osc={osc:.3f}{flag}")
        path = os.path.join(out_dir, f"{label}_delta{delta:g}.csv")
        analysis.write_convergence_csv(table, path)
        if len(table.rows) >= 2:
            final = {k: r[-1] for k, r in table.rates().items()}
            if verbose:
                print(f"[{label} delta={delta:g}] final rates "
                      + " ".join(f"{k}={v:.3f}" for k, v in final.items()))
            worst = min(worst, min(final.values()))
    return worst


def cmd_converge(args, dim):
    label = f"converge{dim}d"
    default_res = [8, 16, 32] if dim == 2 else [4, 8]
    default_deltas = [1.0, 10.0, 100.0] if dim == 2 else [0.001, 0.01, 0.1]
    resolutions = args.res or default_res
    deltas = args.delta or default_deltas
    factory = benchmarks.manufactured_2d if dim == 2 else benchmarks.manufactured_3d
    T = args.T if args.T is not None else 0.25
    threshold = args.rate_threshold
    if threshold is None:
        threshold = 0.9 if dim == 2 else 0.8
    dt_rule = (lambda n: args.dt) if args.dt is not None else None
    worst = run_convergence(factory, resolutions, deltas, T, args.out, label,
                            dt_rule=dt_rule)
    if worst < threshold:
        print(f"worst rate {worst:.3f} below threshold {threshold}")
        return EXIT_THRESHOLD
    if math.isinf(worst):
        print("single resolution: no rates to check")
    else:
        print(f"all rates >= {threshold}")
    return EXIT_OK


def cmd_cantilever(args):
    out = _ensure_out(args.out)
    deltas = args.delta or [0.0, 5e-6]
    res = (args.res or [48])[0]
    dt = args.dt if args.dt is not None else 0.001
    T = args.T if args.T is not None else 0.005
    indicators = {}
    for delta in deltas:
        problem = benchmarks.cantilever_setup(delta=delta)
        mesh = problem.build_mesh(res)
        traj = solver.backward_euler_run(problem, mesh=mesh, T=T, dt=dt)
        indicators[delta] = analysis.oscillation_indicator(traj.final.p, mesh)
        write_vtk(mesh, traj.final,
                  os.path.join(out, f"cantilever_delta{delta:g}.vtk"))
    with open(os.path.join(out, "cantilever_report.csv"), "w") as fh:
        fh.write("delta,oscillation_indicator\n")
        for delta, ind in indicators.items():
            fh.write(f"{delta:.17g},{ind:.17g}\n")
    for delta, ind in indicators.items():
        print(f"delta={delta:g} oscillation indicator={ind:.6f}")
    return EXIT_OK


def unconfined_curves(deltas, res=4, dt=None, T=None, snapshot_dt=1e-4):
    """Simulated normalized rim-displacement curves and the analytic series.

    Returns (times, {delta: curve}, armstrong values, {delta: rmse},
    instantaneous response per delta). Curves are normalized by radius and
    applied strain.
    """
    model = benchmarks.unconfined_armstrong_model()
    strain = model.eps0
    curves, rmses, instant = {}, {}, {}
    times = None
    for delta in deltas:
        problem = benchmarks.unconfined_setup(delta=delta)
        mesh = problem.build_mesh(res)
        dt_run = dt if dt is not None else problem.dt
        T_run = T if T is not None else problem.T
        vals = []
        traj = solver.backward_euler_run(problem, mesh=mesh, T=T_run, dt=dt_run)
        for state in traj.states[1:]:
            vals.append(benchmarks.rim_radial_displacement(mesh, state.u) / strain)
        times = np.array([s.t for s in traj.states[1:]])
        curves[delta] = np.array(vals)
        # instantaneous (t -> 0+) response via one tiny backward-Euler step
        stepper = solver.TimeStepper(problem, mesh, snapshot_dt)
        zero = solver.project_initial(problem, mesh, stepper.layout,
                                      stepper.matrices)
        inst = stepper.step(zero, snapshot_dt)
        instant[delta] = benchmarks.rim_radial_displacement(mesh, inst.u) / strain
        ref = benchmarks.armstrong_curve(times, model) / strain
        rmses[delta] = float(np.sqrt(np.mean((curves[delta] - ref) ** 2)))
    ref = benchmarks.armstrong_curve(times, model) / strain
    return times, curves, ref, rmses, instant


def cmd_unconfined(args):
    out = _ensure_out(args.out)
    deltas = args.delta or [0.001, 0.1, 1.0]
    res = (args.res or [4])[0]
    times, curves, ref, rmses, instant = unconfined_curves(
        deltas, res=res, dt=args.dt, T=args.T)
    model = benchmarks.unconfined_armstrong_model()
    with open(os.path.join(out, "unconfined_curves.csv"), "w") as fh:
        cols = ["t", "t_normalized", "armstrong"] + [f"sim_delta{d:g}" for d in deltas]
        fh.write(",".join(cols) + "\n")
        for i, t in enumerate(times):
            row = [t, t / model.t_g, ref[i]] + [curves[d][i] for d in deltas]
            fh.write(",".join(FMT.format(v) for v in row) + "\n")
    with open(os.path.join(out, "unconfined_report.csv"), "w") as fh:
        fh.write("delta,rmse,instantaneous,final\n")
        for d in deltas:
            fh.write(",".join(FMT.format(v) for v in
                              (d, rmses[d], instant[d], curves[d][-1])) + "\n")
    for d in deltas:
        print(f"delta={d:g} rmse={rmses[d]:.6e} t0+={instant[d]:.4f} "
              f"final={curves[d][-1]:.4f}")
    return EXIT_OK


def export_armstrong(path, n_points=200, t_max=None):
    model = benchmarks.unconfined_armstrong_model()
    t_max = 3.0 * model.t_g if t_max is None else t_max
    times = np.linspace(0.0, t_max, n_points)
    vals = benchmarks.armstrong_curve(times, model)
    with open(path, "w") as fh:
        fh.write("t,u_over_a\n")
        for t, v in zip(times, vals):
            fh.write(f"{FMT.format(t)},{FMT.format(v)}\n")


BENCHMARK_NAMES = ("manufactured2d", "manufactured3d", "cantilever", "unconfined")


def load_config(path):
    """Flat key-value config with sections. Recognized keys:

        [problem]  benchmark = manufactured2d | manufactured3d | cantilever | unconfined
                   resolution = N        delta = X
        [time]     dt = X                T = X
        [output]   dir = PATH            vtk_every = N
                   emit_vtk = yes|no     emit_csv = yes|no
                   compare_analytic = yes|no
    """
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise FileNotFoundError(path)
    cfg = {
        "benchmark": cp.get("problem", "benchmark", fallback=None),
        "resolution": cp.getint("problem", "resolution", fallback=None),
        "delta": cp.getfloat("problem", "delta", fallback=None),
        "dt": cp.getfloat("time", "dt", fallback=None),
        "T": cp.getfloat("time", "T", fallback=None),
        "out": cp.get("output", "dir", fallback="out"),
        "vtk_every": cp.getint("output", "vtk_every", fallback=0),
        "emit_vtk": cp.getboolean("output", "emit_vtk", fallback=False),
        "emit_csv": cp.getboolean("output", "emit_csv", fallback=True),
        "compare_analytic": cp.getboolean("output", "compare_analytic",
                                          fallback=False),
    }
    if cfg["benchmark"] not in BENCHMARK_NAMES:
        raise ValueError(f"config must name a benchmark from {BENCHMARK_NAMES}")
    if cfg["vtk_every"] < 0:
        raise ValueError("vtk_every must be >= 1 (or 0 to disable)")
    return cfg


def cmd_run(args):
    cfg = load_config(args.config)
    if args.delta:
        cfg["delta"] = args.delta[0]
    if args.dt is not None:
        cfg["dt"] = args.dt
    if args.T is not None:
        cfg["T"] = args.T
    if args.res:
        cfg["resolution"] = args.res[0]
    if args.out != "out":
        cfg["out"] = args.out
    if args.vtk_every:
        cfg["vtk_every"] = args.vtk_every
        cfg["emit_vtk"] = True
    out = _ensure_out(cfg["out"])
    name = cfg["benchmark"]

    exact = None
    delta = cfg["delta"]
    if name == "manufactured2d":
        problem, exact = benchmarks.manufactured_2d(
            delta=1.0 if delta is None else delta)
    elif name == "manufactured3d":
        problem, exact = benchmarks.manufactured_3d(
            delta=0.01 if delta is None else delta)
    elif name == "cantilever":
        problem = benchmarks.cantilever_setup(
            delta=5e-6 if delta is None else delta)
    else:
        problem = benchmarks.unconfined_setup(
            delta=0.001 if delta is None else delta)

    mesh = problem.build_mesh(cfg["resolution"])
    dt = cfg["dt"] or problem.dt
    T = cfg["T"] or problem.T
    observers = []
    if cfg["emit_vtk"] and cfg["vtk_every"]:
        every = cfg["vtk_every"]

        def vtk_observer(k, t, state):
            if k % every == 0:
                write_vtk(mesh, state, os.path.join(out, f"{name}_{k:05d}.vtk"))
        observers.append(vtk_observer)

    report = analysis.ErrorReport(dt=dt)
    if cfg["compare_analytic"] and exact is not None:
        def error_observer(k, t, state):
            if k:
                report.append(analysis.error_norms(mesh, state, exact,
                                                   delta=problem.params.delta))
        observers.append(error_observer)

    traj = solver.backward_euler_run(problem, mesh=mesh, T=T, dt=dt,
                                     observers=observers)
    if cfg["emit_vtk"]:
        write_vtk(mesh, traj.final, os.path.join(out, f"{name}_final.vtk"))
    if cfg["emit_csv"]:
        with open(os.path.join(out, f"{name}_summary.csv"), "w") as fh:
            fh.write("t,oscillation_indicator\n")
            for state in traj.states:
                ind = analysis.oscillation_indicator(state.p, mesh)
                fh.write(f"{FMT.format(state.t)},{FMT.format(ind)}\n")
    if cfg["compare_analytic"] and exact is not None and report.steps:
        agg = report.aggregates()
        with open(os.path.join(out, f"{name}_errors.csv"), "w") as fh:
            fh.write(",".join(agg) + "\n")
            fh.write(",".join(FMT.format(v) for v in agg.values()) + "\n")
    print(f"{name}: {len(traj) - 1} steps written to {out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="porofem",
        description="Stabilized P1/P1/P0 poroelasticity benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--delta", type=_float_list,
                       default=_env_default("DELTA"),
                       help="comma-separated stabilization parameters")
        p.add_argument("--dt", type=float, default=_env_default("DT"))
        p.add_argument("--T", type=float, default=_env_default("T"))
        p.add_argument("--res", type=_int_list, default=_env_default("RES"),
                       help="comma-separated mesh resolutions")
        p.add_argument("--out", default=_env_default("OUT", "out"))
        p.add_argument("--vtk-every", type=int,
                       default=_env_default("VTK_EVERY", 0))

    for name in ("converge2d", "converge3d"):
        p = sub.add_parser(name, help=f"{name[-2:]} manufactured convergence study")
        common(p)
        p.add_argument("--rate-threshold", type=float, default=None)
    p = sub.add_parser("cantilever", help="locking test with pressure snapshots")
    common(p)
    p = sub.add_parser("unconfined", help="unconfined compression vs Armstrong")
    common(p)
    p = sub.add_parser("run", help="config-driven run")
    p.add_argument("config")
    common(p)
    p = sub.add_parser("armstrong", help="export the analytic reference curve")
    common(p)
    return parser


def _normalize(args):
    # env-var defaults arrive as strings; run them through the parsers
    if isinstance(args.delta, str):
        args.delta = _float_list(args.delta)
    if isinstance(args.res, str):
        args.res = _int_list(args.res)
    for key in ("dt", "T"):
        v = getattr(args, key)
        if isinstance(v, str):
            setattr(args, key, float(v))
    if isinstance(args.vtk_every, str):
        args.vtk_every = int(args.vtk_every)
    return args


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _normalize(args)
        if args.command == "converge2d":
            return cmd_converge(args, 2)
        if args.command == "converge3d":
            return cmd_converge(args, 3)
        if args.command == "cantilever":
            return cmd_cantilever(args)
        if args.command == "unconfined":
            return cmd_unconfined(args)
        if args.command == "armstrong":
            _ensure_out(args.out)
            export_armstrong(os.path.join(args.out, "armstrong.csv"))
            return EXIT_OK
        if args.command == "run":
            return cmd_run(args)
        parser.error(f"unknown command {args.command}")
    except solver.SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, FileNotFoundError, argparse.ArgumentTypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
