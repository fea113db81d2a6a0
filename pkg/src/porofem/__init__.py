"""Stabilized low-order (P1/P1/P0) finite elements for linear three-field
Biot poroelasticity with local pressure-jump stabilization."""

from .analysis import (ConvergenceTable, ErrorReport, aggregate_in_time,
                       convergence_rates, error_norms, jump_seminorm,
                       oscillation_indicator)
from .assembly import (MaterialParams, apply_dirichlet, assemble_darcy_mass,
                       assemble_divergence, assemble_elasticity,
                       assemble_jump_stabilization, assemble_loads,
                       assemble_pressure_mass)
from .benchmarks import (ArmstrongModel, armstrong_radial_displacement,
                         bessel_j0, bessel_j1, cantilever_setup,
                         characteristic_roots, manufactured_2d,
                         manufactured_3d, unconfined_setup)
from .fespace import (AnalyticField, DofLayout, collect_dirichlet,
                      interpolate_p1, make_layout, p1_reference_gradients,
                      project_p0)
from .mesh import (FacetRecord, Mesh, build_facets, cylinder_mesh, read_mesh,
                   unit_cube_mesh, unit_square_mesh, write_mesh)
from .problems import BoundaryCondition, ExactFields, ProblemDefinition
from .quadrature import QuadRule, facet_rule, simplex_rule
from .solver import (BlockSystem, SingularSystemError, SolverError, State,
                     Trajectory, backward_euler_run, build_block_system,
                     project_initial, sparse_solve)

__version__ = "0.1.0"
