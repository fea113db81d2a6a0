"""Problem definitions: mesh recipe, material parameters, boundary conditions,
sources, initial data and time window for one simulation."""

from dataclasses import dataclass, field

import numpy as np

BC_KINDS = ("displacement", "traction", "pressure", "flux")


@dataclass
class BoundaryCondition:
    kind: str
    markers: tuple
    field: object = None          # AnalyticField, or None for homogeneous data
    components: tuple = None      # displacement only: restrict to components

    def __post_init__(self):
        if self.kind not in BC_KINDS:
            raise ValueError(f"unknown boundary condition kind {self.kind!r}")
        if isinstance(self.markers, int):
            self.markers = (self.markers,)
        self.markers = tuple(self.markers)


@dataclass
class ExactFields:
    u: object
    z: object
    p: object


@dataclass
class ProblemDefinition:
    name: str
    mesh_recipe: callable            # resolution -> Mesh
    params: object                   # MaterialParams
    bcs: list
    f: object = None                 # mixture body force
    b: object = None                 # fluid body force
    g: object = None                 # fluid source
    initial_u: object = None
    initial_p: object = None
    initial_z: object = None
    T: float = 1.0
    dt: float = 0.1
    default_resolution: int = 8
    pressure_mean_constraint: bool = False
    extra_dirichlet: callable = None  # (mesh, layout) -> {dof: value} rigid-mode pins
    _mesh_cache: dict = field(default_factory=dict, repr=False)

    def build_mesh(self, resolution=None):
        n = self.default_resolution if resolution is None else resolution
        if n not in self._mesh_cache:
            mesh = self.mesh_recipe(n)
            validate_bc_coverage(self, mesh)
            self._mesh_cache[n] = mesh
        return self._mesh_cache[n]

    def bcs_of_kind(self, *kinds):
        return [bc for bc in self.bcs if bc.kind in kinds]


def validate_bc_coverage(problem, mesh):
    """Every boundary facet must carry exactly one mixture condition
    (displacement or traction) and exactly one fluid condition (pressure or
    flux)."""
    mixture = np.zeros(len(mesh.facets), dtype=int)
    fluid = np.zeros(len(mesh.facets), dtype=int)
    for bc in problem.bcs:
        idx = mesh.facets_with_marker(bc.markers)
        if bc.kind in ("displacement", "traction"):
            mixture[idx] += 1
        else:
            fluid[idx] += 1
    boundary = mesh.boundary_facets()
    for i in boundary:
        if mixture[i] != 1:
            raise ValueError(
                f"boundary facet {i} carries {mixture[i]} mixture conditions")
        if fluid[i] != 1:
            raise ValueError(
                f"boundary facet {i} carries {fluid[i]} fluid conditions")
