"""Simplicial meshes (triangles/tetrahedra) with facet adjacency and boundary markers.

Boundary marker registry used by the built-in generators:

    unit_square_mesh:  left=1, right=2, bottom=3, top=4
    unit_cube_mesh:    xmin=1, xmax=2, ymin=3, ymax=4, zmin=5, zmax=6
    cylinder_mesh:     bottom=1, top=2, lateral=3

Marker names are also available on each generated mesh via ``mesh.marker_names``.
"""

from dataclasses import dataclass, field

import numpy as np

_GEOM_TOL = 1e-12


class MeshTopologyError(Exception):
    """Raised for non-manifold connectivity (a facet shared by more than two cells)."""


class MeshParseError(Exception):
    """Raised for malformed mesh files; carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass
class FacetRecord:
    """One (d-1)-subsimplex of the mesh.

    ``normals[k]`` is the unit normal pointing out of ``cells[k]``; ``h`` is the
    stabilization length scale (edge length in 2D, longest edge of the face in
    3D) and ``measure`` the integration measure (length in 2D, area in 3D).
    """

    vertices: tuple
    cells: tuple
    normals: tuple
    h: float
    measure: float
    interior: bool


@dataclass
class Mesh:
    dim: int
    vertices: np.ndarray           # (V, dim) float
    cells: np.ndarray              # (C, dim+1) int, positively oriented
    facets: list = field(default_factory=list)
    boundary_markers: dict = field(default_factory=dict)   # facet index -> tag
    marker_names: dict = field(default_factory=dict)       # name -> tag

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.cells = np.ascontiguousarray(self.cells, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != self.dim:
            raise ValueError("vertex array shape does not match mesh dimension")
        if self.cells.ndim != 2 or self.cells.shape[1] != self.dim + 1:
            raise ValueError("cell array shape does not match mesh dimension")
        if self.cells.size and (self.cells.min() < 0 or self.cells.max() >= len(self.vertices)):
            raise ValueError("cell vertex index out of range")
        self._orient_cells()
        keys = {tuple(sorted(c)) for c in self.cells.tolist()}
        if len(keys) != len(self.cells):
            raise ValueError("duplicate cells")

    def _orient_cells(self):
        vols = self.signed_volumes()
        flip = vols < 0
        if np.any(flip):
            self.cells[flip, -2], self.cells[flip, -1] = (
                self.cells[flip, -1].copy(), self.cells[flip, -2].copy())
            vols = self.signed_volumes()
        if np.any(vols <= 0):
            bad = int(np.argmin(vols))
            raise ValueError(f"degenerate cell {bad} (zero volume)")

    # -- geometry ---------------------------------------------------------

    def edge_matrices(self):
        """Rows of E[c] are the edge vectors x_i - x_0, i = 1..d."""
        x = self.vertices[self.cells]
        return x[:, 1:, :] - x[:, :1, :]

    def signed_volumes(self):
        from math import factorial
        return np.linalg.det(self.edge_matrices()) / factorial(self.dim)

    def volumes(self):
        return self.signed_volumes()

    def cell_diameters(self):
        x = self.vertices[self.cells]
        d = 0.0
        nv = self.dim + 1
        diam = np.zeros(len(self.cells))
        for i in range(nv):
            for j in range(i + 1, nv):
                diam = np.maximum(diam, np.linalg.norm(x[:, i] - x[:, j], axis=1))
        return diam

    def h_max(self):
        return float(self.cell_diameters().max())

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_cells(self):
        return len(self.cells)

    def interior_facets(self):
        return [f for f in self.facets if f.interior]

    def boundary_facets(self):
        return [i for i, f in enumerate(self.facets) if not f.interior]

    def facets_with_marker(self, tags):
        """Indices of boundary facets whose tag is in ``tags``."""
        if isinstance(tags, int):
            tags = {tags}
        known = set(self.boundary_markers.values())
        unknown = set(tags) - known
        if unknown:
            raise ValueError(f"unknown boundary marker(s) {sorted(unknown)}")
        return [i for i, t in self.boundary_markers.items() if t in tags]


def build_facets(mesh):
    """Populate ``mesh.facets`` with every (d-1)-subsimplex, adjacency and normals.

    Raises MeshTopologyError if a facet is shared by more than two cells.
    """
    dim = mesh.dim
    incidence = {}
    # local facet l of a cell = all vertices except local vertex l
    for c, cell in enumerate(mesh.cells.tolist()):
        for l in range(dim + 1):
            key = tuple(sorted(cell[:l] + cell[l + 1:]))
            entry = incidence.setdefault(key, [])
            if len(entry) >= 2:
                raise MeshTopologyError(
                    f"facet {key} shared by more than two cells")
            entry.append(c)

    cell_centroids = mesh.vertices[mesh.cells].mean(axis=1)
    facets = []
    for key in sorted(incidence):
        cells = tuple(incidence[key])
        pts = mesh.vertices[list(key)]
        if dim == 2:
            t = pts[1] - pts[0]
            length = float(np.linalg.norm(t))
            n = np.array([t[1], -t[0]]) / length
            h = length
            measure = length
        else:
            e1 = pts[1] - pts[0]
            e2 = pts[2] - pts[0]
            cross = np.cross(e1, e2)
            area2 = float(np.linalg.norm(cross))
            n = cross / area2
            measure = 0.5 * area2
            h = max(np.linalg.norm(e1), np.linalg.norm(e2),
                    np.linalg.norm(pts[2] - pts[1]))
        mid = pts.mean(axis=0)
        normals = []
        for c in cells:
            out = n if np.dot(n, mid - cell_centroids[c]) > 0 else -n
            normals.append(out)
        facets.append(FacetRecord(
            vertices=key, cells=cells, normals=tuple(normals),
            h=float(h), measure=float(measure), interior=len(cells) == 2))
    mesh.facets = facets
    return mesh


def _mark_by_plane(mesh, predicates):
    """Tag boundary facets whose vertices all satisfy a coordinate predicate."""
    markers = {}
    for i, f in enumerate(mesh.facets):
        if f.interior:
            continue
        pts = mesh.vertices[list(f.vertices)]
        for tag, pred in predicates:
            if np.all(pred(pts)):
                markers[i] = tag
                break
        else:
            raise MeshTopologyError(f"boundary facet {i} matched no marker region")
    mesh.boundary_markers = markers
    return mesh


def unit_square_mesh(n):
    """Uniform criss mesh of the unit square: (n+1)^2 vertices, 2 n^2 triangles.

    All diagonals run lower-left to upper-right.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i * (n + 1) + j

    cells = []
    for i in range(n):
        for j in range(n):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v11, v01 = vid(i + 1, j + 1), vid(i, j + 1)
            cells.append((v00, v10, v11))
            cells.append((v00, v11, v01))
    mesh = Mesh(2, verts, np.array(cells))
    build_facets(mesh)
    _mark_by_plane(mesh, [
        (1, lambda p: np.abs(p[:, 0]) < _GEOM_TOL),
        (2, lambda p: np.abs(p[:, 0] - 1.0) < _GEOM_TOL),
        (3, lambda p: np.abs(p[:, 1]) < _GEOM_TOL),
        (4, lambda p: np.abs(p[:, 1] - 1.0) < _GEOM_TOL),
    ])
    mesh.marker_names = {"left": 1, "right": 2, "bottom": 3, "top": 4}
    return mesh


def unit_cube_mesh(n):
    """Kuhn split of an n^3 grid: (n+1)^3 vertices, 6 n^3 tetrahedra."""
    if n < 1:
        raise ValueError("n must be >= 1")
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y, Z = np.meshgrid(xs, xs, xs, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def vid(i, j, k):
        return (i * (n + 1) + j) * (n + 1) + k

    from itertools import permutations
    perms = list(permutations(range(3)))
    cells = []
    for i in range(n):
        for j in range(n):
            for k in range(n):
                base = np.array([i, j, k])
                for perm in perms:
                    corner = base.copy()
                    tet = [vid(*corner)]
                    for ax in perm:
                        corner = corner.copy()
                        corner[ax] += 1
                        tet.append(vid(*corner))
                    cells.append(tet)
    mesh = Mesh(3, verts, np.array(cells))
    build_facets(mesh)
    _mark_by_plane(mesh, [
        (1, lambda p: np.abs(p[:, 0]) < _GEOM_TOL),
        (2, lambda p: np.abs(p[:, 0] - 1.0) < _GEOM_TOL),
        (3, lambda p: np.abs(p[:, 1]) < _GEOM_TOL),
        (4, lambda p: np.abs(p[:, 1] - 1.0) < _GEOM_TOL),
        (5, lambda p: np.abs(p[:, 2]) < _GEOM_TOL),
        (6, lambda p: np.abs(p[:, 2] - 1.0) < _GEOM_TOL),
    ])
    mesh.marker_names = {"xmin": 1, "xmax": 2, "ymin": 3,
                         "ymax": 4, "zmin": 5, "zmax": 6}
    return mesh


def _disk_triangulation(radius, n_radial):
    """Concentric-ring triangulation of a disk.

    Ring j carries ``sectors * j`` nodes; with one ring, 12 sectors keep the
    inscribed polygon within 5% of the disk area.
    """
    sectors = 12 if n_radial == 1 else 6
    pts = [(0.0, 0.0)]
    ring_start = [None]  # ring 0 is the centre point
    for j in range(1, n_radial + 1):
        ring_start.append(len(pts))
        m = sectors * j
        r = radius * j / n_radial
        for k in range(m):
            a = 2.0 * np.pi * k / m
            pts.append((r * np.cos(a), r * np.sin(a)))

    def ring_node(j, k):
        if j == 0:
            return 0
        return ring_start[j] + k % (sectors * j)

    tris = []
    for j in range(1, n_radial + 1):
        for s in range(sectors):
            outer = [ring_node(j, s * j + i) for i in range(j + 1)]
            inner = [ring_node(j - 1, s * (j - 1) + i) for i in range(j)]
            for i in range(j):
                tris.append((outer[i], outer[i + 1], inner[i]))
            for i in range(j - 1):
                tris.append((outer[i + 1], inner[i + 1], inner[i]))
    return np.array(pts), tris


def cylinder_mesh(radius, height, n_radial, n_axial):
    """Tetrahedral cylinder mesh: ring-triangulated disk extruded into prisms,
    each prism split into 3 tets with index-consistent quad diagonals."""
    if radius <= 0 or height <= 0:
        raise ValueError("radius and height must be positive")
    if n_radial < 1 or n_axial < 1:
        raise ValueError("n_radial and n_axial must be >= 1")
    disk, tris = _disk_triangulation(radius, n_radial)
    npl = len(disk)  # nodes per layer
    zs = np.linspace(0.0, height, n_axial + 1)
    verts = np.column_stack([
        np.tile(disk[:, 0], n_axial + 1),
        np.tile(disk[:, 1], n_axial + 1),
        np.repeat(zs, npl),
    ])
    cells = []
    for layer in range(n_axial):
        lo = layer * npl
        hi = lo + npl
        for tri in tris:
            # sort columns by global index so shared quad faces split alike
            a, b, c = sorted(tri)
            cells.append((lo + a, lo + b, lo + c, hi + c))
            cells.append((lo + a, lo + b, hi + c, hi + b))
            cells.append((lo + a, hi + b, hi + c, hi + a))
    mesh = Mesh(3, verts, np.array(cells))
    build_facets(mesh)
    _mark_by_plane(mesh, [
        (1, lambda p: np.abs(p[:, 2]) < _GEOM_TOL * max(1.0, height)),
        (2, lambda p: np.abs(p[:, 2] - height) < _GEOM_TOL * max(1.0, height)),
        (3, lambda p: np.ones(len(p), dtype=bool)),
    ])
    mesh.marker_names = {"bottom": 1, "top": 2, "lateral": 3}
    return mesh


def write_mesh(mesh, path):
    """Write the ASCII v1 format; see read_mesh for the layout."""
    with open(path, "w") as fh:
        fh.write(f"porofem-mesh v1 {mesh.dim}\n")
        fh.write(f"{mesh.num_vertices}\n")
        for v in mesh.vertices:
            fh.write(" ".join(repr(float(x)) for x in v) + "\n")
        fh.write(f"{mesh.num_cells}\n")
        for c in mesh.cells:
            fh.write(" ".join(str(int(i)) for i in c) + "\n")
        if mesh.boundary_markers:
            fh.write(f"{len(mesh.boundary_markers)}\n")
            for fi, tag in sorted(mesh.boundary_markers.items()):
                vv = " ".join(str(v) for v in mesh.facets[fi].vertices)
                fh.write(f"{vv} {tag}\n")


def read_mesh(path):
    """Read the ASCII mesh format:

        porofem-mesh v1 <dim>
        <nv>                 followed by nv lines of dim floats
        <nc>                 followed by nc lines of dim+1 vertex indices
        [<nb>]               followed by nb lines: facet vertex indices + tag
    """
    with open(path) as fh:
        lines = fh.read().splitlines()
    pos = 0

    def next_line():
        nonlocal pos
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines):
            raise MeshParseError("unexpected end of file", line=len(lines))
        pos += 1
        return lines[pos - 1], pos

    header, ln = next_line()
    parts = header.split()
    if len(parts) != 3 or parts[0] != "porofem-mesh" or parts[1] != "v1":
        raise MeshParseError(f"bad header {header!r}", line=ln)
    try:
        dim = int(parts[2])
    except ValueError:
        raise MeshParseError("dimension is not an integer", line=ln)
    if dim not in (2, 3):
        raise MeshParseError(f"unsupported dimension {dim}", line=ln)

    def read_count(what):
        text, ln = next_line()
        try:
            n = int(text)
        except ValueError:
            raise MeshParseError(f"expected {what} count, got {text!r}", line=ln)
        if n < 0:
            raise MeshParseError(f"negative {what} count", line=ln)
        return n

    nv = read_count("vertex")
    verts = np.empty((nv, dim))
    for i in range(nv):
        text, ln = next_line()
        vals = text.split()
        if len(vals) != dim:
            raise MeshParseError(f"expected {dim} coordinates", line=ln)
        try:
            verts[i] = [float(v) for v in vals]
        except ValueError:
            raise MeshParseError(f"bad coordinate in {text!r}", line=ln)

    nc = read_count("cell")
    cells = np.empty((nc, dim + 1), dtype=np.int64)
    for i in range(nc):
        text, ln = next_line()
        vals = text.split()
        if len(vals) != dim + 1:
            raise MeshParseError(f"expected {dim + 1} vertex indices", line=ln)
        try:
            idx = [int(v) for v in vals]
        except ValueError:
            raise MeshParseError(f"bad vertex index in {text!r}", line=ln)
        if any(v < 0 or v >= nv for v in idx):
            raise MeshParseError(f"vertex index out of range in {text!r}", line=ln)
        cells[i] = idx

    mesh = Mesh(dim, verts, cells)
    build_facets(mesh)

    remaining = [l for l in lines[pos:] if l.strip()]
    if remaining:
        nb = read_count("boundary marker")
        key_to_index = {f.vertices: i for i, f in enumerate(mesh.facets)}
        markers = {}
        for _ in range(nb):
            text, ln = next_line()
            vals = text.split()
            if len(vals) != dim + 1:
                raise MeshParseError("expected facet vertices and tag", line=ln)
            try:
                ivals = [int(v) for v in vals]
            except ValueError:
                raise MeshParseError(f"bad marker line {text!r}", line=ln)
            key = tuple(sorted(ivals[:-1]))
            if key not in key_to_index:
                raise MeshParseError(f"marker names unknown facet {key}", line=ln)
            markers[key_to_index[key]] = ivals[-1]
        mesh.boundary_markers = markers
    return mesh
