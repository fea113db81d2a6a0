import numpy as np
import pytest

from porofem import mesh as pm


def test_unit_square_single_split():
    m = pm.unit_square_mesh(1)
    assert m.num_vertices == 4
    assert m.num_cells == 2
    assert sum(f.interior for f in m.facets) == 1


def test_unit_square_n2_counts():
    # Euler: V - E + F = 1 with V=9, F=8 gives E=16; 8 boundary edges leave 8 interior
    m = pm.unit_square_mesh(2)
    assert m.num_vertices == 9
    assert m.num_cells == 8
    assert len(m.facets) == 16
    assert sum(f.interior for f in m.facets) == 8


def test_unit_square_n4_counts():
    m = pm.unit_square_mesh(4)
    assert m.num_vertices == 25
    assert m.num_cells == 32


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_square_euler_formula(n):
    m = pm.unit_square_mesh(n)
    V, E, F = m.num_vertices, len(m.facets), m.num_cells
    assert V - E + F == 1


def test_unit_square_rejects_zero():
    with pytest.raises(ValueError):
        pm.unit_square_mesh(0)
    with pytest.raises(ValueError):
        pm.unit_cube_mesh(0)


def test_unit_cube_n1_counts():
    # 6*4 = 24 face incidences, 12 boundary faces, (24-12)/2 = 6 interior
    m = pm.unit_cube_mesh(1)
    assert m.num_vertices == 8
    assert m.num_cells == 6
    assert len(m.facets) == 18
    assert sum(f.interior for f in m.facets) == 6


def test_unit_cube_n2_counts():
    m = pm.unit_cube_mesh(2)
    assert m.num_vertices == 27
    assert m.num_cells == 48


@pytest.mark.parametrize("maker,n,vol", [
    (pm.unit_square_mesh, 3, 1.0),
    (pm.unit_cube_mesh, 2, 1.0),
])
def test_generated_volumes(maker, n, vol):
    m = maker(n)
    assert np.all(m.volumes() > 0)
    assert abs(m.volumes().sum() - vol) < 1e-12


@pytest.mark.parametrize("nr,na", [(1, 1), (2, 1), (3, 2), (4, 4)])
def test_cylinder_volume_within_5_percent(nr, na):
    r, h = 2.0, 3.0
    m = pm.cylinder_mesh(r, h, nr, na)
    exact = np.pi * r * r * h
    assert np.all(m.volumes() > 0)
    assert abs(m.volumes().sum() - exact) / exact < 0.05


def test_cylinder_lateral_vertices_on_radius():
    m = pm.cylinder_mesh(1.0, 1.0, 1, 1)
    lateral = [i for i, t in m.boundary_markers.items() if t == 3]
    for fi in lateral:
        pts = m.vertices[list(m.facets[fi].vertices)]
        r = np.hypot(pts[:, 0], pts[:, 1])
        # every lateral facet touches the rim
        assert np.any(np.abs(r - 1.0) < 1e-9)
    rim = np.hypot(m.vertices[:, 0], m.vertices[:, 1])
    assert np.all((rim < 1e-9) | (np.abs(rim - 1.0) < 1e-9))


def test_cylinder_rejects_degenerate():
    with pytest.raises(ValueError):
        pm.cylinder_mesh(0.0, 1.0, 1, 1)
    with pytest.raises(ValueError):
        pm.cylinder_mesh(1.0, 1.0, 0, 1)


def test_facet_adjacency_is_involution():
    m = pm.unit_square_mesh(3)
    for f in m.facets:
        for c in f.cells:
            cell_facets = [tuple(sorted(set(m.cells[c]) - {v}))
                           for v in m.cells[c]]
            assert f.vertices in cell_facets


def test_interior_normals_antiparallel():
    for m in (pm.unit_square_mesh(2), pm.unit_cube_mesh(2)):
        for f in m.facets:
            assert abs(np.linalg.norm(f.normals[0]) - 1.0) < 1e-12
            if f.interior:
                assert np.allclose(f.normals[0] + f.normals[1], 0.0, atol=1e-12)


def test_h_halves_on_refinement():
    for maker in (pm.unit_square_mesh, pm.unit_cube_mesh):
        h1 = maker(2).h_max()
        h2 = maker(4).h_max()
        assert abs(h1 / h2 - 2.0) < 0.05 * 2.0


def test_nonmanifold_rejected():
    verts = np.array([[0.0, 0], [1, 0], [0, 1], [-1, 0.5], [1, 1]])
    cells = np.array([[0, 1, 2], [0, 2, 3], [0, 2, 4]])
    with pytest.raises(pm.MeshTopologyError):
        pm.build_facets(pm.Mesh(2, verts, cells))


def test_duplicate_cells_rejected():
    verts = np.array([[0.0, 0], [1, 0], [0, 1]])
    with pytest.raises(ValueError):
        pm.Mesh(2, verts, np.array([[0, 1, 2], [1, 2, 0]]))


def test_roundtrip_square(tmp_path):
    m = pm.unit_square_mesh(2)
    path = tmp_path / "square.msh"
    pm.write_mesh(m, path)
    m2 = pm.read_mesh(path)
    assert np.array_equal(m.cells, m2.cells)
    assert np.max(np.abs(m.vertices - m2.vertices)) < 1e-15
    assert m.boundary_markers == m2.boundary_markers


def test_roundtrip_cylinder(tmp_path):
    m = pm.cylinder_mesh(1.0, 2.0, 2, 2)
    path = tmp_path / "cyl.msh"
    pm.write_mesh(m, path)
    m2 = pm.read_mesh(path)
    assert np.array_equal(m.cells, m2.cells)
    assert np.max(np.abs(m.vertices - m2.vertices)) < 1e-15


def test_read_rejects_out_of_range_index(tmp_path):
    path = tmp_path / "bad.msh"
    path.write_text("porofem-mesh v1 2\n3\n0 0\n1 0\n0 1\n1\n0 1 9\n")
    with pytest.raises(pm.MeshParseError):
        pm.read_mesh(path)


def test_read_rejects_empty_file(tmp_path):
    path = tmp_path / "empty.msh"
    path.write_text("")
    with pytest.raises(pm.MeshParseError):
        pm.read_mesh(path)


def test_read_reports_line_numbers(tmp_path):
    path = tmp_path / "bad2.msh"
    path.write_text("porofem-mesh v1 2\n2\n0 0\nnot-a-number 0\n")
    with pytest.raises(pm.MeshParseError) as err:
        pm.read_mesh(path)
    assert "line 4" in str(err.value)


def test_unknown_marker_query():
    m = pm.unit_square_mesh(1)
    with pytest.raises(ValueError):
        m.facets_with_marker({99})
