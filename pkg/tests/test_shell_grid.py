import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bcc_node_density
from tetrashell.closest import ClosestPointIndex, signed_inside
from tetrashell.grid import (BCC_MEAN_EDGE, SummitHierarchy, TetraGrid, assign_part_labels, bcc_lattice,
                             build_hierarchy, farthest_point_sampling, lattice_spacing, load_grid,
                             load_hierarchy, save_grid, save_hierarchy, tet_signed_volumes, tetrahedralize)
from tetrashell.mesh import TriMesh
from tetrashell.primitives import box, cylinder, icosphere
from tetrashell.shell import build_shell, decimate, decimation_cell_size, inflate_mesh, subdivide_midpoint
from tetrashell.skinning import SkinnedTemplate


@pytest.fixture(scope="module")
def sphere_grid():
    shell = icosphere(4, 0.5).with_normals()
    return shell, tetrahedralize(shell, 0.05)


# --- shell operations --------------------------------------------------------------

def test_inflate_sphere_radius():
    out = inflate_mesh(icosphere(3, 0.5), 0.05)
    np.testing.assert_allclose(np.linalg.norm(out.vertices, axis=1), 0.55, atol=1e-3)
    assert np.array_equal(out.faces, icosphere(3, 0.5).faces)


@pytest.mark.parametrize("offset", [0.0, -0.1])
def test_inflate_rejects_nonpositive_offset(offset):
    with pytest.raises(ValueError):
        inflate_mesh(icosphere(1), offset)


def test_inflate_cube_moves_corners_along_averaged_normals():
    cube = box((1, 1, 1))
    out = inflate_mesh(cube, 0.1)
    m = cube.with_normals()
    np.testing.assert_allclose(out.vertices, cube.vertices + 0.1 * m.vertex_normals)
    # each corner normal is diagonal in a cube (all incident faces weigh equally per axis)
    comp = np.abs(m.vertex_normals)
    assert np.all(comp > 0.3)
    # face-center distance along a face normal grows by about the offset
    grown = out.vertices[:, 0].max() - cube.vertices[:, 0].max()
    assert 0.04 < grown < 0.1


def test_decimate_sphere_to_target():
    s = icosphere(4, 1.0)
    assert s.n_vertices == 2562
    out = decimate(s, 256)
    assert 205 <= out.n_vertices <= 307
    r = np.linalg.norm(out.vertices, axis=1)
    assert np.mean(np.abs(r - 1.0)) < 0.1
    assert len(out.boundary_edges()) == 0


def test_decimate_hausdorff_below_two_cells():
    s = icosphere(4, 1.0)
    out = decimate(s, 300)
    cell = decimation_cell_size(s, 300)
    d_ab = ClosestPointIndex(out).query(s.vertices).distances.max()
    d_ba = ClosestPointIndex(s).query(out.vertices).distances.max()
    assert max(d_ab, d_ba) < 2 * cell


def test_decimate_rejects_non_reducing_target():
    s = icosphere(2)
    with pytest.raises(ValueError):
        decimate(s, s.n_vertices)


def test_subdivide_identity_and_counts():
    s = icosphere(2)
    assert subdivide_midpoint(s, 0) is s
    tri = TriMesh(np.eye(3), [[0, 1, 2]])
    one = subdivide_midpoint(tri, 1)
    assert (one.n_vertices, one.n_faces) == (6, 4)
    out = subdivide_midpoint(s, 1)
    assert out.n_vertices == s.n_vertices + len(s.edges())
    assert out.n_faces == 4 * s.n_faces
    assert len(np.unique(out.vertices, axis=0)) == out.n_vertices


def test_decimate_subdivide_keep_closedness():
    s = icosphere(4)
    assert len(subdivide_midpoint(decimate(s, 400), 1).boundary_edges()) == 0
    assert len(decimate(subdivide_midpoint(s, 1), 800).boundary_edges()) == 0


def test_build_shell_pipeline():
    shell = build_shell(icosphere(4, 0.5), 0.04, decimate_to=500, subdivisions=1)
    assert len(shell.boundary_edges()) == 0
    assert shell.vertex_normals is not None
    r = np.linalg.norm(shell.vertices, axis=1)
    assert abs(r.mean() - 0.54) < 0.01


# --- BCC lattice and tetrahedralization -------------------------------------------

def test_bcc_lattice_unit_box():
    nodes, tets = bcc_lattice([0, 0, 0], [1, 1, 1], 0.25)
    vol = tet_signed_volumes(nodes, tets)
    assert len(tets) == 576
    np.testing.assert_allclose(vol, 0.25 ** 3 / 12)
    # tetrahedra tile the interior of the center lattice: total volume = covered cells
    assert np.isclose(vol.sum(), 576 * 0.25 ** 3 / 12)


def test_bcc_mean_edge_constant():
    a = 1.0
    short = np.sqrt(3) / 2 * a
    # each lattice node has 8 diagonal (short) and 6 axis (long) neighbors
    assert np.isclose(BCC_MEAN_EDGE, (8 * short + 6 * a) / 14)
    nodes, tets = bcc_lattice([0, 0, 0], [3, 3, 3], lattice_spacing(0.2))
    g = TetraGrid(nodes, tets, np.zeros(len(nodes), np.int64), 0.2)
    assert abs(g.mean_edge_length() - 0.2) / 0.2 < 0.05


def test_sphere_summit_count_matches_density(sphere_grid):
    _, g = sphere_grid
    expect = 4 / 3 * np.pi * 0.55 ** 3 * bcc_node_density(lattice_spacing(0.05))
    assert abs(g.n_summits / expect - 1.0) <= 0.15


def test_grid_invariants(sphere_grid):
    _, g = sphere_grid
    assert np.all(g.signed_volumes() > 0)
    t = np.sort(g.tetrahedra, axis=1)
    assert np.all(np.diff(t, axis=1) > 0)
    used = np.zeros(g.n_summits, bool)
    used[g.tetrahedra.ravel()] = True
    assert used.all()
    assert abs(g.mean_edge_length() - 0.05) / 0.05 <= 0.3


def test_keep_rule_against_brute_force(sphere_grid):
    shell, g = sphere_grid
    inside = signed_inside(ClosestPointIndex(shell), g.summits)
    assert np.all(inside[g.tetrahedra].any(axis=1))
    # every lattice tetrahedron with an inside summit is present
    a = lattice_spacing(0.05)
    lo, hi = shell.vertices.min(0), shell.vertices.max(0)
    nodes, tets = bcc_lattice(lo - a, hi + a, a)
    inside_all = np.linalg.norm(nodes, axis=1) < 0.49  # safely inside the polyhedral sphere
    expected = tets[inside_all[tets].any(axis=1)]
    have = {tuple(x) for x in np.round(g.summits[np.sort(g.tetrahedra, axis=1)], 6).reshape(-1, 12)}
    exp_pts = np.round(nodes[np.sort(expected, axis=1)].astype(np.float32).astype(np.float64), 6).reshape(-1, 12)
    # compare as point sets (summit indices are renumbered)
    have_sets = {frozenset(map(tuple, np.array(k).reshape(4, 3))) for k in have}
    assert all(frozenset(map(tuple, k.reshape(4, 3))) in have_sets for k in exp_pts)


def test_resolution_larger_than_shell_is_rejected():
    with pytest.raises(ValueError):
        tetrahedralize(icosphere(2, 0.5).with_normals(), 2.0)


def test_open_shell_is_rejected():
    s = icosphere(3, 0.5)
    open_shell = TriMesh(s.vertices, s.faces[: s.n_faces // 2]).with_normals()
    with pytest.raises(ValueError, match="open"):
        tetrahedralize(open_shell, 0.05)


# --- labels and hierarchy ----------------------------------------------------------

def two_bone_template():
    cyl = cylinder(0.1, -0.5, 0.5, 16, 10)
    w = np.where(cyl.vertices[:, 2:3] >= 0, [[0.0, 1.0]], [[1.0, 0.0]])
    joints = [[0, 0, -0.5], [0, 0, 0.5]]
    return SkinnedTemplate(cyl.vertices, w, joints, [-1, 0], bone_names=["lower", "upper"], faces=cyl.faces)


def test_part_labels_two_bone_cylinder():
    t = two_bone_template()
    pts = np.array([[0, 0, 0.3], [0, 0, -0.3], [0.05, 0, 0.45]])
    g = TetraGrid(pts, np.zeros((0, 4), np.int64), np.zeros(3, np.int64), 0.1)
    labels = assign_part_labels(g, t).part_labels
    assert [t.bone_names[i] for i in labels] == ["upper", "lower", "upper"]


def test_part_label_of_coincident_summit():
    t = two_bone_template()
    g = TetraGrid(t.vertices[:5], np.zeros((0, 4), np.int64), np.zeros(5, np.int64), 0.1)
    assert np.array_equal(assign_part_labels(g, t).part_labels, t.dominant_bones()[:5])


def test_labels_cover_all_bones():
    t = two_bone_template()
    shell = inflate_mesh(t.mesh(), 0.03)
    g = assign_part_labels(tetrahedralize(shell, 0.04), t)
    assert set(g.part_labels.tolist()) == {0, 1}


def test_labels_need_template():
    t = SkinnedTemplate(np.zeros((0, 3)), np.zeros((0, 1)), [[0, 0, 0]], [-1])
    g = TetraGrid(np.zeros((1, 3)), np.zeros((0, 4), np.int64), np.zeros(1, np.int64), 0.1)
    with pytest.raises(ValueError):
        assign_part_labels(g, t)


def test_hierarchy_identity_and_single(sphere_grid):
    _, g = sphere_grid
    h = build_hierarchy(g, [g.n_summits])
    assert np.array_equal(h.levels[0], np.arange(g.n_summits))
    h = build_hierarchy(g, [g.n_summits, 1])
    assert h.levels[1].tolist() == [0]


def test_hierarchy_subsets_and_sizes(sphere_grid):
    _, g = sphere_grid
    h = build_hierarchy(g, [g.n_summits, 500, 100, 20])
    assert h.sizes == [g.n_summits, 500, 100, 20]
    for a, b in zip(h.levels, h.levels[1:]):
        assert set(b.tolist()) <= set(a.tolist())
    np.testing.assert_array_equal(h.positions(g, 2), g.summits[h.levels[2]])


@pytest.mark.parametrize("case", ["wrong_first", "same", "grow"])
def test_hierarchy_rejects_bad_sizes(sphere_grid, case):
    _, g = sphere_grid
    sizes = {"wrong_first": [10], "same": [g.n_summits, 50, 50], "grow": [g.n_summits, 50, 60]}[case]
    with pytest.raises(ValueError):
        build_hierarchy(g, sizes)


def test_fps_spread_on_uniform_grid():
    xs = np.arange(10.0)
    pts = np.array([[x, y, 0.0] for x in xs for y in xs])
    pick = farthest_point_sampling(pts, 25)
    sub = pts[pick]
    d = np.linalg.norm(sub[:, None] - sub[None], axis=2)
    d[np.diag_indices(25)] = np.inf
    # 25 points in a 9x9 square can be spread 9/4 apart at best
    assert d.min() >= 0.5 * 9 / 4


def test_fps_tie_goes_to_lowest_index():
    pts = np.array([[0, 0, 0], [1, 0, 0], [-1, 0, 0.0]])
    assert farthest_point_sampling(pts, 2).tolist() == [0, 1]


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 60), st.integers(0, 1000))
def test_fps_returns_distinct_indices(n, seed):
    pts = np.random.default_rng(seed).normal(size=(n, 3))
    pick = farthest_point_sampling(pts, n)
    assert sorted(pick.tolist()) == list(range(n))


# --- binary formats ----------------------------------------------------------------

def test_grid_roundtrip(tmp_path, sphere_grid):
    _, g = sphere_grid
    g = g.with_labels(np.arange(g.n_summits) % 3)
    save_grid(g, tmp_path / "g.tgrd")
    back = load_grid(tmp_path / "g.tgrd")
    np.testing.assert_array_equal(back.summits, g.summits.astype(np.float32))
    np.testing.assert_array_equal(back.tetrahedra, g.tetrahedra)
    np.testing.assert_array_equal(back.part_labels, g.part_labels)
    assert np.isclose(back.resolution, 0.05)
    raw = (tmp_path / "g.tgrd").read_bytes()
    assert raw[:4] == b"TGRD"
    (tmp_path / "t.tgrd").write_bytes(raw[:-10])
    with pytest.raises(ValueError):
        load_grid(tmp_path / "t.tgrd")


def test_hierarchy_roundtrip(tmp_path, sphere_grid):
    _, g = sphere_grid
    h = build_hierarchy(g, [g.n_summits, 200, 30])
    save_hierarchy(h, tmp_path / "h.thie")
    back = load_hierarchy(tmp_path / "h.thie", g)
    assert isinstance(back, SummitHierarchy)
    for a, b in zip(h.levels, back.levels):
        np.testing.assert_array_equal(a, b)
