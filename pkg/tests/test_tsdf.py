import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arm import ELBOW, bend_transforms, bent_arm, straight_arm
from tetrashell.closest import ClosestPointIndex, ray_parity_inside
from tetrashell.grid import TetraGrid, tetrahedralize
from tetrashell.mesh import TriMesh
from tetrashell.primitives import grid_plane, icosphere
from tetrashell.skinning import (SkinnedTemplate, bind_vertices, blend_points, invert_transforms, load_pose,
                                 load_template, rotation_about_point, save_pose, save_template, warp,
                                 warp_to_star)
from tetrashell.tsdf import TsdfField, compute_tsdf, generate_gt_field, load_field, save_field, tsdf_values

TAU = 0.03


def point_grid(points):
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return TetraGrid(p, np.zeros((0, 4), np.int64), np.zeros(len(p), np.int64), 0.01)


@pytest.fixture(scope="module")
def arm():
    return bent_arm()


def test_arm_fixture_is_closed():
    s = straight_arm()
    assert len(s.boundary_edges()) == 0
    assert ray_parity_inside(s, [[0.3, 0, 0]])[0]
    # outward orientation: normals on the side wall point away from the axis
    side = np.abs(s.vertices[:, 0] - 0.3) < 0.2
    radial = s.vertices[side] * [0, 1, 1]
    assert np.all(np.einsum("ij,ij->i", s.vertex_normals[side], radial) > 0)


# --- skinned template model ---------------------------------------------------------

def test_template_rejects_bad_weights():
    with pytest.raises(ValueError):
        SkinnedTemplate(np.zeros((1, 3)), [[0.5, 0.4]], [[0, 0, 0], [1, 0, 0]], [-1, 0])
    with pytest.raises(ValueError):
        SkinnedTemplate(np.zeros((1, 3)), [[1.5, -0.5]], [[0, 0, 0], [1, 0, 0]], [-1, 0])


def test_template_rejects_non_rigid_transforms():
    with pytest.raises(ValueError):
        SkinnedTemplate(np.zeros((1, 3)), [[1.0]], [[0, 0, 0]], [-1], rotations=[np.diag([1, 1, 2.0])])
    with pytest.raises(ValueError):
        SkinnedTemplate(np.zeros((1, 3)), [[1.0]], [[0, 0, 0]], [-1], rotations=[np.diag([1, 1, -1.0])])


def test_template_json_roundtrip(tmp_path, arm):
    _, _, template, _ = arm
    save_template(template, tmp_path / "t.json")
    back = load_template(tmp_path / "t.json")
    np.testing.assert_array_equal(back.weights, template.weights)
    np.testing.assert_array_equal(back.vertices, template.vertices)
    np.testing.assert_array_equal(back.rotations, template.rotations)
    assert back.bone_names == ["upper", "fore"]


def test_pose_json_roundtrip(tmp_path):
    rot, trans = bend_transforms(0.3)
    save_pose(tmp_path / "p.json", rot, trans)
    r, t = load_pose(tmp_path / "p.json", 2)
    np.testing.assert_array_equal(r, rot)
    with pytest.raises(ValueError):
        load_pose(tmp_path / "p.json", 3)


# --- binding and warping -------------------------------------------------------------

def test_bind_coincident_vertex_copies_weights(arm):
    _, bent, template, w = arm
    got = bind_vertices(bent, template)
    np.testing.assert_array_equal(got, w)


def test_bind_midpoint_tie_goes_to_lower_index():
    t = SkinnedTemplate([[0, 0, 0], [1, 0, 0]], [[1.0, 0.0], [0.0, 1.0]], [[0, 0, 0], [1, 0, 0]], [-1, 0])
    scan = TriMesh([[0.5, 0, 0], [0.49, 0, 0], [0.51, 0, 0]], np.zeros((0, 3)))
    got = bind_vertices(scan, t)
    np.testing.assert_array_equal(got, [[1, 0], [1, 0], [0, 1]])


def test_bind_empty_template_errors():
    t = SkinnedTemplate(np.zeros((0, 3)), np.zeros((0, 1)), [[0, 0, 0]], [-1])
    with pytest.raises(ValueError):
        bind_vertices(icosphere(0), t)


def test_identity_warp_is_exact(arm):
    straight, _, _, w = arm
    out = warp(straight, w, np.tile(np.eye(3), (2, 1, 1)), np.zeros((2, 3)))
    assert np.array_equal(out.vertices, straight.vertices)


def test_single_bone_translation():
    s = icosphere(2)
    t = np.array([[0.1, -0.2, 0.3]])
    out = warp(s, np.ones((s.n_vertices, 1)), np.eye(3)[None], t)
    np.testing.assert_allclose(out.vertices, s.vertices + t, atol=1e-15)


def test_warp_rejects_unknown_bone(arm):
    straight, _, template, _ = arm
    with pytest.raises(ValueError):
        warp_to_star(straight, np.ones((straight.n_vertices, 3)) / 3, template)


def test_bent_arm_straightens_outside_blend(arm):
    straight, bent, template, w = arm
    out = warp_to_star(bent, bind_vertices(bent, template), template)
    rigid = (w == 1.0).any(axis=1)
    err = np.linalg.norm(out.vertices - straight.vertices, axis=1)
    assert err[rigid].max() <= 1e-6
    # the bend really moved the forearm
    assert np.linalg.norm(bent.vertices - straight.vertices, axis=1).max() > 0.2


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.lists(st.floats(-1, 1), min_size=3, max_size=3),
       st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_lbs_round_trip_single_bone(angle, axis, shift):
    if np.linalg.norm(axis) < 1e-3:
        axis = [0, 0, 1]
    r, t = rotation_about_point(axis, angle, shift)
    pts = np.random.default_rng(0).normal(size=(50, 3))
    w = np.ones((50, 1))
    moved = blend_points(pts, w, r[None], t[None])
    ri, ti = invert_transforms(r[None], t[None])
    np.testing.assert_allclose(blend_points(moved, w, ri, ti), pts, atol=1e-12)


# --- TSDF ------------------------------------------------------------------------

def test_summit_on_surface_is_zero():
    plane = grid_plane(2.0, 4).with_normals()
    f = compute_tsdf(point_grid([[0.1, 0.2, 0.0]]), plane, TAU)
    assert f.values[0] == 0.0


def test_plane_sign_branch():
    plane = grid_plane(2.0, 4).with_normals()
    f = compute_tsdf(point_grid([[0, 0, 2 * TAU], [0, 0, -2 * TAU], [0, 0, 0.5 * TAU]]), plane, TAU)
    np.testing.assert_allclose(f.values, [1.0, -1.0, 0.5], atol=1e-12)


def test_sign_of_zero_is_positive():
    # far tangential point: closest point on the square's edge, normal orthogonal to (v - v_hat)
    plane = grid_plane(1.0, 1).with_normals()
    f = compute_tsdf(point_grid([[2.0, 0.1, 0.0]]), plane, TAU)
    assert f.values[0] == 1.0


def test_sphere_half_band_value():
    s = icosphere(6, 0.5).with_normals()
    d = np.array([[0.515, 0, 0], [0, 0.515, 0], [0.3, 0.3, np.sqrt(0.515 ** 2 - 0.18)]])
    f = compute_tsdf(point_grid(d), s, TAU)
    np.testing.assert_allclose(f.values, 0.5, atol=0.05)


def test_tau_and_surface_validation():
    plane = grid_plane(1.0, 1).with_normals()
    with pytest.raises(ValueError):
        compute_tsdf(point_grid([[0, 0, 0]]), plane, 0.0)
    with pytest.raises(ValueError):
        compute_tsdf(point_grid([[0, 0, 0]]), TriMesh(np.zeros((0, 3)), np.zeros((0, 3))), TAU)


@pytest.fixture(scope="module")
def sphere_field():
    s = icosphere(5, 0.5).with_normals()
    g = tetrahedralize(icosphere(3, 0.6).with_normals(), 0.03)
    return s, g, compute_tsdf(g, s, TAU)


def test_field_invariants(sphere_field):
    s, g, f = sphere_field
    assert np.all(np.abs(f.values) <= 1.0)
    r = ClosestPointIndex(s).query(g.summits)
    assert np.all(r.distances[np.abs(f.values) < 1.0] <= TAU)
    assert np.all(np.abs(f.values[r.distances > TAU]) == 1.0)
    plane = np.abs(np.einsum("nd,nd->n", r.normals, g.summits - r.points))
    assert np.all(plane <= r.distances * (1 + 1e-12))


def test_sign_matches_ray_parity(sphere_field):
    s, g, f = sphere_field
    r = ClosestPointIndex(s).query(g.summits)
    near = r.distances <= TAU
    inside = ray_parity_inside(s, g.summits[near])
    agree = (f.values[near] < 0) == inside
    assert agree.mean() >= 0.99


def test_ttsf_roundtrip(tmp_path, sphere_field):
    _, g, f = sphere_field
    save_field(f, tmp_path / "f.ttsf")
    back = load_field(tmp_path / "f.ttsf", g)
    np.testing.assert_array_equal(back.values, f.values.astype(np.float32))
    assert np.isclose(back.tau, TAU)
    raw = (tmp_path / "f.ttsf").read_bytes()
    assert raw[:4] == b"TTSF" and len(raw) == 16 + 4 * g.n_summits
    wrong = point_grid(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        load_field(tmp_path / "f.ttsf", wrong)


def test_field_length_must_match_grid():
    with pytest.raises(ValueError):
        TsdfField(point_grid(np.zeros((2, 3))), [0.0], TAU)


# --- full ground-truth pipeline ------------------------------------------------------

def test_pipeline_identity_equals_direct(sphere_field):
    s, g, f = sphere_field
    t = SkinnedTemplate(s.vertices, np.ones((s.n_vertices, 1)), [[0, 0, 0]], [-1])
    got = generate_gt_field(s, t, g, TAU)
    np.testing.assert_array_equal(got.values, f.values)


def test_bent_arm_field_matches_straight(arm):
    straight, bent, template, _ = arm
    grid = tetrahedralize(straight_arm_shell(straight), 0.02)
    gt = generate_gt_field(bent, template, grid, TAU)
    ref = compute_tsdf(grid, straight, TAU)
    away = np.abs(grid.summits[:, 0] - ELBOW[0]) > 0.1
    assert np.abs(gt.values[away] - ref.values[away]).max() <= 0.05
    assert np.all(np.abs(gt.values) <= 1.0)


def straight_arm_shell(straight):
    from tetrashell.shell import inflate_mesh

    return inflate_mesh(straight, 0.04)


@settings(max_examples=10, deadline=None)
@given(st.floats(-1.5, 1.5), st.integers(0, 100))
def test_random_posed_fields_stay_in_range(angle, seed):
    s = icosphere(2, 0.2)
    w = np.random.default_rng(seed).dirichlet([1, 1], size=s.n_vertices)
    rot, trans = bend_transforms(angle)
    t = SkinnedTemplate(s.vertices, w, [[0, 0, 0], ELBOW], [-1, 0], rot, trans)
    pts = np.random.default_rng(seed).uniform(-0.4, 0.4, size=(200, 3))
    f = generate_gt_field(s, t, point_grid(pts), TAU)
    assert np.all(np.abs(f.values) <= 1.0)


def test_tsdf_values_direct():
    plane = grid_plane(2.0, 2).with_normals()
    v = tsdf_values(np.array([[0, 0, 0.01]]), ClosestPointIndex(plane), 0.02)
    np.testing.assert_allclose(v, [0.5])
