import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from turnplan.errors import FrameMismatchError, StlParseError, VoxelizationError
from turnplan.solids import (Axis, RigidTransform, Raster2D, box_grid, box_mesh,
                             cylinder_mesh, dilate2d, grid_boolean, load_mesh, mesh_from_soup,
                             reflect2d, save_stl, sphere_mesh, transform_solid, voxelize,
                             write_pgm, write_vtk)
from turnplan.solids.raster import read_pgm, raster_from_pgm, within_band


# -- meshes ----------------------------------------------------------------------

def test_unit_cube_stl_roundtrip(tmp_path):
    path = save_stl(box_mesh((0, 0, 0), (1, 1, 1)), tmp_path / "cube.stl", ascii=True)
    mesh = load_mesh(path)
    assert mesh.n_triangles == 12
    assert len(mesh.vertices) == 8
    assert mesh.signed_volume() == pytest.approx(1.0)


def test_binary_stl_roundtrip(tmp_path):
    src = box_mesh((0, 0, 0), (2, 1, 1))
    mesh = load_mesh(save_stl(src, tmp_path / "b.stl"))
    assert mesh.n_triangles == 12
    assert mesh.signed_volume() == pytest.approx(2.0)


def test_truncated_binary_names_record(tmp_path):
    path = save_stl(box_mesh((0, 0, 0), (1, 1, 1)), tmp_path / "t.stl")
    data = path.read_bytes()
    path.write_bytes(data[:84 + 50 * 5 + 20])
    with pytest.raises(StlParseError) as info:
        load_mesh(path)
    assert info.value.record == 5
    assert info.value.offset == 84 + 50 * 5
    assert "record 5" in str(info.value)


def test_ascii_bad_coordinate_reports_offset(tmp_path):
    path = tmp_path / "bad.stl"
    path.write_text("solid x\nfacet normal 0 0 1\nouter loop\nvertex 0 0 zz\n")
    with pytest.raises(StlParseError) as info:
        load_mesh(path)
    assert info.value.offset is not None


def test_cylinder_ascii_triangle_count(tmp_path):
    # sides are two triangles per facet, each cap a 64-triangle fan
    path = save_stl(cylinder_mesh(1.0, 0.0, 1.0, 64), tmp_path / "c.stl", ascii=True)
    assert load_mesh(path).n_triangles == 2 * 64 + 2 * 64


def test_degenerate_triangles_dropped():
    tri = np.array([[[0, 0, 0], [1, 0, 0], [0, 1, 0]],
                    [[0, 0, 0], [1, 0, 0], [2, 0, 0]]], dtype=float)
    assert mesh_from_soup(tri).n_triangles == 1


def test_unit_scale_applies():
    mesh = mesh_from_soup(box_mesh((0, 0, 0), (1, 1, 1)).corners(), unit_scale=25.4)
    assert mesh.signed_volume() == pytest.approx(25.4 ** 3)


# -- voxelization ----------------------------------------------------------------

def test_voxelize_unit_cube_volume():
    g = voxelize(box_mesh((0, 0, 0), (1, 1, 1)), 0.1)
    assert g.volume() == pytest.approx(1.0, rel=0.01)
    assert g.volume() == g.count * 0.1 ** 3


def test_voxelize_empty_mesh():
    empty = mesh_from_soup(np.zeros((0, 3, 3)))
    g = voxelize(empty, 0.5)
    assert g.volume() == 0 and g.is_empty()


def test_voxelize_sphere_volume():
    g = voxelize(sphere_mesh(5.0, 128, 64), 0.2)
    assert g.volume() == pytest.approx(4 / 3 * math.pi * 125, rel=0.01)


def test_voxelize_padding_frame():
    g = voxelize(box_mesh((0, 0, 0), (1, 1, 1)), 0.25, padding=2)
    assert g.dims == (8, 8, 8)
    np.testing.assert_allclose(g.origin, [-0.5 + 0.125] * 3)


def test_open_mesh_is_rejected():
    box = box_mesh((0, 0, 0), (1, 1, 1))
    # drop one triangle of the bottom face, which +z rays cross
    holey = mesh_from_soup(box.corners()[1:])
    with pytest.raises(VoxelizationError):
        voxelize(holey, 0.1)


def test_voxelize_convergence_cube_and_sphere():
    for mesh, steps in ((box_mesh((0, 0, 0), (1, 1, 1)), (0.2, 0.1, 0.05)),
                        (sphere_mesh(5.0, 128, 64), (0.8, 0.4, 0.2))):
        vols = [voxelize(mesh, d).volume() for d in steps]
        assert abs(vols[1] - vols[2]) <= abs(vols[0] - vols[1]) + 1e-12


# -- grid booleans and transforms --------------------------------------------------

def _blocks():
    frame_lo, frame_hi, d = (0, 0, 0), (15, 15, 15), 1.0
    a = box_grid(frame_lo, frame_hi, d, padding=0).with_data(np.zeros((15, 15, 15), bool))
    da = np.zeros((15, 15, 15), bool)
    db = np.zeros((15, 15, 15), bool)
    da[0:10, 0:10, 0:10] = True
    db[5:15, 0:10, 0:10] = True
    return a.with_data(da), a.with_data(db)


def test_boolean_identities():
    a, b = _blocks()
    empty = a.with_data(np.zeros(a.dims, bool))
    assert np.array_equal(grid_boolean(a, empty, "union").data, a.data)
    assert grid_boolean(a, a, "difference").is_empty()


def test_overlapping_blocks_union_count():
    a, b = _blocks()
    expected = sum(1 for idx in np.ndindex(a.dims) if a.data[idx] or b.data[idx])
    assert grid_boolean(a, b, "union").count == expected == 1500
    assert grid_boolean(a, b, "intersect").count == 500


def test_boolean_frame_mismatch():
    a = box_grid((0, 0, 0), (1, 1, 1), 0.5)
    b = box_grid((0, 0, 0), (2, 1, 1), 0.5)
    with pytest.raises(FrameMismatchError):
        grid_boolean(a, b, "union")


def test_de_morgan():
    a, b = _blocks()
    lhs = grid_boolean(a, b, "union").complement()
    rhs = grid_boolean(a.complement(), b.complement(), "intersect")
    assert np.array_equal(lhs.data, rhs.data)


def test_transform_identity_bit_identical(cube_grid):
    out = transform_solid(cube_grid, RigidTransform.identity())
    assert np.array_equal(out.data, cube_grid.data)


def test_transform_lattice_translation(cube_grid):
    out = transform_solid(cube_grid, RigidTransform.translate([0.3, -0.2, 0.5]))
    assert out.count == cube_grid.count
    np.testing.assert_allclose(out.occupied_centers().mean(axis=0),
                               cube_grid.occupied_centers().mean(axis=0) + [0.3, -0.2, 0.5])


def test_transform_quarter_turn_preserves_count():
    g = box_grid((0, 0, 0), (1.0, 0.5, 0.3), 0.1)
    t = RigidTransform.about_axis([0, 0, 0], [1, 0, 0], math.pi / 2)
    assert transform_solid(g, t).count == g.count


def test_transform_round_trip_band(cylinder_grid):
    t = RigidTransform.about_axis([0.1, 0.2, 0.3], [1, 2, 3], 0.7)
    back = transform_solid(transform_solid(cylinder_grid, t), t.inverse(),
                           frame=(cylinder_grid.origin, cylinder_grid.dims))
    diff = back.data ^ cylinder_grid.data
    assert not np.any(diff & ~cylinder_grid.boundary_mask() & ~back.boundary_mask())
    assert abs(back.count - cylinder_grid.count) <= cylinder_grid.boundary_mask().sum()


def test_mesh_transform_is_exact():
    mesh = box_mesh((0, 0, 0), (1, 2, 3))
    t = RigidTransform.about_axis([1, 1, 1], [0, 1, 1], 1.1) @ RigidTransform.translate([1, 0, 0])
    out = transform_solid(mesh, t)
    np.testing.assert_allclose(out.vertices, t.apply(mesh.vertices))
    assert out.signed_volume() == pytest.approx(6.0)


def test_rigid_transform_validation():
    with pytest.raises(ValueError):
        RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(ValueError):
        Axis(np.zeros(3), np.array([0.0, 0.0, 1.1]))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3),
                          st.floats(-3.2, 3.2)), min_size=3, max_size=3))
def test_composition_associative(params):
    ts = [RigidTransform.about_axis([0, 0, 0], [a + 0.1, b, 1.0], c) @
          RigidTransform.translate([a, b, c]) for a, b, c, _ in params]
    lhs = (ts[0] @ ts[1]) @ ts[2]
    rhs = ts[0] @ (ts[1] @ ts[2])
    np.testing.assert_allclose(lhs.matrix(), rhs.matrix(), atol=1e-9)
    assert abs(np.linalg.det(lhs.rotation) - 1) < 1e-9


def test_write_vtk(tmp_path):
    g = box_grid((0, 0, 0), (1, 1, 1), 0.5)
    text = write_vtk(g, tmp_path / "g.vtk").read_text().splitlines()
    assert text[0].startswith("# vtk DataFile")
    assert "DATASET STRUCTURED_POINTS" in text
    assert any(line.startswith("SCALARS occupancy unsigned_char") for line in text)
    assert "LOOKUP_TABLE default" in text


# -- rasters -----------------------------------------------------------------------

def _ras(data, origin=(0.0, 0.0), pixel=1.0):
    return Raster2D(origin, pixel, np.asarray(data, dtype=bool))


def test_dilate_impulse_response():
    a = _ras([[1]], origin=(4.0, 7.0))
    b = _ras(np.ones((3, 3)), origin=(-1.0, -1.0))
    out = dilate2d(a, b)
    assert out.count == 9
    assert out.bbox() == ((2.5, 5.5), (5.5, 8.5))


def test_dilate_identity_element():
    rng = np.random.default_rng(3)
    a = _ras(rng.random((12, 9)) < 0.4, origin=(2.0, -3.0))
    out = dilate2d(a, _ras([[1]]))
    assert out == a


@pytest.mark.parametrize("seed", range(5))
def test_dilate_fft_matches_direct_32x32(seed):
    rng = np.random.default_rng(seed)
    a = _ras(rng.random((32, 32)) < 0.3)
    b = _ras(rng.random((5, 5)) < 0.5, origin=(-2.0, -2.0))
    assert dilate2d(a, b, "fft") == dilate2d(a, b, "direct")


def test_dilate_pixel_mismatch():
    with pytest.raises(FrameMismatchError):
        dilate2d(_ras([[1]]), _ras([[1]], pixel=0.5))


rasters = st.integers(1, 8).flatmap(lambda nu: st.integers(1, 8).flatmap(
    lambda nv: st.tuples(st.lists(st.booleans(), min_size=nu * nv, max_size=nu * nv),
                         st.just((nu, nv)), st.integers(-4, 4), st.integers(-4, 4))))


def _mk(t):
    bits, dims, ou, ov = t
    return _ras(np.array(bits).reshape(dims), origin=(float(ou), float(ov)))


def _canon(r):
    """Occupied world coordinates: frame-independent comparison."""
    return {tuple(np.round(p, 6)) for p in r.occupied_coords()}


@settings(max_examples=60, deadline=None)
@given(rasters, rasters, rasters)
def test_dilate_commutative_and_associative(ta, tb, tc):
    a, b, c = _mk(ta), _mk(tb), _mk(tc)
    assert _canon(dilate2d(a, b)) == _canon(dilate2d(b, a))
    assert _canon(dilate2d(dilate2d(a, b), c)) == _canon(dilate2d(a, dilate2d(b, c)))


@settings(max_examples=60, deadline=None)
@given(rasters)
def test_reflect_involution(t):
    a = _mk(t)
    assert reflect2d(reflect2d(a)) == a


def test_reflect_single_pixel():
    a = _ras([[1]], origin=(2.0, 1.0))
    out = reflect2d(a)
    assert _canon(out) == {(-2.0, -1.0)}


def test_reflect_symmetric_disk():
    u = np.arange(-5, 6)
    disk = (u[:, None] ** 2 + u[None, :] ** 2) <= 20
    a = _ras(disk, origin=(-5.0, -5.0))
    assert reflect2d(a) == a


def test_set_ops_need_same_frame():
    a = _ras(np.ones((3, 3)))
    b = _ras(np.ones((3, 3)), origin=(1.0, 0.0))
    with pytest.raises(FrameMismatchError):
        a.union(b)
    assert a.union(b.reframe_like(a)).count == 9


def test_within_band():
    a = _ras(np.pad(np.ones((4, 4)), 2))
    grown = a.with_data(np.pad(np.ones((6, 6)), 1))
    assert within_band(a, grown)
    far = a.with_data(np.pad(np.ones((8, 8)), 0))
    assert not within_band(a, far)


def test_pgm_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    a = _ras(rng.random((7, 5)) < 0.5, origin=(-2.0, -1.0))
    path = write_pgm(a, tmp_path / "a.pgm")
    assert path.read_bytes().startswith(b"P5\n7 5\n255\n")
    img = read_pgm(path)
    assert img.shape == (5, 7) and set(np.unique(img)) <= {0, 255}
    back = raster_from_pgm(path, 1.0, origin_pixel=(2, 5 - 1 - 1))
    assert back == a
