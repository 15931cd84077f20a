import os
import tempfile

import numpy as np
import pytest

from alprobe.core.image import HdrImage, MaskImage, check_same_shape, mask_barycenter
from alprobe.core.mesh import (load_obj, make_cylinder, make_quad,
                               make_uv_sphere, save_obj, weld_ids)
from alprobe.errors import DimensionMismatch, EmptyMask, InvalidResolution


def test_sphere_counts_scale_with_resolution():
    a = make_uv_sphere(3, 3)
    b = make_uv_sphere(6, 6)
    # doubling both resolutions roughly quadruples the face count
    assert len(b.triangles) > 3 * len(a.triangles)
    # every face references valid vertices
    assert a.triangles.min() >= 0 and a.triangles.max() < len(a.vertices)


def test_sphere_area_within_one_percent():
    for r in (1.0, 2.5):
        m = make_uv_sphere(64, 64, radius=r)
        assert abs(m.surface_area() - 4 * np.pi * r * r) < 0.01 * 4 * np.pi * r * r


def test_sphere_normals_point_radially():
    m = make_uv_sphere(16, 32)
    pos = m.vertices / np.linalg.norm(m.vertices, axis=1, keepdims=True)
    assert np.abs(np.einsum("ij,ij->i", pos, m.normals) - 1.0).max() < 1e-9


def test_cylinder_area_closed_form():
    r, h = 0.5, 2.0
    m = make_cylinder(128, 4, radius=r, height=h)
    exact = 2 * np.pi * r * h + 2 * np.pi * r * r
    assert abs(m.surface_area() - exact) < 0.01 * exact


def test_mesh_resolution_validation():
    with pytest.raises(InvalidResolution):
        make_uv_sphere(2, 8)
    with pytest.raises(InvalidResolution):
        make_cylinder(2, 1)


def test_weld_merges_seam_vertices():
    m = make_uv_sphere(8, 16)
    ids = weld_ids(m.vertices)
    # seam columns share positions, so welded ids must collapse
    assert len(np.unique(ids)) < len(m.vertices)


def test_tangents_unit_and_not_parallel_to_normals():
    # raw uv-gradient tangents; the renderer re-orthogonalizes per pixel
    m = make_cylinder(24, 4)
    assert np.allclose(np.linalg.norm(m.tangents, axis=1), 1.0, atol=1e-9)
    dots = np.abs(np.einsum("ij,ij->i", m.tangents, m.normals))
    assert dots.max() < 0.5


def _corner_soup(m):
    """Triangle corners as sortable rows, invariant to vertex re-indexing."""
    rows = np.concatenate(
        [m.vertices[m.triangles].reshape(-1, 9),
         m.uvs[m.triangles].reshape(-1, 6),
         m.normals[m.triangles].reshape(-1, 9)], axis=1)
    rows = np.round(rows, 6)
    order = np.lexsort(rows.T[::-1])
    return rows[order]


def test_obj_round_trip_preserves_geometry(tmp_path):
    # the loader unwelds corners, so compare gathered geometry not indices
    m = make_cylinder(12, 3, radius=0.7, height=1.1)
    path = os.path.join(tmp_path, "c.obj")
    save_obj(path, m)
    back = load_obj(path)
    assert len(back.triangles) == len(m.triangles)
    assert np.allclose(_corner_soup(back), _corner_soup(m), atol=1e-6)
    assert np.isclose(back.surface_area(), m.surface_area(), rtol=1e-9)


def test_bounding_radius():
    m = make_uv_sphere(16, 16, radius=2.0)
    assert np.isclose(m.bounding_radius(), 2.0, atol=1e-6)


def test_quad_two_triangles():
    m = make_quad()
    assert len(m.triangles) == 2


# --- images ---

def test_barycenter_single_pixel():
    vals = np.zeros((8, 8))
    vals[5, 3] = 1.0  # row 5, col 3 -> (u=3, v=5)
    assert mask_barycenter(MaskImage(vals)) == (3.0, 5.0)


def test_barycenter_uniform_mask():
    w, h = 11, 7
    vals = np.ones((h, w))
    bu, bv = mask_barycenter(MaskImage(vals))
    assert np.isclose(bu, (w - 1) / 2)
    assert np.isclose(bv, (h - 1) / 2)


def test_barycenter_two_pixels():
    vals = np.zeros((4, 16))
    vals[0, 0] = 1.0
    vals[0, 10] = 1.0
    assert mask_barycenter(MaskImage(vals)) == (5.0, 0.0)


def test_barycenter_empty_raises():
    with pytest.raises(EmptyMask):
        mask_barycenter(MaskImage(np.zeros((4, 4))))


def test_check_same_shape():
    a = HdrImage(np.zeros((4, 5, 3)))
    b = HdrImage(np.zeros((4, 6, 3)))
    with pytest.raises(DimensionMismatch):
        check_same_shape(a, b)
    check_same_shape(a, HdrImage(np.zeros((4, 5, 3))))


def test_mask_values_clamped():
    m = MaskImage(np.array([[-0.5, 0.25], [1.5, 1.0]]))
    assert np.array_equal(m.values, np.array([[0.0, 0.25], [1.0, 1.0]]))
    with pytest.raises(ValueError):
        MaskImage(np.zeros((2, 2, 2)))
