import math

import numpy as np
import pytest

from partforge.errors import ParameterError
from partforge.geometry import (
    PRIMITIVE_KINDS,
    BoundingBox3D,
    PrimitiveSpec,
    TriangleMesh,
    box_corners,
    box_to_cube_mesh,
    concat_meshes,
    primitive_inside,
)


def edge_multiplicities(mesh):
    from collections import Counter
    c = Counter()
    for f in mesh.faces:
        for e in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            c[tuple(sorted(e))] += 1
    return set(c.values())


@pytest.mark.parametrize("kind,he", [
    ("sphere", (0.5, 0.5, 0.5)),
    ("box", (0.4, 0.3, 0.2)),
    ("cylinder", (0.3, 0.3, 0.5)),
    ("capsule", (0.2, 0.2, 0.6)),
])
def test_primitives_closed_outward_tight(kind, he):
    spec = PrimitiveSpec(kind, (0.05, -0.1, 0.0), he, (1, 0, 0), "medium")
    mesh = spec.mesh()
    # closed 2-manifold: every edge shared by exactly two faces
    assert edge_multiplicities(mesh) == {2}
    # outward normals: every face normal points away from the centroid
    n = mesh.face_normals()
    a, b, c = mesh.face_corners()
    centroids = (a + b + c) / 3.0 - spec.center
    assert np.all(np.einsum("ij,ij->i", n, centroids) > 0)
    # vertex bounding box equals the primitive extents exactly
    bb = mesh.bounding_box()
    assert np.allclose(bb.half_extents, he, atol=1e-12)
    assert np.allclose(bb.center, spec.center, atol=1e-12)


def test_primitive_spec_validation():
    with pytest.raises(ParameterError):
        PrimitiveSpec("cone", (0, 0, 0), (0.3, 0.3, 0.3), (1, 0, 0), "medium")
    with pytest.raises(ParameterError):
        PrimitiveSpec("box", (0.9, 0, 0), (0.3, 0.3, 0.3), (1, 0, 0), "medium")  # exits domain
    with pytest.raises(ParameterError):
        PrimitiveSpec("box", (0, 0, 0), (0.01, 0.3, 0.3), (1, 0, 0), "medium")  # too thin
    with pytest.raises(ParameterError):
        PrimitiveSpec("capsule", (0, 0, 0), (0.4, 0.4, 0.2), (1, 0, 0), "medium")  # hz < hx


def test_primitive_inside_matches_definition():
    spec = PrimitiveSpec("sphere", (0.1, 0.0, 0.0), (0.4, 0.2, 0.3), (1, 0, 0), "medium")
    pts = np.array([[0.1, 0.0, 0.0], [0.5, 0.0, 0.0], [0.52, 0.0, 0.0], [0.1, 0.21, 0.0]])
    assert primitive_inside(spec, pts).tolist() == [True, True, False, False]
    cap = PrimitiveSpec("capsule", (0, 0, 0), (0.2, 0.2, 0.6), (1, 0, 0), "medium")
    pts = np.array([[0, 0, 0.59], [0, 0, 0.61], [0.19, 0, 0.4], [0.21, 0, 0.0]])
    assert primitive_inside(cap, pts).tolist() == [True, False, True, False]


def test_box_to_cube_mesh_unit_box():
    box = BoundingBox3D((0, 0, 0), (0.5, 0.5, 0.5))
    mesh = box_to_cube_mesh(box)
    assert mesh.num_vertices == 8 and mesh.num_faces == 12
    corners = {tuple(v) for v in mesh.vertices}
    expect = {(x, y, z) for x in (-0.5, 0.5) for y in (-0.5, 0.5) for z in (-0.5, 0.5)}
    assert corners == expect


def test_box_to_cube_mesh_area_exact():
    box = BoundingBox3D((0.1, -0.2, 0.3), (0.2, 0.3, 0.4))
    mesh = box_to_cube_mesh(box)
    a, b, c = 2 * box.half_extents
    assert math.isclose(mesh.surface_area(), 2 * (a * b + b * c + c * a), rel_tol=1e-12)


def test_box_to_cube_mesh_normals_axis_aligned_outward():
    box = BoundingBox3D((0.0, 0.1, -0.1), (0.3, 0.2, 0.4))
    mesh = box_to_cube_mesh(box)
    n = mesh.face_normals()
    # each face normal is a signed unit axis vector
    assert np.allclose(np.abs(n).max(axis=1), 1.0, atol=1e-12)
    assert np.allclose(np.linalg.norm(n, axis=1), 1.0, atol=1e-12)
    a, b, c = mesh.face_corners()
    outward = np.einsum("ij,ij->i", n, (a + b + c) / 3.0 - box.center)
    assert np.all(outward > 0)


def test_box_degenerate_raises():
    with pytest.raises(ParameterError):
        BoundingBox3D((0, 0, 0), (0.1, 0.0, 0.1))


def test_box_contains_and_volume():
    box = BoundingBox3D((0, 0, 0), (1, 2, 3))
    assert box.volume == 48.0
    assert box.contains(np.array([[0, 0, 0], [1, 2, 3], [1.01, 0, 0]])).tolist() == [True, True, False]


def test_concat_meshes_disjoint_union():
    a = PrimitiveSpec("box", (-0.5, 0, 0), (0.2, 0.2, 0.2), (1, 0, 0), "small").mesh()
    b = PrimitiveSpec("box", (0.5, 0, 0), (0.2, 0.2, 0.2), (1, 0, 0), "small").mesh()
    u = concat_meshes([a, b])
    assert u.num_vertices == a.num_vertices + b.num_vertices
    assert np.array_equal(u.vertices[:a.num_vertices], a.vertices)
    assert np.array_equal(u.faces[a.num_faces:], b.faces + a.num_vertices)


def test_box_corners_layout_matches_cube_mesh():
    box = BoundingBox3D((0.2, 0.1, 0.0), (0.3, 0.1, 0.2))
    assert np.array_equal(box_corners(box), box_to_cube_mesh(box).vertices)
