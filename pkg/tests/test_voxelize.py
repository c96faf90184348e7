import numpy as np
import pytest

from partforge.errors import DegenerateOutputError, ParameterError
from partforge.geometry import PrimitiveSpec, TriangleMesh
from partforge.voxelize import voxel_center_grid, voxel_centers_1d, voxelize


def brute_inside(mesh, pts):
    """Independent oracle: per-point crossing parity along +y via
    Moller-Trumbore in float64 (different axis, different algorithm)."""
    v, f = mesh.vertices, mesh.faces
    a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    d = np.array([0.0, 1.0, 0.0])
    e1, e2 = b - a, c - a
    pvec = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    ok = np.abs(det) > 1e-14
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    out = np.zeros(len(pts), dtype=bool)
    for i, o in enumerate(pts):
        tvec = o - a
        u = np.einsum("ij,ij->i", tvec, pvec) * inv
        qvec = np.cross(tvec, e1)
        vv = (qvec @ d) * inv
        t = np.einsum("ij,ij->i", qvec, e2) * inv
        hits = ok & (u >= 0) & (vv >= 0) & (u + vv <= 1) & (t > 0)
        out[i] = hits.sum() % 2 == 1
    return out


@pytest.mark.parametrize("spec,res", [
    (PrimitiveSpec("sphere", (0, 0, 0), (0.8, 0.8, 0.8), (1, 0, 0), "large"), 32),
    (PrimitiveSpec("box", (0.1, 0.0, -0.1), (0.4, 0.3, 0.35), (1, 0, 0), "medium"), 32),
    (PrimitiveSpec("cylinder", (0, 0.05, 0), (0.35, 0.35, 0.6), (1, 0, 0), "medium"), 32),
])
def test_voxelize_matches_brute_oracle_exactly(spec, res):
    mesh = spec.mesh()
    grid = voxelize(mesh, res)
    oracle = brute_inside(mesh, voxel_center_grid(res)).reshape(res, res, res)
    assert np.array_equal(grid, oracle)


def test_sphere_occupied_fraction_analytic():
    # oracle: ball volume fraction of [-1,1]^3 = (4/3) pi 0.8^3 / 8
    spec = PrimitiveSpec("sphere", (0, 0, 0), (0.8, 0.8, 0.8), (1, 0, 0), "large")
    grid = voxelize(spec.mesh(), 32)
    assert abs(grid.mean() - (4 / 3) * np.pi * 0.8 ** 3 / 8) < 0.01


def test_unit_filling_cube_all_occupied():
    spec = PrimitiveSpec("box", (0, 0, 0), (1.0, 1.0, 1.0), (1, 0, 0), "large")
    assert voxelize(spec.mesh(), 16).all()


def test_resolution_one():
    inside = PrimitiveSpec("sphere", (0, 0, 0), (0.3, 0.3, 0.3), (1, 0, 0), "small")
    offset = PrimitiveSpec("sphere", (0.6, 0.6, 0.6), (0.3, 0.3, 0.3), (1, 0, 0), "small")
    assert voxelize(inside.mesh(), 1)[0, 0, 0]
    assert not voxelize(offset.mesh(), 1)[0, 0, 0]


def test_voxelize_agrees_with_analytic_occupancy_on_box():
    # box tessellation is exact, so voxel centers match analytic containment
    spec = PrimitiveSpec("box", (0.1, -0.2, 0.0), (0.3, 0.25, 0.45), (1, 0, 0), "medium")
    res = 24
    grid = voxelize(spec.mesh(), res)
    analytic = spec.contains(voxel_center_grid(res)).reshape(res, res, res)
    assert np.array_equal(grid, analytic)


def test_leak_detection():
    mesh = PrimitiveSpec("box", (0, 0, 0), (0.5, 0.5, 0.5), (1, 0, 0), "medium").mesh()
    keep = [f for f in mesh.faces if not np.all(mesh.vertices[f][:, 2] > 0.49)]
    open_mesh = TriangleMesh(mesh.vertices, np.array(keep))
    with pytest.raises(DegenerateOutputError, match="odd"):
        voxelize(open_mesh, 16)


def test_bad_resolution():
    mesh = PrimitiveSpec("box", (0, 0, 0), (0.5, 0.5, 0.5), (1, 0, 0), "medium").mesh()
    with pytest.raises(ParameterError):
        voxelize(mesh, 0)


def test_voxel_centers():
    c = voxel_centers_1d(4)
    assert np.allclose(c, [-0.75, -0.25, 0.25, 0.75])
    assert voxel_centers_1d(1).tolist() == [0.0]
