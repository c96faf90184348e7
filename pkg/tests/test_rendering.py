import numpy as np
import pytest

from partforge.errors import GeometryError, ParameterError
from partforge.geometry import BoundingBox3D, PrimitiveSpec, TriangleMesh
from partforge.rendering import (
    CH_DEPTH,
    CH_SILHOUETTE,
    CameraRig,
    default_rig,
    render_views,
    render_wireframes,
)

FRONTAL = CameraRig(azimuths_deg=(0.0,), elevation_deg=0.0, fill=1.0)


def test_sphere_fills_frame_coverage():
    # analytic oracle: a circle inscribed in the square frame covers pi/4
    mesh = PrimitiveSpec("sphere", (0, 0, 0), (0.5, 0.5, 0.5), (1, 0, 0), "medium").mesh()
    img = render_views([(mesh, (1, 0, 0))], FRONTAL)[0]
    coverage = img[:, :, CH_SILHOUETTE].mean()
    assert abs(coverage - np.pi / 4) < 0.02


def test_background_conventions():
    mesh = PrimitiveSpec("box", (0, 0, 0), (0.3, 0.3, 0.3), (1, 0, 0), "medium").mesh()
    img = render_views([(mesh, (0.5, 0.25, 1.0))], default_rig())[0]
    bg = img[:, :, CH_SILHOUETTE] == 0
    assert bg.any() and (~bg).any()
    assert np.all(img[:, :, CH_DEPTH][bg] == 0)
    assert np.all(img[:, :, 2:][bg] == 0)
    # foreground depth never collides with the background sentinel
    assert img[:, :, CH_DEPTH][~bg].min() > 0


def test_render_deterministic():
    mesh = PrimitiveSpec("cylinder", (0.1, 0, 0), (0.2, 0.2, 0.5), (1, 0, 0), "medium").mesh()
    rig = default_rig()
    a = render_views([(mesh, (0.2, 0.4, 0.9))], rig)
    b = render_views([(mesh, (0.2, 0.4, 0.9))], rig)
    assert np.array_equal(a, b)
    assert a.shape == (4, 64, 64, 5)


def test_part_centric_framing():
    # the same shape renders identically regardless of absolute position
    small = PrimitiveSpec("box", (0, 0, 0), (0.1, 0.1, 0.1), (1, 0, 0), "small").mesh()
    moved = TriangleMesh(small.vertices + np.array([0.5, -0.3, 0.2]), small.faces)
    a = render_views([(small, (1, 1, 1))], default_rig())
    b = render_views([(moved, (1, 1, 1))], default_rig())
    assert np.array_equal(a, b)


def test_degenerate_mesh_raises():
    flat = TriangleMesh(np.zeros((3, 3)), np.array([[0, 1, 2]]))
    with pytest.raises(GeometryError):
        render_views([(flat, (1, 1, 1))], default_rig())
    with pytest.raises(ParameterError):
        render_views([], default_rig())


def test_wireframe_empty_boxes_all_black():
    assert np.all(render_wireframes([], default_rig()) == 0)


def test_wireframe_deterministic_and_white():
    boxes = [BoundingBox3D((0, 0, 0), (0.5, 0.4, 0.3)),
             BoundingBox3D((0.2, 0.2, 0.2), (0.2, 0.2, 0.2))]
    rig = default_rig()
    a = render_wireframes(boxes, rig)
    b = render_wireframes(boxes, rig)
    assert np.array_equal(a, b)
    drawn = a[a[:, :, :, CH_SILHOUETTE] > 0]
    assert len(drawn) and np.all(drawn == 1.0)


def test_wireframe_frontal_unit_box_is_square_outline():
    # frontal view: front and back faces project onto the same square, the
    # four depth edges onto its corners. oracle = analytic square outline.
    rig = CameraRig(azimuths_deg=(0.0,), elevation_deg=0.0, fill=0.8, width=64, height=64)
    box = BoundingBox3D((0, 0, 0), (0.5, 0.5, 0.5))
    img = render_wireframes([box], rig)[0, :, :, CH_SILHOUETTE]
    drawn = set(map(tuple, np.argwhere(img > 0)))

    # analytic outline: x_img, y_img = +-0.8 in NDC (fill maps half extent to 0.8)
    def to_pix(x):  # NDC -> pixel-center coordinates
        return (x + 1.0) * 32 - 0.5
    lo, hi = to_pix(-0.8), to_pix(0.8)
    analytic = set()
    for t in np.linspace(lo, hi, 512):
        for r, c in ((lo, t), (hi, t), (t, lo), (t, hi)):
            analytic.add((int(round(r)), int(round(c))))

    def within_one_pixel(a, b_set):
        return all(any(abs(r - r2) <= 1 and abs(c - c2) <= 1 for r2, c2 in b_set) for r, c in a)

    assert within_one_pixel(drawn, analytic)
    assert within_one_pixel(analytic, drawn)


def test_wireframe_matches_global_view_framing():
    # part boxes are tight, so wireframes framed by the box union must align
    # with global renders framed by the mesh union: silhouettes must overlap
    spec = PrimitiveSpec("box", (0.2, 0.1, -0.3), (0.3, 0.2, 0.25), (1, 0, 0), "medium")
    mesh = spec.mesh()
    rig = CameraRig(azimuths_deg=(0.0,), elevation_deg=0.0, fill=0.8)
    img = render_views([(mesh, (1, 1, 1))], rig)[0, :, :, CH_SILHOUETTE]
    wire = render_wireframes([mesh.bounding_box()], rig)[0, :, :, CH_SILHOUETTE]
    wire_px = np.argwhere(wire > 0)
    # every wireframe pixel lies on or within 1px of the box silhouette edge
    sil_px = set(map(tuple, np.argwhere(img > 0)))
    ok = sum(1 for r, c in wire_px
             if any((r + dr, c + dc) in sil_px for dr in (-1, 0, 1) for dc in (-1, 0, 1)))
    assert ok == len(wire_px)
