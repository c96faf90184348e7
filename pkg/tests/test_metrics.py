import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from partforge.errors import ParameterError
from partforge.geometry import BoundingBox3D, PrimitiveSpec
from partforge.metrics import box_iou, chamfer, containment

points = st.lists(
    st.tuples(*[st.floats(-2, 2, allow_nan=False, width=32)] * 3),
    min_size=1, max_size=24,
)


def test_chamfer_identity():
    pts = np.random.default_rng(0).normal(size=(100, 3))
    assert chamfer(pts, pts) == 0.0


def test_chamfer_two_singletons():
    assert chamfer([(0, 0, 0)], [(1, 0, 0)]) == pytest.approx(2.0)


@given(a=points, b=points, t=st.tuples(*[st.floats(-3, 3, allow_nan=False, width=32)] * 3))
@settings(max_examples=50, deadline=None)
def test_chamfer_symmetric_and_translation_invariant(a, b, t):
    a, b, t = np.array(a, dtype=np.float64), np.array(b, dtype=np.float64), np.array(t)
    assert chamfer(a, b) == pytest.approx(chamfer(b, a))
    assert chamfer(a + t, b + t) == pytest.approx(chamfer(a, b), abs=1e-9)


def test_chamfer_empty_raises():
    with pytest.raises(ParameterError):
        chamfer(np.zeros((0, 3)), [(0, 0, 0)])


def test_box_iou_examples():
    a = BoundingBox3D((0, 0, 0), (0.5, 0.5, 0.5))
    assert box_iou(a, a) == pytest.approx(1.0)
    b = BoundingBox3D((2, 0, 0), (0.5, 0.5, 0.5))
    assert box_iou(a, b) == 0.0
    c = BoundingBox3D((0.5, 0, 0), (0.5, 0.5, 0.5))  # unit boxes offset by 0.5
    assert box_iou(a, c) == pytest.approx(1 / 3)


@given(
    c1=st.tuples(*[st.floats(-1, 1, allow_nan=False)] * 3),
    c2=st.tuples(*[st.floats(-1, 1, allow_nan=False)] * 3),
    h1=st.tuples(*[st.floats(0.05, 1, allow_nan=False)] * 3),
    h2=st.tuples(*[st.floats(0.05, 1, allow_nan=False)] * 3),
)
@settings(max_examples=50, deadline=None)
def test_box_iou_symmetry_and_range(c1, c2, h1, h2):
    a, b = BoundingBox3D(c1, h1), BoundingBox3D(c2, h2)
    v = box_iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == pytest.approx(box_iou(b, a))


def test_containment_examples():
    box = BoundingBox3D((0, 0, 0), (0.5, 0.5, 0.5))
    inside = PrimitiveSpec("box", (0, 0, 0), (0.3, 0.3, 0.3), (1, 0, 0), "small").mesh()
    outside = PrimitiveSpec("box", (0, 0, 0), (0.2, 0.2, 0.2), (1, 0, 0), "small").mesh()
    outside.vertices = outside.vertices + np.array([0.9, 0.9, 0.0]) * 0  # keep base
    far = PrimitiveSpec("box", (0, 0, 0), (0.2, 0.2, 0.2), (1, 0, 0), "small").mesh()
    far.vertices = far.vertices + 5.0
    assert containment(inside, box) == 1.0
    assert containment(far, box) == 0.0
    # constructed half-and-half: 4 of 8 cube corners inside
    pts = np.array([[x, y, z] for x in (-0.4, 5.0) for y in (-0.4, 0.4) for z in (-0.4, 0.4)])
    assert containment(pts, box) == 0.5


def test_containment_tolerance():
    box = BoundingBox3D((0, 0, 0), (0.5, 0.5, 0.5))
    pts = np.array([[0.52, 0, 0], [0.0, 0.55, 0.0]])
    assert containment(pts, box, tol=0.0) == 0.0
    assert containment(pts, box, tol=0.03) == 0.5
    assert containment(pts, box, tol=0.06) == 1.0
