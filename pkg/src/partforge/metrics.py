"""Evaluation metrics: chamfer distance, box IoU, vertex containment."""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
from scipy.spatial import cKDTree

from .errors import ParameterError
from .geometry import BoundingBox3D


def chamfer(points_a, points_b) -> float:
    """Symmetric chamfer: mean_a min_b ||a-b|| + mean_b min_a ||b-a||."""
    a = np.asarray(points_a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(points_b, dtype=np.float64).reshape(-1, 3)
    if len(a) == 0 or len(b) == 0:
        raise ParameterError("chamfer needs non-empty point sets")
    d_ab, _ = cKDTree(b).query(a)
    d_ba, _ = cKDTree(a).query(b)
    return float(d_ab.mean() + d_ba.mean())


def box_iou(a: BoundingBox3D, b: BoundingBox3D) -> float:
    lo = np.maximum(a.lo, b.lo)
    hi = np.minimum(a.hi, b.hi)
    inter = float(np.prod(np.maximum(hi - lo, 0.0)))
    union = a.volume + b.volume - inter
    return inter / union if union > 0 else 0.0


def containment(mesh_or_points, box: BoundingBox3D, tol: float = 0.0) -> float:
    """Fraction of vertices inside the box, optionally dilated by `tol`.

    `tol` absorbs isosurface quantization when scoring generated meshes
    against tight conditioning boxes; the default is exact containment.
    """
    pts = getattr(mesh_or_points, "vertices", mesh_or_points)
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise ParameterError("containment needs a non-empty mesh")
    return float(box.contains(pts, tol=tol).mean())


@dataclass
class EvalReport:
    """Aggregate generation metrics over a set of sampled objects."""

    num_objects: int
    num_parts: int
    mean_chamfer: float
    mean_box_iou: float
    mean_containment: float
    containment_tol: float
    clipping_pair_count: int
    clean_sample_fraction: float  # objects with zero clipping pairs
    per_object: list

    def to_json(self):
        return asdict(self)

    def validate(self):
        finite = all(np.isfinite([self.mean_chamfer, self.mean_box_iou, self.mean_containment]))
        ranged = 0.0 <= self.mean_box_iou <= 1.0 and 0.0 <= self.mean_containment <= 1.0
        if not (finite and ranged):
            raise ParameterError("EvalReport metrics out of range")
        return self
