"""Part refinement plumbing and scene assembly.

Parts are decoded in object-frame (absolute) coordinates, normalized into
[-1, 1]^3 for per-part refinement, then mapped back with the inverse
transform and concatenated. The bundled refiner is a pass-through stub that
re-extracts a surface from the part voxels; any callable with the same
signature can be plugged in as an external enhancer. Assembly also reports
"clipping": part pairs whose voxelized occupancies overlap by more than a
fraction of the smaller part's volume.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .errors import DegenerateOutputError, GeometryError, ParameterError
from .geometry import BoundingBox3D, TriangleMesh, concat_meshes
from .vae3d import grid_to_mesh
from .voxelize import voxelize

CLIPPING_OVERLAP_THRESHOLD = 0.01
CLIPPING_RESOLUTION = 64


@dataclass(frozen=True)
class NormalizeTransform:
    """x -> scale * (x - offset); maps a part's tight box into [-1, 1]^3
    with the long axis touching +-1."""

    scale: float
    offset: np.ndarray

    def apply(self, points):
        return (np.asarray(points, dtype=np.float64) - self.offset) * self.scale

    def invert(self, points):
        return np.asarray(points, dtype=np.float64) / self.scale + self.offset

    def to_json(self):
        return {"scale": self.scale, "offset": self.offset.tolist()}

    @staticmethod
    def from_json(d):
        return NormalizeTransform(scale=float(d["scale"]), offset=np.asarray(d["offset"]))


def normalize_part(mesh: TriangleMesh):
    """Returns (normalized mesh, transform). Already-normalized input gets the
    identity transform."""
    box = mesh.bounding_box()
    max_half = float(np.max(box.half_extents))
    if max_half <= 0:
        raise GeometryError("degenerate mesh extent")
    transform = NormalizeTransform(scale=1.0 / max_half, offset=box.center)
    return TriangleMesh(transform.apply(mesh.vertices), mesh.faces.copy()), transform


def denormalize_part(mesh: TriangleMesh, transform: NormalizeTransform) -> TriangleMesh:
    return TriangleMesh(transform.invert(mesh.vertices), mesh.faces.copy())


class Enhancer(Protocol):
    """External part enhancer: (views, voxels) -> refined mesh in [-1, 1]^3."""

    def __call__(self, views: np.ndarray, voxels: np.ndarray) -> TriangleMesh: ...


def passthrough_enhancer(views, voxels) -> TriangleMesh:
    """Bundled stub: ignores views entirely and re-extracts the voxel surface."""
    if voxels.ndim != 3 or voxels.shape[0] != voxels.shape[1] or voxels.shape[0] != voxels.shape[2]:
        raise ParameterError("voxels must be a cubic boolean grid")
    if not voxels.any():
        raise DegenerateOutputError("empty voxel grid")
    res = voxels.shape[0]
    half_cell = 1.0 / res
    field = np.where(voxels, 1.0, -1.0)
    # voxel centers span [-1 + half_cell, 1 - half_cell]
    return grid_to_mesh(field, 1.0 - half_cell, level=0.0)


def refine_part(views, voxels, enhancer: Callable | None = None) -> TriangleMesh:
    """Run the (stub or external) enhancer on one normalized part."""
    enhancer = enhancer or passthrough_enhancer
    return enhancer(np.asarray(views), np.asarray(voxels))


@dataclass
class ClippingPair:
    part_a: int
    part_b: int
    overlap_fraction: float  # shared voxels / smaller part's voxels

    def to_json(self):
        return {"part_a": self.part_a, "part_b": self.part_b,
                "overlap_fraction": self.overlap_fraction}


def clipping_report(meshes, resolution: int = CLIPPING_RESOLUTION,
                    threshold: float = CLIPPING_OVERLAP_THRESHOLD):
    """Pairs of scene-frame meshes whose voxel occupancies overlap > threshold."""
    grids = [voxelize(m, resolution) for m in meshes]
    counts = [int(g.sum()) for g in grids]
    pairs = []
    for i in range(len(meshes)):
        for j in range(i + 1, len(meshes)):
            if counts[i] == 0 or counts[j] == 0:
                continue
            inter = int((grids[i] & grids[j]).sum())
            frac = inter / min(counts[i], counts[j])
            if frac > threshold:
                pairs.append(ClippingPair(part_a=i, part_b=j, overlap_fraction=frac))
    return pairs


def assemble(refined_meshes, transforms, boxes=None, resolution: int = CLIPPING_RESOLUTION,
             threshold: float = CLIPPING_OVERLAP_THRESHOLD):
    """Map refined (normalized) parts back to the scene and concatenate.

    Returns (scene mesh, list[ClippingPair]); clipping is measured on the
    scene-frame meshes at the shared resolution.
    """
    if len(refined_meshes) != len(transforms):
        raise ParameterError("need one transform per part")
    placed = [denormalize_part(m, t) for m, t in zip(refined_meshes, transforms)]
    scene = concat_meshes(placed)
    return scene, clipping_report(placed, resolution=resolution, threshold=threshold)
