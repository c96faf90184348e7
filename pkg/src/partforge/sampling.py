"""Area-uniform surface sampling of triangle meshes."""

from __future__ import annotations

import numpy as np

from .errors import GeometryError, ParameterError
from .geometry import TriangleMesh

# Dedicated stream key for bounding-box surface sampling so box latents are
# reproducible across runs regardless of caller RNG state.
BOX_SAMPLING_SEED = 0x0B0C5


def sample_surface(mesh: TriangleMesh, count: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Sample `count` points area-uniformly; returns (P, Q) float32 arrays.

    P are points on the surface, Q the unit face normals at each sample.
    `seed` may be an int or a numpy SeedSequence-compatible key.
    """
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    if mesh.num_faces == 0:
        raise GeometryError("cannot sample an empty mesh")
    areas = mesh.face_areas()
    total = areas.sum()
    if total <= 0:
        raise GeometryError("mesh has zero total surface area")

    rng = np.random.default_rng(seed)
    face_idx = rng.choice(mesh.num_faces, size=count, p=areas / total)
    u = rng.random(count)
    v = rng.random(count)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]

    a, b, c = mesh.face_corners()
    a, b, c = a[face_idx], b[face_idx], c[face_idx]
    points = a + u[:, None] * (b - a) + v[:, None] * (c - a)
    normals = mesh.face_normals()[face_idx]
    return points.astype(np.float32), normals.astype(np.float32)
