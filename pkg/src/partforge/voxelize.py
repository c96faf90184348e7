"""Parity voxelization of watertight meshes on the [-1, 1]^3 grid.

A voxel is occupied iff its center lies inside the mesh, decided by the
parity of surface crossings along the +z ray from the center. Boundary
hits on shared triangle edges are resolved with a top-left fill rule so
each crossing is counted exactly once for watertight input.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateOutputError, ParameterError
from .geometry import TriangleMesh


def voxel_centers_1d(resolution: int) -> np.ndarray:
    """Center coordinates of `resolution` voxels tiling [-1, 1]."""
    if resolution < 1:
        raise ParameterError(f"resolution must be >= 1, got {resolution}")
    cell = 2.0 / resolution
    return -1.0 + (np.arange(resolution) + 0.5) * cell


def voxel_center_grid(resolution: int) -> np.ndarray:
    """(res^3, 3) array of voxel centers, x fastest-varying last."""
    c = voxel_centers_1d(resolution)
    gx, gy, gz = np.meshgrid(c, c, c, indexing="ij")
    return np.stack([gx, gy, gz], axis=-1).reshape(-1, 3)


def _edge_accepts_boundary(x0, y0, x1, y1):
    # top-left rule for a CCW triangle edge (p0 -> p1)
    return (y1 > y0) or (y1 == y0 and x1 < x0)


def voxelize(mesh: TriangleMesh, resolution: int) -> np.ndarray:
    """Boolean (res, res, res) occupancy grid, indexed [ix, iy, iz].

    Raises DegenerateOutputError when a ray column sees an odd number of
    crossings, which indicates a leaky (non-watertight) mesh.
    """
    centers = voxel_centers_1d(resolution)
    v, f = mesh.vertices, mesh.faces
    col_ids, col_zs = [], []

    for tri in f:
        a, b, c = v[tri[0]], v[tri[1]], v[tri[2]]
        area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if area2 == 0.0:
            continue  # projects to a segment; crossings owned by neighbors
        if area2 < 0:
            b, c = c, b
            area2 = -area2
        xs = np.array([a[0], b[0], c[0]])
        ys = np.array([a[1], b[1], c[1]])
        ix_lo = int(np.searchsorted(centers, xs.min(), side="left"))
        ix_hi = int(np.searchsorted(centers, xs.max(), side="right")) - 1
        iy_lo = int(np.searchsorted(centers, ys.min(), side="left"))
        iy_hi = int(np.searchsorted(centers, ys.max(), side="right")) - 1
        if ix_lo > ix_hi or iy_lo > iy_hi:
            continue
        px, py = np.meshgrid(centers[ix_lo:ix_hi + 1], centers[iy_lo:iy_hi + 1], indexing="ij")

        w0 = (c[0] - b[0]) * (py - b[1]) - (c[1] - b[1]) * (px - b[0])
        w1 = (a[0] - c[0]) * (py - c[1]) - (a[1] - c[1]) * (px - c[0])
        w2 = (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0])
        in0 = (w0 > 0) | ((w0 == 0) & _edge_accepts_boundary(b[0], b[1], c[0], c[1]))
        in1 = (w1 > 0) | ((w1 == 0) & _edge_accepts_boundary(c[0], c[1], a[0], a[1]))
        in2 = (w2 > 0) | ((w2 == 0) & _edge_accepts_boundary(a[0], a[1], b[0], b[1]))
        inside = in0 & in1 & in2
        if not inside.any():
            continue
        zstar = (w0 * a[2] + w1 * b[2] + w2 * c[2]) / area2
        ii, jj = np.nonzero(inside)
        col_ids.append((ii + ix_lo) * resolution + (jj + iy_lo))
        col_zs.append(zstar[inside])

    grid = np.zeros((resolution, resolution, resolution), dtype=bool)
    if not col_ids:
        return grid
    cols = np.concatenate(col_ids)
    zs = np.concatenate(col_zs)
    order = np.lexsort((zs, cols))
    cols, zs = cols[order], zs[order]
    starts = np.searchsorted(cols, np.arange(resolution * resolution), side="left")
    ends = np.searchsorted(cols, np.arange(resolution * resolution), side="right")
    for col in np.unique(cols):
        s, e = starts[col], ends[col]
        n = e - s
        if n % 2 != 0:
            ix, iy = divmod(int(col), resolution)
            raise DegenerateOutputError(
                f"leaky mesh: ray column (x={centers[ix]:.4f}, y={centers[iy]:.4f}) "
                f"crosses the surface {n} times (odd)"
            )
        above = n - np.searchsorted(zs[s:e], centers, side="right")
        ix, iy = divmod(int(col), resolution)
        grid[ix, iy, :] = (above % 2) == 1
    return grid
