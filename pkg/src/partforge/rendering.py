"""Deterministic orthographic rasterization of meshes and box wireframes.

Images are (H, W, 5) float32 in [0, 1] with channels
(silhouette, depth, R, G, B). Background pixels carry the sentinel
depth 0 and color 0; foreground depth is an affine map of camera-space z
into [0.05, 0.95], so it never collides with the sentinel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, ParameterError
from .geometry import BOX_EDGES, BoundingBox3D, TriangleMesh, box_corners

NUM_CHANNELS = 5
CH_SILHOUETTE, CH_DEPTH, CH_R, CH_G, CH_B = range(NUM_CHANNELS)


@dataclass(frozen=True)
class CameraRig:
    """v orthographic cameras at fixed azimuths and a shared elevation (degrees)."""

    azimuths_deg: tuple = (0.0, 90.0, 180.0, 270.0)
    elevation_deg: float = 30.0
    width: int = 64
    height: int = 64
    fill: float = 0.8

    @property
    def num_views(self):
        return len(self.azimuths_deg)

    def basis(self, view: int):
        """(right, up, toward-camera) unit vectors for one view; z-up world."""
        az = np.deg2rad(self.azimuths_deg[view])
        el = np.deg2rad(self.elevation_deg)
        d = np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
        right = np.array([-np.sin(az), np.cos(az), 0.0])
        up = np.cross(d, right)
        return right, up, d


def default_rig(width=64, height=64) -> CameraRig:
    return CameraRig(width=width, height=height)


def framing_transform(box: BoundingBox3D, fill: float):
    """Scale/offset mapping `box` into the frame: q = (p - center) * scale."""
    max_half = float(np.max(box.half_extents))
    if max_half <= 1e-9:
        raise GeometryError("degenerate framing box")
    return fill / max_half, box.center


def _as_part_list(mesh_or_parts):
    if isinstance(mesh_or_parts, TriangleMesh):
        return [(mesh_or_parts, np.ones(3))]
    parts = []
    for entry in mesh_or_parts:
        if isinstance(entry, TriangleMesh):
            parts.append((entry, np.ones(3)))
        else:
            mesh, color = entry
            parts.append((mesh, np.asarray(color, dtype=np.float64)))
    return parts


def render_views(mesh_or_parts, rig: CameraRig, frame_box: BoundingBox3D | None = None) -> np.ndarray:
    """Render all views; returns (v, H, W, 5) float32.

    `mesh_or_parts` is a TriangleMesh or an iterable of (mesh, rgb) pairs,
    all rasterized into a shared frame (combined bounding box unless
    `frame_box` is given). Framing re-centers the content and scales its
    longest axis to `rig.fill` of the half frame.
    """
    parts = _as_part_list(mesh_or_parts)
    if not parts:
        raise ParameterError("render_views needs at least one mesh")
    for mesh, _ in parts:
        if mesh.num_faces == 0 or mesh.face_areas().sum() <= 0:
            raise GeometryError("cannot render a zero-area mesh")
    if frame_box is None:
        los = np.min([m.bounding_box().lo for m, _ in parts], axis=0)
        his = np.max([m.bounding_box().hi for m, _ in parts], axis=0)
        frame_box = BoundingBox3D((los + his) / 2.0, np.maximum((his - los) / 2.0, 1e-9))
    scale, offset = framing_transform(frame_box, rig.fill)

    out = np.zeros((rig.num_views, rig.height, rig.width, NUM_CHANNELS), dtype=np.float32)
    for k in range(rig.num_views):
        right, up, d = rig.basis(k)
        zbuf = np.full((rig.height, rig.width), -np.inf)
        img = np.zeros((rig.height, rig.width, NUM_CHANNELS))
        for mesh, color in parts:
            q = (mesh.vertices - offset) * scale
            xi = q @ right
            yi = q @ up
            zc = q @ d
            _raster_mesh(img, zbuf, mesh.faces, xi, yi, zc, color, rig.width, rig.height)
        out[k] = img.astype(np.float32)
    return out


def _raster_mesh(img, zbuf, faces, xi, yi, zc, color, W, H):
    # pixel-center coordinates: center of (row, col) sits at exactly (col, row)
    px = (xi + 1.0) * (W / 2.0) - 0.5
    py = (1.0 - yi) * (H / 2.0) - 0.5
    depth = np.clip(0.1 + 0.4 * (zc + 1.0), 0.01, 1.0)
    for f in faces:
        ax, ay = px[f[0]], py[f[0]]
        bx, by = px[f[1]], py[f[1]]
        cx, cy = px[f[2]], py[f[2]]
        area2 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if abs(area2) < 1e-12:
            continue
        lo_c = max(int(np.ceil(min(ax, bx, cx))), 0)
        hi_c = min(int(np.floor(max(ax, bx, cx))), W - 1)
        lo_r = max(int(np.ceil(min(ay, by, cy))), 0)
        hi_r = min(int(np.floor(max(ay, by, cy))), H - 1)
        if lo_c > hi_c or lo_r > hi_r:
            continue
        cols = np.arange(lo_c, hi_c + 1)
        rows = np.arange(lo_r, hi_r + 1)
        pc, pr = np.meshgrid(cols, rows)
        w0 = (cx - bx) * (pr - by) - (cy - by) * (pc - bx)
        w1 = (ax - cx) * (pr - cy) - (ay - cy) * (pc - cx)
        w2 = (bx - ax) * (pr - ay) - (by - ay) * (pc - ax)
        inside = ((w0 >= 0) & (w1 >= 0) & (w2 >= 0)) | ((w0 <= 0) & (w1 <= 0) & (w2 <= 0))
        if not inside.any():
            continue
        l0 = w0 / area2
        l1 = w1 / area2
        l2 = w2 / area2
        z = l0 * depth[f[0]] + l1 * depth[f[1]] + l2 * depth[f[2]]
        zcam = l0 * zc[f[0]] + l1 * zc[f[1]] + l2 * zc[f[2]]
        rr, cc = pr[inside], pc[inside]
        zi = zcam[inside]
        closer = zi > zbuf[rr, cc]
        rr, cc = rr[closer], cc[closer]
        zbuf[rr, cc] = zi[closer]
        img[rr, cc, CH_SILHOUETTE] = 1.0
        img[rr, cc, CH_DEPTH] = z[inside][closer]
        img[rr, cc, CH_R] = color[0]
        img[rr, cc, CH_G] = color[1]
        img[rr, cc, CH_B] = color[2]


def render_wireframes(boxes, rig: CameraRig, frame_box: BoundingBox3D | None = None) -> np.ndarray:
    """Rasterize box edges as 1-pixel white lines on black; (v, H, W, 5) float32.

    All boxes share one frame (their combined bounding box unless overridden),
    which matches the global-view framing because part boxes are tight.
    """
    boxes = list(boxes)
    out = np.zeros((rig.num_views, rig.height, rig.width, NUM_CHANNELS), dtype=np.float32)
    if not boxes:
        return out
    if frame_box is None:
        los = np.min([b.lo for b in boxes], axis=0)
        his = np.max([b.hi for b in boxes], axis=0)
        frame_box = BoundingBox3D((los + his) / 2.0, np.maximum((his - los) / 2.0, 1e-9))
    scale, offset = framing_transform(frame_box, rig.fill)

    steps = 4 * max(rig.width, rig.height)
    t = np.linspace(0.0, 1.0, steps)[:, None]
    for k in range(rig.num_views):
        right, up, _ = rig.basis(k)
        for box in boxes:
            corners = (box_corners(box) - offset) * scale
            xi = corners @ right
            yi = corners @ up
            px = (xi + 1.0) * (rig.width / 2.0) - 0.5
            py = (1.0 - yi) * (rig.height / 2.0) - 0.5
            for e0, e1 in BOX_EDGES:
                xs = px[e0] + t[:, 0] * (px[e1] - px[e0])
                ys = py[e0] + t[:, 0] * (py[e1] - py[e0])
                cols = np.rint(xs).astype(int)
                rows = np.rint(ys).astype(int)
                ok = (cols >= 0) & (cols < rig.width) & (rows >= 0) & (rows < rig.height)
                out[k, rows[ok], cols[ok], :] = 1.0
    return out
