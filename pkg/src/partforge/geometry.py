"""Triangle meshes, axis-aligned boxes, and the primitive shape family.

All geometry lives in the object frame [-1, 1]^3. Primitives are axis
aligned, so inside/outside tests are analytic and exact; that is what makes
occupancy supervision and the voxelizer oracles possible downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, ParameterError

PRIMITIVE_KINDS = ("sphere", "box", "cylinder", "capsule")
SIZE_BUCKETS = ("small", "medium", "large")

# Fixed tessellation so mesh equality is meaningful across runs.
SPHERE_SEGMENTS = 32      # azimuthal
SPHERE_RINGS = 16         # polar
CYLINDER_SEGMENTS = 32
CAPSULE_SEGMENTS = 32
CAPSULE_CAP_RINGS = 8


@dataclass(frozen=True)
class BoundingBox3D:
    """Axis-aligned box given by center and strictly positive half-extents."""

    center: np.ndarray
    half_extents: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))
        object.__setattr__(self, "half_extents", np.asarray(self.half_extents, dtype=np.float64))
        if self.center.shape != (3,) or self.half_extents.shape != (3,):
            raise ParameterError("box center/half_extents must be 3-vectors")
        if not np.all(self.half_extents > 0):
            raise ParameterError(f"box half_extents must be positive, got {self.half_extents}")

    @property
    def lo(self):
        return self.center - self.half_extents

    @property
    def hi(self):
        return self.center + self.half_extents

    @property
    def volume(self):
        return float(np.prod(2.0 * self.half_extents))

    def contains(self, points, tol=0.0):
        """Boolean mask of points inside the box (closed, optionally dilated by tol)."""
        points = np.asarray(points, dtype=np.float64)
        return np.all(np.abs(points - self.center) <= self.half_extents + tol, axis=-1)


@dataclass
class TriangleMesh:
    """Indexed triangle mesh. vertices: (V, 3) float64, faces: (F, 3) int64."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)

    @property
    def num_vertices(self):
        return int(self.vertices.shape[0])

    @property
    def num_faces(self):
        return int(self.faces.shape[0])

    def face_corners(self):
        """Returns (a, b, c) arrays of shape (F, 3)."""
        v, f = self.vertices, self.faces
        return v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]

    def face_normals(self, normalized=True):
        a, b, c = self.face_corners()
        n = np.cross(b - a, c - a)
        if normalized:
            norms = np.linalg.norm(n, axis=1, keepdims=True)
            if np.any(norms == 0):
                raise GeometryError("mesh contains zero-area faces")
            n = n / norms
        return n

    def face_areas(self):
        a, b, c = self.face_corners()
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def surface_area(self):
        return float(self.face_areas().sum())

    def bounding_box(self) -> BoundingBox3D:
        if self.num_vertices == 0:
            raise GeometryError("empty mesh has no bounding box")
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return BoundingBox3D(center=(lo + hi) / 2.0, half_extents=np.maximum((hi - lo) / 2.0, 1e-9))

    def transformed(self, scale=1.0, offset=(0.0, 0.0, 0.0)) -> "TriangleMesh":
        """Copy with vertices mapped to scale * (v - offset)."""
        offset = np.asarray(offset, dtype=np.float64)
        return TriangleMesh(vertices=(self.vertices - offset) * scale, faces=self.faces.copy())

    def copy(self) -> "TriangleMesh":
        return TriangleMesh(self.vertices.copy(), self.faces.copy())


def concat_meshes(meshes) -> TriangleMesh:
    """Disjoint union: vertex arrays concatenated, faces reindexed."""
    meshes = list(meshes)
    if not meshes:
        raise GeometryError("cannot concatenate zero meshes")
    verts, faces, off = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + off)
        off += m.num_vertices
    return TriangleMesh(np.concatenate(verts, axis=0), np.concatenate(faces, axis=0))


@dataclass(frozen=True)
class PrimitiveSpec:
    """One procedural part: an axis-aligned primitive with color and size tags."""

    kind: str
    center: np.ndarray
    half_extents: np.ndarray
    color: np.ndarray
    size_bucket: str

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))
        object.__setattr__(self, "half_extents", np.asarray(self.half_extents, dtype=np.float64))
        object.__setattr__(self, "color", np.asarray(self.color, dtype=np.float64))
        if self.kind not in PRIMITIVE_KINDS:
            raise ParameterError(f"unknown primitive kind {self.kind!r}")
        if self.size_bucket not in SIZE_BUCKETS:
            raise ParameterError(f"unknown size bucket {self.size_bucket!r}")
        if not np.all(self.half_extents >= 0.02):
            raise ParameterError("half_extents must be >= 0.02 componentwise")
        if np.any(np.abs(self.center) + self.half_extents > 1.0 + 1e-12):
            raise ParameterError("primitive must stay within [-1, 1]^3")
        if self.kind == "capsule":
            hx, hy, hz = self.half_extents
            if not (abs(hx - hy) < 1e-12 and hz >= hx):
                raise ParameterError("capsule needs hx == hy <= hz")

    def mesh(self) -> TriangleMesh:
        return build_primitive_mesh(self)

    def contains(self, points):
        """Exact analytic inside test (closed) for supervision labels."""
        return primitive_inside(self, points)


def _unit_sphere_mesh(segments=SPHERE_SEGMENTS, rings=SPHERE_RINGS) -> TriangleMesh:
    """UV sphere of radius 1. Poles are single vertices; seams welded."""
    verts = [(0.0, 0.0, 1.0)]
    for j in range(1, rings):
        theta = np.pi * j / rings
        z = np.cos(theta)
        r = np.sin(theta)
        for i in range(segments):
            phi = 2.0 * np.pi * i / segments
            verts.append((r * np.cos(phi), r * np.sin(phi), z))
    verts.append((0.0, 0.0, -1.0))
    faces = []
    top, bot = 0, len(verts) - 1
    ring = lambda j: 1 + (j - 1) * segments  # noqa: E731 - index of first vertex of ring j
    for i in range(segments):
        i1 = (i + 1) % segments
        faces.append((top, ring(1) + i, ring(1) + i1))
    for j in range(1, rings - 1):
        for i in range(segments):
            i1 = (i + 1) % segments
            a, b = ring(j) + i, ring(j) + i1
            c, d = ring(j + 1) + i1, ring(j + 1) + i
            faces.append((a, d, c))
            faces.append((a, c, b))
    for i in range(segments):
        i1 = (i + 1) % segments
        faces.append((bot, ring(rings - 1) + i1, ring(rings - 1) + i))
    return TriangleMesh(np.array(verts), np.array(faces))


def _unit_box_mesh() -> TriangleMesh:
    """Cube spanning [-1, 1]^3: 8 vertices, 12 triangles, outward normals."""
    v = np.array([[x, y, z] for x in (-1.0, 1.0) for y in (-1.0, 1.0) for z in (-1.0, 1.0)])
    # vertex index = 4*xbit + 2*ybit + zbit
    faces = np.array([
        (0, 1, 3), (0, 3, 2),  # -x
        (4, 6, 7), (4, 7, 5),  # +x
        (0, 4, 5), (0, 5, 1),  # -y
        (2, 3, 7), (2, 7, 6),  # +y
        (0, 2, 6), (0, 6, 4),  # -z
        (1, 5, 7), (1, 7, 3),  # +z
    ])
    return TriangleMesh(v, faces)


def _unit_cylinder_mesh(segments=CYLINDER_SEGMENTS) -> TriangleMesh:
    """Cylinder: radius 1 in xy, z in [-1, 1], capped with triangle fans."""
    ring_top, ring_bot = [], []
    for i in range(segments):
        phi = 2.0 * np.pi * i / segments
        x, y = np.cos(phi), np.sin(phi)
        ring_top.append((x, y, 1.0))
        ring_bot.append((x, y, -1.0))
    verts = ring_top + ring_bot + [(0.0, 0.0, 1.0), (0.0, 0.0, -1.0)]
    top_c, bot_c = 2 * segments, 2 * segments + 1
    faces = []
    for i in range(segments):
        i1 = (i + 1) % segments
        t0, t1 = i, i1
        b0, b1 = segments + i, segments + i1
        faces.append((t0, b0, b1))
        faces.append((t0, b1, t1))
        faces.append((top_c, t0, t1))
        faces.append((bot_c, b1, b0))
    return TriangleMesh(np.array(verts), np.array(faces))


def build_primitive_mesh(spec: PrimitiveSpec) -> TriangleMesh:
    """Tessellate a primitive at its fixed resolution, scaled and translated."""
    if spec.kind == "sphere":
        base = _unit_sphere_mesh()
    elif spec.kind == "box":
        base = _unit_box_mesh()
    elif spec.kind == "cylinder":
        base = _unit_cylinder_mesh()
    elif spec.kind == "capsule":
        return _build_capsule(spec)
    else:  # pragma: no cover - guarded by PrimitiveSpec
        raise ParameterError(f"unknown kind {spec.kind!r}")
    verts = base.vertices * spec.half_extents[None, :] + spec.center[None, :]
    return TriangleMesh(verts, base.faces)


def _build_capsule(spec: PrimitiveSpec) -> TriangleMesh:
    radius = float(spec.half_extents[0])
    half_length = float(spec.half_extents[2])
    segments, cap_rings = CAPSULE_SEGMENTS, CAPSULE_CAP_RINGS
    cz = half_length - radius

    # Latitude rings top to bottom, poles excluded. Upper cap runs pole->equator,
    # lower cap equator->pole; the band between the two equators is the cylinder.
    ring_levels = []
    for j in range(1, cap_rings + 1):
        t = np.pi / 2 * j / cap_rings
        ring_levels.append((cz + radius * np.cos(t), radius * np.sin(t)))
    start = 1 if cz <= 1e-12 else 0  # degenerate cylinder: skip duplicate equator
    for j in range(start, cap_rings):
        t = np.pi / 2 * j / cap_rings
        ring_levels.append((-cz - radius * np.sin(t), radius * np.cos(t)))

    verts = [(0.0, 0.0, cz + radius)]
    for z, r in ring_levels:
        for i in range(segments):
            phi = 2.0 * np.pi * i / segments
            verts.append((r * np.cos(phi), r * np.sin(phi), z))
    verts.append((0.0, 0.0, -cz - radius))

    faces = []
    top, bot = 0, len(verts) - 1
    n_rings = len(ring_levels)
    ring = lambda j: 1 + j * segments  # noqa: E731
    for i in range(segments):
        i1 = (i + 1) % segments
        faces.append((top, ring(0) + i, ring(0) + i1))
    for j in range(n_rings - 1):
        for i in range(segments):
            i1 = (i + 1) % segments
            a, b = ring(j) + i, ring(j) + i1
            c, d = ring(j + 1) + i1, ring(j + 1) + i
            faces.append((a, d, c))
            faces.append((a, c, b))
    for i in range(segments):
        i1 = (i + 1) % segments
        faces.append((bot, ring(n_rings - 1) + i1, ring(n_rings - 1) + i))

    mesh = TriangleMesh(np.array(verts), np.array(faces))
    mesh.vertices = mesh.vertices + spec.center[None, :]
    return mesh


def primitive_inside(spec: PrimitiveSpec, points) -> np.ndarray:
    """Exact inside test for the smooth primitive (not its tessellation)."""
    p = np.atleast_2d(np.asarray(points, dtype=np.float64)) - spec.center[None, :]
    hx, hy, hz = spec.half_extents
    if spec.kind == "box":
        out = np.all(np.abs(p) <= spec.half_extents[None, :], axis=1)
    elif spec.kind == "sphere":
        out = ((p[:, 0] / hx) ** 2 + (p[:, 1] / hy) ** 2 + (p[:, 2] / hz) ** 2) <= 1.0
    elif spec.kind == "cylinder":
        out = (((p[:, 0] / hx) ** 2 + (p[:, 1] / hy) ** 2) <= 1.0) & (np.abs(p[:, 2]) <= hz)
    elif spec.kind == "capsule":
        radius, seg = hx, hz - hx
        dz = np.clip(p[:, 2], -seg, seg)
        out = (p[:, 0] ** 2 + p[:, 1] ** 2 + (p[:, 2] - dz) ** 2) <= radius ** 2
    else:  # pragma: no cover
        raise ParameterError(f"unknown kind {spec.kind!r}")
    return out


def specs_inside(specs, points) -> np.ndarray:
    """Union occupancy over a list of PrimitiveSpec."""
    points = np.atleast_2d(points)
    out = np.zeros(points.shape[0], dtype=bool)
    for s in specs:
        out |= primitive_inside(s, points)
    return out


def box_to_cube_mesh(box: BoundingBox3D) -> TriangleMesh:
    """Box as a closed 6-face mesh: 8 vertices, 12 triangles, outward normals."""
    if not np.all(box.half_extents > 0):
        raise ParameterError("degenerate box extents")
    base = _unit_box_mesh()
    verts = base.vertices * box.half_extents[None, :] + box.center[None, :]
    return TriangleMesh(verts, base.faces)


BOX_EDGES = np.array([
    (0, 1), (2, 3), (4, 5), (6, 7),  # z-aligned
    (0, 2), (1, 3), (4, 6), (5, 7),  # y-aligned
    (0, 4), (1, 5), (2, 6), (3, 7),  # x-aligned
])


def box_corners(box: BoundingBox3D) -> np.ndarray:
    """8 corners ordered to match _unit_box_mesh vertex layout."""
    base = np.array([[x, y, z] for x in (-1.0, 1.0) for y in (-1.0, 1.0) for z in (-1.0, 1.0)])
    return base * box.half_extents[None, :] + box.center[None, :]
