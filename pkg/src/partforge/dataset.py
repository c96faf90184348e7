"""Procedural generation of born-segmented, captioned, rendered part objects.

Each object is a layout (stacked / radial / grid) of 1..8 axis-aligned
primitives. Generation is a pure function of (seed, parameters): meshes,
surface samples, renders, boxes, and captions are all reproducible
bit-for-bit. Captions are fixed-length templated token sequences over a
small closed vocabulary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, ParameterError
from .geometry import (
    PRIMITIVE_KINDS,
    SIZE_BUCKETS,
    BoundingBox3D,
    PrimitiveSpec,
    TriangleMesh,
    concat_meshes,
)
from .rendering import CameraRig, default_rig, render_views
from .sampling import sample_surface

NUM_SURFACE_SAMPLES = 4096
MAX_PARTS = 8
CAPTION_LENGTH = 8
GEN_SALT = 0x9F17  # namespace for per-object RNG streams

ROLES = ("base", "middle", "top", "hub", "spoke", "cell")
LAYOUTS = ("stacked", "radial", "grid")

COLOR_NAMES = ("red", "green", "blue", "yellow", "cyan", "magenta", "white", "gray")
# exact 8-bit palette so quantized image IO round-trips losslessly
COLOR_PALETTE = {
    "red": (230, 40, 40),
    "green": (60, 200, 60),
    "blue": (50, 90, 230),
    "yellow": (235, 220, 50),
    "cyan": (60, 210, 210),
    "magenta": (210, 60, 210),
    "white": (240, 240, 240),
    "gray": (128, 128, 128),
}

COUNT_WORDS = ("one", "two", "three", "four", "five", "six", "seven", "eight")

VOCAB_SIZE = 64
PAD, BOS, EOS = 0, 1, 2
_WORDS = (
    ["<pad>", "<bos>", "<eos>", "a", "object", "with", "parts", "part"]
    + list(SIZE_BUCKETS)
    + list(COLOR_NAMES)
    + list(PRIMITIVE_KINDS)
    + list(ROLES)
    + list(COUNT_WORDS)
)
VOCAB = {w: i for i, w in enumerate(_WORDS)}
assert len(VOCAB) <= VOCAB_SIZE


def token_id(word: str) -> int:
    if word not in VOCAB:
        raise ParameterError(f"word {word!r} not in caption vocabulary")
    return VOCAB[word]


def tokenize(text: str) -> np.ndarray:
    """Whitespace tokenization into a padded CAPTION_LENGTH id sequence."""
    words = text.strip().lower().split()
    if len(words) > CAPTION_LENGTH - 2:
        raise ParameterError(f"caption too long ({len(words)} words)")
    ids = [BOS] + [token_id(w) for w in words] + [EOS]
    ids += [PAD] * (CAPTION_LENGTH - len(ids))
    return np.asarray(ids, dtype=np.int64)


def color_name_of(color) -> str:
    color = np.asarray(color, dtype=np.float64)
    for name, rgb in COLOR_PALETTE.items():
        if np.array_equal(color, np.asarray(rgb, dtype=np.float64) / 255.0):
            return name
    raise ParameterError("color is not a palette color")


def caption_part(spec: PrimitiveSpec, role_in_object: str) -> np.ndarray:
    """Templated part caption; injective over (kind, color, size, role)."""
    if role_in_object not in ROLES:
        raise ParameterError(f"unknown role {role_in_object!r}")
    name = color_name_of(spec.color)
    return tokenize(f"a {spec.size_bucket} {name} {spec.kind} {role_in_object}")


def caption_global(num_parts: int) -> np.ndarray:
    if not 1 <= num_parts <= MAX_PARTS:
        raise ParameterError(f"part count {num_parts} outside 1..{MAX_PARTS}")
    return tokenize(f"object with {COUNT_WORDS[num_parts - 1]} parts")


@dataclass
class PartRecord:
    """One segmented part with everything the encoders consume."""

    part_id: int
    mesh: TriangleMesh
    points: np.ndarray      # (S, 3) float32, on the mesh surface
    normals: np.ndarray     # (S, 3) float32, unit rows
    views: np.ndarray       # (v, H, W, 5) float32 in [0, 1]
    box: BoundingBox3D
    caption: np.ndarray     # (CAPTION_LENGTH,) int64
    source: PrimitiveSpec   # generating primitive; analytic occupancy oracle
    role: str


@dataclass
class ObjectRecord:
    object_id: str
    parts: list
    global_mesh: TriangleMesh
    global_views: np.ndarray
    global_caption: np.ndarray
    layout: str
    seed: int


def _pick_kind(rng) -> str:
    return PRIMITIVE_KINDS[rng.integers(len(PRIMITIVE_KINDS))]


def _pick_bucket(rng) -> str:
    return SIZE_BUCKETS[rng.integers(len(SIZE_BUCKETS))]


_BUCKET_FACTOR = {"small": 0.45, "medium": 0.7, "large": 1.0}


def _shape_extents(kind, bucket, cap_xy, cap_z, rng):
    """Half-extents for one primitive fitting inside per-axis caps."""
    f = _BUCKET_FACTOR[bucket] * rng.uniform(0.8, 1.0)
    hx = max(cap_xy * f * rng.uniform(0.75, 1.0), 0.02)
    hy = max(cap_xy * f * rng.uniform(0.75, 1.0), 0.02)
    hz = max(cap_z * f, 0.02)
    if kind == "sphere":
        pass
    elif kind == "capsule":
        r = min(hx, hy, hz * 0.75)
        r = max(r, 0.02)
        hx = hy = r
        hz = max(hz, r * 1.3)
    elif kind == "cylinder":
        hy = hx
    return np.array([hx, hy, hz])


def _layout_stacked(n, rng):
    slot = 1.8 / n
    specs, roles = [], []
    for i in range(n):
        kind = _pick_kind(rng)
        bucket = _pick_bucket(rng)
        he = _shape_extents(kind, bucket, 0.55, slot * 0.46, rng)
        cz = -0.9 + (i + 0.5) * slot
        jitter = rng.uniform(-0.05, 0.05, size=2)
        center = np.array([jitter[0], jitter[1], cz])
        specs.append((kind, center, he, bucket))
        roles.append("base" if i == 0 else ("top" if i == n - 1 else "middle"))
    return specs, roles


def _layout_radial(n, rng):
    specs, roles = [], []
    kind = _pick_kind(rng)
    bucket = _pick_bucket(rng)
    he = _shape_extents(kind, bucket, 0.3, 0.3, rng)
    specs.append((kind, np.zeros(3), he, bucket))
    roles.append("hub")
    if n > 1:
        radius = 0.62
        phase = rng.uniform(0.0, 2.0 * np.pi)
        for k in range(n - 1):
            ang = phase + 2.0 * np.pi * k / (n - 1)
            kind = _pick_kind(rng)
            bucket = _pick_bucket(rng)
            he = _shape_extents(kind, bucket, 0.22, 0.22, rng)
            center = np.array([radius * np.cos(ang), radius * np.sin(ang), rng.uniform(-0.1, 0.1)])
            specs.append((kind, center, he, bucket))
            roles.append("spoke")
    return specs, roles


def _layout_grid(n, rng):
    if n <= 2:
        dims = (2, 1, 1)
    elif n <= 4:
        dims = (2, 2, 1)
    else:
        dims = (2, 2, 2)
    cells = [(i, j, k) for i in range(dims[0]) for j in range(dims[1]) for k in range(dims[2])]
    order = rng.permutation(len(cells))[:n]
    specs, roles = [], []
    cell_half = np.array([1.0 / dims[0], 1.0 / dims[1], 1.0 / dims[2]])
    for idx in order:
        i, j, k = cells[idx]
        center = np.array([
            -1.0 + (2 * i + 1) * cell_half[0],
            -1.0 + (2 * j + 1) * cell_half[1],
            -1.0 + (2 * k + 1) * cell_half[2],
        ])
        kind = _pick_kind(rng)
        bucket = _pick_bucket(rng)
        cap = cell_half * 0.88
        he = _shape_extents(kind, bucket, min(cap[0], cap[1]), cap[2], rng)
        specs.append((kind, center, he, bucket))
        roles.append("cell")
    return specs, roles


_LAYOUT_BUILDERS = {"stacked": _layout_stacked, "radial": _layout_radial, "grid": _layout_grid}


def _clamp_spec(kind, center, he, bucket, color):
    # keep center +- he inside [-1, 1] exactly
    he = np.minimum(he, 0.98)
    center = np.clip(center, -1.0 + he, 1.0 - he)
    return PrimitiveSpec(kind=kind, center=center, half_extents=he,
                         color=np.asarray(color, dtype=np.float64) / 255.0,
                         size_bucket=bucket)


def generate_object(
    seed: int,
    part_count_range=(2, 5),
    rig: CameraRig | None = None,
    num_surface_samples: int = NUM_SURFACE_SAMPLES,
) -> ObjectRecord:
    """Build one synthetic object; deterministic in (seed, arguments)."""
    lo, hi = int(part_count_range[0]), int(part_count_range[1])
    if not (1 <= lo <= hi <= MAX_PARTS):
        raise ParameterError(f"part_count_range must satisfy 1 <= lo <= hi <= {MAX_PARTS}")
    rig = rig or default_rig()
    rng = np.random.default_rng([GEN_SALT, int(seed)])

    n = int(rng.integers(lo, hi + 1))
    layout = LAYOUTS[rng.integers(len(LAYOUTS))]
    raw_specs, roles = _LAYOUT_BUILDERS[layout](n, rng)

    parts = []
    meshes = []
    for pid, ((kind, center, he, bucket), role) in enumerate(zip(raw_specs, roles)):
        color = COLOR_PALETTE[COLOR_NAMES[rng.integers(len(COLOR_NAMES))]]
        spec = _clamp_spec(kind, center, he, bucket, color)
        mesh = spec.mesh()
        pts, nrm = sample_surface(mesh, num_surface_samples, seed=[GEN_SALT, int(seed), pid])
        views = render_views([(mesh, spec.color)], rig)
        box = mesh.bounding_box()
        parts.append(PartRecord(
            part_id=pid, mesh=mesh, points=pts, normals=nrm, views=views,
            box=box, caption=caption_part(spec, role), source=spec, role=role,
        ))
        meshes.append((mesh, spec.color))

    global_mesh = concat_meshes([m for m, _ in meshes])
    global_views = render_views(meshes, rig)
    return ObjectRecord(
        object_id=f"obj_{int(seed):08d}",
        parts=parts,
        global_mesh=global_mesh,
        global_views=global_views,
        global_caption=caption_global(n),
        layout=layout,
        seed=int(seed),
    )


def global_surface_samples(obj: ObjectRecord, num_samples: int = NUM_SURFACE_SAMPLES):
    """Surface samples of the union mesh, deterministic per object."""
    return sample_surface(obj.global_mesh, num_samples, seed=[GEN_SALT, obj.seed, 0xFFFF])
