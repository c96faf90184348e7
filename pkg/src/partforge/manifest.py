"""Dataset directory IO.

Layout: `manifest.json` (schema-versioned index) plus one subdirectory per
object holding ASCII PLY meshes, `.npy` float32 arrays (little-endian with
shape header), lossless 8-bit PNGs for silhouette/color channels, and raw
float32 depth arrays. Captions, boxes, and primitive provenance live inline
in the manifest. The round trip is lossless for every field.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .dataset import ObjectRecord, PartRecord
from .errors import ManifestIOError, ParameterError, VersionError
from .geometry import BoundingBox3D, PrimitiveSpec, TriangleMesh
from .rendering import CameraRig

FORMAT_VERSION = 1


# ---------------------------------------------------------------- PLY ------

def write_ply(mesh: TriangleMesh, path):
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {mesh.num_vertices}",
        "property double x",
        "property double y",
        "property double z",
        f"element face {mesh.num_faces}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    for v in mesh.vertices:
        lines.append(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}")
    for f in mesh.faces:
        lines.append(f"3 {f[0]} {f[1]} {f[2]}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_ply(path) -> TriangleMesh:
    path = Path(path)
    if not path.exists():
        raise ManifestIOError("missing mesh file", path=str(path))
    text = path.read_text().splitlines()
    try:
        n_vert = n_face = None
        i = 0
        while text[i] != "end_header":
            tok = text[i].split()
            if tok[:2] == ["element", "vertex"]:
                n_vert = int(tok[2])
            elif tok[:2] == ["element", "face"]:
                n_face = int(tok[2])
            i += 1
        body = text[i + 1:]
        verts = np.array([[float(x) for x in body[j].split()] for j in range(n_vert)])
        faces = np.array([[int(x) for x in body[n_vert + j].split()[1:4]] for j in range(n_face)])
    except (IndexError, ValueError, TypeError) as exc:
        raise ManifestIOError(f"corrupt PLY ({exc})", path=str(path)) from exc
    if n_vert == 0:
        verts = np.zeros((0, 3))
    if n_face == 0:
        faces = np.zeros((0, 3), dtype=np.int64)
    return TriangleMesh(verts, faces)


# ------------------------------------------------------------- arrays ------

def write_array(arr: np.ndarray, path):
    np.save(path, arr, allow_pickle=False)


def read_array(path, dtype=None) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise ManifestIOError("missing array file", path=str(path))
    try:
        arr = np.load(path, allow_pickle=False)
    except (ValueError, OSError) as exc:
        raise ManifestIOError(f"corrupt array ({exc})", path=str(path)) from exc
    if dtype is not None and arr.dtype != dtype:
        raise ManifestIOError(f"array dtype {arr.dtype}, expected {dtype}", path=str(path))
    return arr


# ------------------------------------------------------------- images ------

def _to_u8(channel: np.ndarray) -> np.ndarray:
    return np.round(channel.astype(np.float64) * 255.0).astype(np.uint8)


def _from_u8(arr: np.ndarray) -> np.ndarray:
    return (arr.astype(np.float64) / 255.0).astype(np.float32)


def write_views(views: np.ndarray, directory: Path, prefix: str):
    """views: (v, H, W, 5) float32 with channels (sil, depth, R, G, B)."""
    for k in range(views.shape[0]):
        img = views[k]
        Image.fromarray(_to_u8(img[:, :, 0]), mode="L").save(directory / f"{prefix}_v{k}_sil.png")
        Image.fromarray(_to_u8(img[:, :, 2:5]), mode="RGB").save(directory / f"{prefix}_v{k}_color.png")
        write_array(img[:, :, 1].astype(np.float32), directory / f"{prefix}_v{k}_depth.npy")


def read_views(directory: Path, prefix: str, num_views: int) -> np.ndarray:
    out = []
    for k in range(num_views):
        sil_p = directory / f"{prefix}_v{k}_sil.png"
        col_p = directory / f"{prefix}_v{k}_color.png"
        for p in (sil_p, col_p):
            if not p.exists():
                raise ManifestIOError("missing image file", path=str(p))
        sil = _from_u8(np.asarray(Image.open(sil_p)))
        color = _from_u8(np.asarray(Image.open(col_p)))
        depth = read_array(directory / f"{prefix}_v{k}_depth.npy", dtype=np.float32)
        img = np.zeros(sil.shape + (5,), dtype=np.float32)
        img[:, :, 0] = sil
        img[:, :, 1] = depth
        img[:, :, 2:5] = color
        out.append(img)
    return np.stack(out, axis=0)


# ------------------------------------------------------------ manifest -----

def _box_to_json(box: BoundingBox3D):
    return {"center": box.center.tolist(), "half_extents": box.half_extents.tolist()}


def _box_from_json(d) -> BoundingBox3D:
    return BoundingBox3D(np.asarray(d["center"]), np.asarray(d["half_extents"]))


def _spec_to_json(spec: PrimitiveSpec):
    return {
        "kind": spec.kind,
        "center": spec.center.tolist(),
        "half_extents": spec.half_extents.tolist(),
        "color": spec.color.tolist(),
        "size_bucket": spec.size_bucket,
    }


def _spec_from_json(d) -> PrimitiveSpec:
    return PrimitiveSpec(
        kind=d["kind"], center=np.asarray(d["center"]),
        half_extents=np.asarray(d["half_extents"]),
        color=np.asarray(d["color"]), size_bucket=d["size_bucket"],
    )


def rig_to_json(rig: CameraRig):
    return {
        "azimuths_deg": list(rig.azimuths_deg),
        "elevation_deg": rig.elevation_deg,
        "width": rig.width,
        "height": rig.height,
        "fill": rig.fill,
    }


def rig_from_json(d) -> CameraRig:
    return CameraRig(
        azimuths_deg=tuple(d["azimuths_deg"]), elevation_deg=d["elevation_deg"],
        width=d["width"], height=d["height"], fill=d["fill"],
    )


def write_manifest(objects, root, rig: CameraRig, meta: dict | None = None) -> Path:
    """Write a dataset directory; returns the manifest path."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for obj in objects:
        rel = Path("objects") / obj.object_id
        obj_dir = root / rel
        obj_dir.mkdir(parents=True, exist_ok=True)
        write_ply(obj.global_mesh, obj_dir / "global.ply")
        write_views(obj.global_views, obj_dir, "global")
        part_entries = []
        for p in obj.parts:
            tag = f"part_{p.part_id:02d}"
            write_ply(p.mesh, obj_dir / f"{tag}.ply")
            write_array(p.points, obj_dir / f"{tag}_points.npy")
            write_array(p.normals, obj_dir / f"{tag}_normals.npy")
            write_views(p.views, obj_dir, tag)
            part_entries.append({
                "part_id": p.part_id,
                "role": p.role,
                "caption": p.caption.tolist(),
                "box": _box_to_json(p.box),
                "source": _spec_to_json(p.source),
                "mesh": f"{tag}.ply",
                "points": f"{tag}_points.npy",
                "normals": f"{tag}_normals.npy",
                "views_prefix": tag,
            })
        entries.append({
            "object_id": obj.object_id,
            "seed": obj.seed,
            "layout": obj.layout,
            "dir": str(rel),
            "global_caption": obj.global_caption.tolist(),
            "global_mesh": "global.ply",
            "global_views_prefix": "global",
            "parts": part_entries,
        })
    doc = {
        "format_version": FORMAT_VERSION,
        "rig": rig_to_json(rig),
        "meta": meta or {},
        "objects": entries,
    }
    manifest_path = root / "manifest.json"
    manifest_path.write_text(json.dumps(doc, indent=1, sort_keys=True))
    return manifest_path


def read_manifest(root):
    """Load a dataset directory; returns (objects, rig, meta)."""
    root = Path(root)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise ManifestIOError("missing manifest", path=str(manifest_path))
    try:
        doc = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestIOError(f"corrupt manifest ({exc})", path=str(manifest_path)) from exc
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionError(f"manifest format_version {version!r}, supported {FORMAT_VERSION}")
    rig = rig_from_json(doc["rig"])
    objects = []
    for entry in doc["objects"]:
        obj_dir = root / entry["dir"]
        parts = []
        for pe in entry["parts"]:
            mesh = read_ply(obj_dir / pe["mesh"])
            points = read_array(obj_dir / pe["points"], dtype=np.float32)
            normals = read_array(obj_dir / pe["normals"], dtype=np.float32)
            views = read_views(obj_dir, pe["views_prefix"], rig.num_views)
            parts.append(PartRecord(
                part_id=pe["part_id"], mesh=mesh, points=points, normals=normals,
                views=views, box=_box_from_json(pe["box"]),
                caption=np.asarray(pe["caption"], dtype=np.int64),
                source=_spec_from_json(pe["source"]), role=pe["role"],
            ))
        objects.append(ObjectRecord(
            object_id=entry["object_id"],
            parts=parts,
            global_mesh=read_ply(obj_dir / entry["global_mesh"]),
            global_views=read_views(obj_dir, entry["global_views_prefix"], rig.num_views),
            global_caption=np.asarray(entry["global_caption"], dtype=np.int64),
            layout=entry["layout"],
            seed=entry["seed"],
        ))
    return objects, rig, doc.get("meta", {})
