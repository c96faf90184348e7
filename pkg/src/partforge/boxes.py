"""Bounding-box conditioning: box latents and wireframe latents.

Boxes enter the 3D branch as geometric tokens of the box-as-cube mesh,
encoded by the frozen part VAE (mean, never a sample). They enter the 2D
global branch as multi-view wireframe renders encoded by the frozen image
VAE and processed by the denoiser's adapter. Boxes are also accepted from
a structured text file, which is the entry point for externally produced
layouts.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .dataset import CAPTION_LENGTH, tokenize
from .errors import ManifestIOError, ParameterError, StateError
from .geometry import BoundingBox3D, box_to_cube_mesh
from .rendering import CameraRig, render_wireframes
from .sampling import BOX_SAMPLING_SEED, sample_surface
from .vae2d import ImageVae
from .vae3d import GeomVae


def encode_box(box: BoundingBox3D, vae3d: GeomVae, seed: int = BOX_SAMPLING_SEED) -> torch.Tensor:
    """Box -> cube mesh -> fixed-seed surface samples -> encoder mean (T, D)."""
    if vae3d is None:
        raise StateError("encode_box requires a trained part VAE")
    mesh = box_to_cube_mesh(box)
    p, q = sample_surface(mesh, vae3d.cfg.num_points, seed=seed)
    with torch.no_grad():
        out = vae3d.encode(p, q)
    return out.mean


def encode_boxes(boxes, vae3d: GeomVae, seed: int = BOX_SAMPLING_SEED) -> torch.Tensor:
    """Stack of box latents, (N, T, D)."""
    boxes = list(boxes)
    if not boxes:
        return torch.zeros(0, vae3d.cfg.tokens, vae3d.cfg.token_dim)
    return torch.stack([encode_box(b, vae3d, seed=seed) for b in boxes])


def wireframe_latents(boxes, vae2d: ImageVae, rig: CameraRig,
                      frame_box: BoundingBox3D | None = None) -> torch.Tensor:
    """All boxes drawn per view, VAE-encoded; (v, T2, D2) means."""
    if vae2d is None:
        raise StateError("wireframe_latents requires a trained image VAE")
    images = render_wireframes(boxes, rig, frame_box=frame_box)
    with torch.no_grad():
        out = vae2d.encode(images)
    return out.mean


# ----------------------------------------------------- external box files --

def parse_caption(value) -> np.ndarray:
    """Caption as vocabulary text or an explicit token-id list."""
    if isinstance(value, str):
        return tokenize(value)
    ids = np.asarray(value, dtype=np.int64)
    if ids.shape != (CAPTION_LENGTH,):
        raise ParameterError(f"caption id list must have length {CAPTION_LENGTH}")
    return ids


def parse_box_entry(entry) -> tuple[BoundingBox3D, np.ndarray]:
    try:
        box = BoundingBox3D(np.asarray(entry["center"], dtype=np.float64),
                            np.asarray(entry["half_extents"], dtype=np.float64))
        caption = parse_caption(entry["caption"])
    except KeyError as exc:
        raise ParameterError(f"box entry missing field {exc}") from exc
    return box, caption


def read_box_file(path):
    """JSON list of {center, half_extents, caption} -> [(box, caption_ids)]."""
    path = Path(path)
    if not path.exists():
        raise ManifestIOError("missing box file", path=str(path))
    try:
        entries = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestIOError(f"corrupt box file ({exc})", path=str(path)) from exc
    if not isinstance(entries, list):
        raise ParameterError("box file must contain a JSON list")
    return [parse_box_entry(e) for e in entries]
