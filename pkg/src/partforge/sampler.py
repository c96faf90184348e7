"""Inference: joint part sampling, editing by resampling, fix-and-extend.

The reverse loop is ancestral (DDPM-style) over the training schedule,
optionally respaced to fewer steps, with classifier-free guidance applied
to both modalities. Editing keeps selected slots pinned to their clean
latents: at every reverse step the pinned slots are overwritten with
freshly-noised clean latents before the denoiser call, and after the final
step they are set to the clean latents exactly, so preservation is bitwise.

Slots are canonically ordered by box center before noise is drawn, which
makes the whole pipeline equivariant to the order of request entries.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .boxes import encode_boxes, wireframe_latents
from .dataset import CAPTION_LENGTH, caption_global
from .denoiser import DenoiserState, DualDenoiser, MAX_PARTS
from .errors import ParameterError, StateError
from .geometry import BoundingBox3D, TriangleMesh
from .rendering import CameraRig
from .sampling import sample_surface
from .schedule import NoiseSchedule, add_noise, build_schedule
from .training import LatentScales, canonical_part_order
from .vae2d import ImageVae
from .vae3d import GeomVae

REENCODE_SEED = 0x5EED
X0_CLIP = 5.0


@dataclass(frozen=True)
class SampleRequest:
    boxes: list
    captions: list              # per-part token-id arrays
    seed: int = 0
    guidance_scale: float = 3.0
    steps: int = 50
    grid_resolution: int = 64

    def validate(self):
        if not 1 <= len(self.boxes) <= MAX_PARTS:
            raise ParameterError(f"a pass needs 1..{MAX_PARTS} boxes, got {len(self.boxes)}")
        if len(self.boxes) != len(self.captions):
            raise ParameterError("boxes and captions must have equal length")
        if self.guidance_scale < 1.0:
            raise ParameterError("guidance_scale must be >= 1")
        if self.steps < 1:
            raise ParameterError("steps must be >= 1")
        return self


@dataclass
class GeneratedPart:
    mesh: TriangleMesh            # object-frame (absolute) coordinates
    views: np.ndarray             # (v, H, W, 5) float32
    geom_tokens: torch.Tensor     # (T3, D3), unscaled VAE token space
    image_tokens: torch.Tensor    # (v, T2, D2)
    box: BoundingBox3D
    caption: np.ndarray


class PartSampler:
    """Binds the trained denoiser and frozen VAEs for inference."""

    def __init__(self, denoiser: DualDenoiser, vae3d: GeomVae, vae2d: ImageVae,
                 scales: LatentScales, rig: CameraRig):
        if denoiser is None:
            raise StateError("sampler requires a trained diffusion checkpoint")
        self.denoiser = denoiser.eval()
        self.vae3d = vae3d.eval()
        self.vae2d = vae2d.eval()
        self.scales = scales
        self.rig = rig
        self.schedule = build_schedule("cosine", denoiser.cfg.t_max)

    # ----------------------------------------------------------- helpers --

    def _timesteps(self, steps: int):
        t_max = self.denoiser.cfg.t_max
        steps = min(steps, t_max)
        taus = np.unique(np.linspace(t_max, 1, steps).round().astype(int))[::-1]
        return list(taus)

    def _decode_part(self, geom_scaled, image_scaled, box, caption, grid_resolution):
        geom_tokens = geom_scaled * self.scales.geom
        image_tokens = image_scaled * self.scales.image
        with torch.no_grad():
            mesh = self.vae3d.extract_surface(geom_tokens, grid_resolution)
            views = self.vae2d.decode(image_tokens).float().numpy()
        return GeneratedPart(mesh=mesh, views=views, geom_tokens=geom_tokens,
                             image_tokens=image_tokens, box=box, caption=np.asarray(caption))

    def _reverse_loop(self, boxes, captions, clean_geom, clean_image, free_mask,
                      seed, guidance_scale, steps):
        """Core sampler. clean_* hold per-slot clean (scaled) latents for pinned
        slots (None entries for free slots); free_mask marks slots evolving
        from noise. Returns per-slot scaled clean latents at t=0."""
        cfg = self.denoiser.cfg
        n = len(boxes)
        order = canonical_part_order(boxes)
        inv = np.argsort(order)
        boxes_c = [boxes[i] for i in order]
        captions_c = [np.asarray(captions[i]) for i in order]
        free_c = torch.tensor([bool(free_mask[i]) for i in order])
        clean_g = [clean_geom[i] for i in order]
        clean_i = [clean_image[i] for i in order]

        with torch.no_grad():
            box_lat = encode_boxes(boxes_c, self.vae3d) / self.scales.geom
            wire = wireframe_latents(boxes_c, self.vae2d, self.rig) / self.scales.image
        cap_t = torch.stack([torch.as_tensor(c, dtype=torch.long) for c in captions_c])
        g_cap = torch.as_tensor(caption_global(n), dtype=torch.long)

        gen = torch.Generator().manual_seed(int(seed))
        shape3 = (n, cfg.geom_tokens, cfg.geom_dim)
        shape2 = (n, cfg.num_views, cfg.image_tokens, cfg.image_dim)
        x3 = torch.randn(shape3, generator=gen)
        x2 = torch.randn(shape2, generator=gen)
        g3 = torch.randn(shape3[1:], generator=gen)
        g2 = torch.randn(shape2[1:], generator=gen)

        taus = self._timesteps(steps)
        ab = self.schedule.alpha_bar
        pinned = ~free_c
        with torch.no_grad():
            for i, t in enumerate(taus):
                t_prev = taus[i + 1] if i + 1 < len(taus) else 0
                if pinned.any():
                    for p in torch.nonzero(pinned).flatten().tolist():
                        x3[p] = add_noise(clean_g[p], t, torch.randn(shape3[1:], generator=gen),
                                          self.schedule)
                        x2[p] = add_noise(clean_i[p], t, torch.randn(shape2[1:], generator=gen),
                                          self.schedule)
                state = DenoiserState(
                    geom=x3, image=x2, part_mask=torch.ones(n, dtype=torch.bool),
                    box_latents=box_lat, captions=cap_t, global_geom=g3,
                    global_image=g2, global_caption=g_cap, t=int(t),
                )
                pred_c = self.denoiser(state, wire_latents=wire)
                if guidance_scale > 1.0:
                    pred_u = self.denoiser(state, drop_cond=True)
                    s = guidance_scale
                    e3 = pred_u.eps_geom + s * (pred_c.eps_geom - pred_u.eps_geom)
                    e2 = pred_u.eps_image + s * (pred_c.eps_image - pred_u.eps_image)
                    eg3 = pred_u.eps_global_geom + s * (pred_c.eps_global_geom - pred_u.eps_global_geom)
                    eg2 = pred_u.eps_global_image + s * (pred_c.eps_global_image - pred_u.eps_global_image)
                else:
                    e3, e2 = pred_c.eps_geom, pred_c.eps_image
                    eg3, eg2 = pred_c.eps_global_geom, pred_c.eps_global_image

                x3 = _ancestral_step(x3, e3, t, t_prev, ab, gen)
                x2 = _ancestral_step(x2, e2, t, t_prev, ab, gen)
                g3 = _ancestral_step(g3, eg3, t, t_prev, ab, gen)
                g2 = _ancestral_step(g2, eg2, t, t_prev, ab, gen)
            for p in torch.nonzero(pinned).flatten().tolist():
                x3[p] = clean_g[p]
                x2[p] = clean_i[p]
        return [x3[j] for j in inv], [x2[j] for j in inv]

    # -------------------------------------------------------------- ops ---

    def sample_parts(self, request: SampleRequest):
        """Jointly sample all requested parts; returns list[GeneratedPart]."""
        request.validate()
        n = len(request.boxes)
        geom, image = self._reverse_loop(
            boxes=list(request.boxes), captions=list(request.captions),
            clean_geom=[None] * n, clean_image=[None] * n,
            free_mask=[True] * n, seed=request.seed,
            guidance_scale=request.guidance_scale, steps=request.steps)
        return [self._decode_part(geom[i], image[i], request.boxes[i],
                                  request.captions[i], request.grid_resolution)
                for i in range(n)]

    def reencode_parts(self, parts, seed: int = REENCODE_SEED):
        """Encode (mesh, views) pairs back into clean latents; returns
        GeneratedParts whose meshes/views are decodes of those latents."""
        out = []
        for part in parts:
            mesh, views = part.mesh, part.views
            p, q = sample_surface(mesh, self.vae3d.cfg.num_points, seed=seed)
            with torch.no_grad():
                geom_tokens = self.vae3d.encode(p, q).mean
                image_tokens = self.vae2d.encode(np.asarray(views, dtype=np.float32)).mean
            out.append(self._decode_part(geom_tokens / self.scales.geom,
                                         image_tokens / self.scales.image,
                                         part.box, part.caption, grid_resolution=64))
        return out

    def edit_parts(self, originals, edit_set, new_captions=None, new_boxes=None,
                   seed: int = 0, guidance_scale: float = 3.0, steps: int = 50,
                   grid_resolution: int = 64):
        """Resample slots in `edit_set` under (optionally new) conditions while
        every other slot is pinned to its stored clean latents."""
        n = len(originals)
        edit_set = sorted(set(int(i) for i in edit_set))
        if not edit_set:
            raise ParameterError("edit_set must be nonempty")
        if edit_set[0] < 0 or edit_set[-1] >= n:
            raise ParameterError(f"edit_set indices must lie in 0..{n - 1}")
        if not 1 <= n <= MAX_PARTS:
            raise ParameterError(f"edit pass needs 1..{MAX_PARTS} slots")
        boxes = [g.box for g in originals]
        captions = [g.caption for g in originals]
        for j, idx in enumerate(edit_set):
            if new_boxes is not None and new_boxes[j] is not None:
                boxes[idx] = new_boxes[j]
            if new_captions is not None and new_captions[j] is not None:
                captions[idx] = np.asarray(new_captions[j])
        free = [i in edit_set for i in range(n)]
        clean_g = [None if free[i] else originals[i].geom_tokens / self.scales.geom
                   for i in range(n)]
        clean_i = [None if free[i] else originals[i].image_tokens / self.scales.image
                   for i in range(n)]
        geom, image = self._reverse_loop(boxes, captions, clean_g, clean_i, free,
                                         seed, guidance_scale, steps)
        out = []
        for i in range(n):
            if free[i]:
                out.append(self._decode_part(geom[i], image[i], boxes[i], captions[i],
                                             grid_resolution))
            else:
                out.append(originals[i])  # pinned: clean latents, already decoded
        return out

    def extend_sequence(self, fixed, new_boxes, new_captions, seed: int = 0,
                        guidance_scale: float = 3.0, steps: int = 50,
                        grid_resolution: int = 64):
        """Generate beyond one pass's slot budget by pinning previous parts.

        Each pass packs as many new parts as fit, filling remaining slots
        (at most 7) with the nearest previously-generated parts by box
        center. Returns fixed + new parts; fixed parts are returned as-is.
        """
        new_boxes = list(new_boxes)
        new_captions = [np.asarray(c) for c in new_captions]
        if len(new_boxes) != len(new_captions):
            raise ParameterError("new boxes and captions must have equal length")
        if not new_boxes:
            return list(fixed)
        result = list(fixed)
        cursor = 0
        pass_idx = 0
        while cursor < len(new_boxes):
            budget = MAX_PARTS - (1 if result else 0)
            n_new = min(len(new_boxes) - cursor, budget)
            batch_boxes = new_boxes[cursor:cursor + n_new]
            batch_caps = new_captions[cursor:cursor + n_new]
            window = min(len(result), MAX_PARTS - n_new)
            if result and window == 0:
                raise ParameterError("window infeasible: no context slot available")
            if window:
                centroid = np.mean([b.center for b in batch_boxes], axis=0)
                dist = [float(np.linalg.norm(g.box.center - centroid)) for g in result]
                ctx_idx = list(np.argsort(dist)[:window])
            else:
                ctx_idx = []
            context = [result[i] for i in ctx_idx]
            free = [False] * len(context) + [True] * n_new
            boxes = [g.box for g in context] + batch_boxes
            captions = [g.caption for g in context] + batch_caps
            clean_g = [g.geom_tokens / self.scales.geom for g in context] + [None] * n_new
            clean_i = [g.image_tokens / self.scales.image for g in context] + [None] * n_new
            geom, image = self._reverse_loop(boxes, captions, clean_g, clean_i, free,
                                             seed=int(seed) + pass_idx,
                                             guidance_scale=guidance_scale, steps=steps)
            for j in range(n_new):
                k = len(context) + j
                result.append(self._decode_part(geom[k], image[k], boxes[k], captions[k],
                                                grid_resolution))
            cursor += n_new
            pass_idx += 1
        return result


def _ancestral_step(x, eps, t, t_prev, alpha_bar, gen):
    ab_t = float(alpha_bar[t])
    ab_prev = float(alpha_bar[t_prev])
    alpha_eff = ab_t / ab_prev
    beta_eff = 1.0 - alpha_eff
    x0 = (x - np.sqrt(1.0 - ab_t) * eps) / np.sqrt(ab_t)
    x0 = x0.clamp(-X0_CLIP, X0_CLIP)
    coef_x0 = np.sqrt(ab_prev) * beta_eff / (1.0 - ab_t)
    coef_xt = np.sqrt(alpha_eff) * (1.0 - ab_prev) / (1.0 - ab_t)
    mean = coef_x0 * x0 + coef_xt * x
    var = beta_eff * (1.0 - ab_prev) / (1.0 - ab_t)
    if var > 0 and t_prev > 0:
        return mean + np.sqrt(var) * torch.randn(x.shape, generator=gen)
    return mean


# ------------------------------------------------------------ persistence --

def save_generated_parts(parts, directory, extra_meta=None) -> Path:
    """Write meshes, views, latents, and an index for a list of GeneratedPart."""
    from .manifest import write_ply, write_views

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index = []
    for i, part in enumerate(parts):
        tag = f"gen_{i:02d}"
        write_ply(part.mesh, directory / f"{tag}.ply")
        write_views(part.views, directory, tag)
        np.savez(directory / f"{tag}_latents.npz",
                 geom_tokens=part.geom_tokens.numpy(),
                 image_tokens=part.image_tokens.numpy())
        index.append({
            "tag": tag,
            "box": {"center": part.box.center.tolist(),
                    "half_extents": part.box.half_extents.tolist()},
            "caption": np.asarray(part.caption).tolist(),
        })
    doc = {"format_version": 1, "parts": index, "meta": extra_meta or {}}
    path = directory / "parts.json"
    path.write_text(json.dumps(doc, indent=1, sort_keys=True))
    return path


def load_generated_parts(directory, num_views: int):
    from .errors import ManifestIOError, VersionError
    from .manifest import read_ply, read_views

    directory = Path(directory)
    path = directory / "parts.json"
    if not path.exists():
        raise ManifestIOError("missing generated-parts index", path=str(path))
    doc = json.loads(path.read_text())
    if doc.get("format_version") != 1:
        raise VersionError(f"generated-parts format {doc.get('format_version')!r}")
    parts = []
    for entry in doc["parts"]:
        tag = entry["tag"]
        lat_path = directory / f"{tag}_latents.npz"
        if not lat_path.exists():
            raise ManifestIOError("missing latents", path=str(lat_path))
        with np.load(lat_path) as z:
            geom_tokens = torch.from_numpy(z["geom_tokens"])
            image_tokens = torch.from_numpy(z["image_tokens"])
        parts.append(GeneratedPart(
            mesh=read_ply(directory / f"{tag}.ply"),
            views=read_views(directory, tag, num_views),
            geom_tokens=geom_tokens,
            image_tokens=image_tokens,
            box=BoundingBox3D(np.asarray(entry["box"]["center"]),
                              np.asarray(entry["box"]["half_extents"])),
            caption=np.asarray(entry["caption"], dtype=np.int64),
        ))
    return parts, doc.get("meta", {})
