"""Training loops: 3D part VAE, 2D image VAE, and the joint diffusion.

All loops are single-threaded, seeded, and log JSONL records (step, loss
components, wall time). A NaN loss aborts with a diagnostic dump of the
step state. Diffusion trains on precomputed, variance-normalized VAE-mean
latents; parts are canonically ordered by box center (lexicographic) so
batches are reproducible, which is harmless under slot equivariance.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, asdict, field
from pathlib import Path

import numpy as np
import torch

from .boxes import encode_boxes, wireframe_latents
from .checkpoint import (
    load_checkpoint,
    load_state_dict_from_arrays,
    save_checkpoint,
    state_dict_to_arrays,
)
from .dataset import ObjectRecord, global_surface_samples
from .denoiser import DenoiserConfig, DenoiserState, DualDenoiser, diffusion_loss
from .errors import NumericError, ParameterError
from .geometry import specs_inside
from .rendering import CameraRig, render_wireframes
from .schedule import NoiseSchedule, add_noise, build_schedule
from .vae2d import ImageVae, Vae2dConfig, vae2d_loss
from .vae3d import GeomVae, Vae3dConfig, vae3d_loss

QUERY_DOMAIN_UNIFORM = 1.1
NEAR_SURFACE_SIGMA = 0.05


@dataclass(frozen=True)
class VaeTrainConfig:
    steps: int = 2000
    batch_size: int = 8
    lr: float = 1e-3
    seed: int = 0
    num_queries: int = 512
    log_every: int = 25

    def to_json(self):
        return asdict(self)


@dataclass(frozen=True)
class DiffusionTrainConfig:
    steps: int = 4000
    lr: float = 4e-4
    seed: int = 0
    t_max: int = 1000
    schedule: str = "cosine"
    p_drop: float = 0.1
    lambda_global: float = 1.0
    pad_to: int = 0          # pad each object to this many part slots (0 = no padding)
    log_every: int = 25
    checkpoint_every: int = 1000

    def to_json(self):
        return asdict(self)


class TrainLog:
    def __init__(self, path=None):
        self.path = Path(path) if path else None
        self.records = []
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "a")
        else:
            self._fh = None

    def write(self, **record):
        self.records.append(record)
        if self._fh:
            self._fh.write(json.dumps(record) + "\n")
            self._fh.flush()

    def close(self):
        if self._fh:
            self._fh.close()


def _nan_abort(log_path, context):
    dump = Path(str(log_path) + ".nan_dump.json") if log_path else None
    if dump:
        dump.write_text(json.dumps(context, indent=1, default=str))
    raise NumericError(f"NaN loss at step {context.get('step')} "
                       f"(diagnostic dump: {dump})")


# ------------------------------------------------------------ 3D VAE -------

def occupancy_query_batch(points, source_specs, num_queries, rng):
    """Half uniform over the query domain, half near-surface; analytic labels."""
    n_uni = num_queries // 2
    n_near = num_queries - n_uni
    uni = rng.uniform(-QUERY_DOMAIN_UNIFORM, QUERY_DOMAIN_UNIFORM, size=(n_uni, 3))
    idx = rng.integers(0, len(points), size=n_near)
    near = points[idx] + rng.normal(0.0, NEAR_SURFACE_SIGMA, size=(n_near, 3))
    near = np.clip(near, -1.2, 1.2)
    queries = np.concatenate([uni, near]).astype(np.float32)
    labels = specs_inside(source_specs, queries).astype(np.float32)
    return queries, labels


def vae3d_training_items(objects):
    """Parts plus one union item per object; each item is (P, Q, specs)."""
    items = []
    for obj in objects:
        for part in obj.parts:
            items.append((part.points, part.normals, [part.source]))
        gp, gq = global_surface_samples(obj)
        items.append((gp, gq, [p.source for p in obj.parts]))
    return items


def train_vae3d(objects, model_cfg: Vae3dConfig, train_cfg: VaeTrainConfig,
                log_path=None) -> tuple[GeomVae, list]:
    torch.manual_seed(train_cfg.seed)
    model = GeomVae(model_cfg)
    opt = torch.optim.Adam(model.parameters(), lr=train_cfg.lr)
    rng = np.random.default_rng(train_cfg.seed)
    items = vae3d_training_items(objects)
    log = TrainLog(log_path)
    t0 = time.time()
    for step in range(train_cfg.steps):
        idx = rng.integers(0, len(items), size=train_cfg.batch_size)
        P = torch.stack([torch.from_numpy(items[i][0]) for i in idx])
        Q = torch.stack([torch.from_numpy(items[i][1]) for i in idx])
        qs, ls = zip(*(occupancy_query_batch(items[i][0], items[i][2],
                                             train_cfg.num_queries, rng) for i in idx))
        queries = torch.from_numpy(np.stack(qs))
        labels = torch.from_numpy(np.stack(ls))
        out = model.encode(P, Q, sample_seed=train_cfg.seed * 1_000_003 + step)
        total, comps = vae3d_loss(model, out, queries, labels)
        if not torch.isfinite(total):
            _nan_abort(log_path, {"step": step, "items": idx.tolist(),
                                  "components": {k: float(v.detach()) for k, v in comps.items()}})
        opt.zero_grad()
        total.backward()
        opt.step()
        if step % train_cfg.log_every == 0 or step == train_cfg.steps - 1:
            log.write(step=step, total=total.item(), bce=comps["bce"].item(),
                      kl=comps["kl"].item(), wall=time.time() - t0)
    log.close()
    model.eval()
    return model, log.records


# ------------------------------------------------------------ 2D VAE -------

def vae2d_training_images(objects, rig: CameraRig):
    """All part views, global views, and per-object wireframe views."""
    imgs = []
    for obj in objects:
        for part in obj.parts:
            imgs.append(part.views)
        imgs.append(obj.global_views)
        imgs.append(render_wireframes([p.box for p in obj.parts], rig))
    return np.concatenate(imgs, axis=0)


def train_vae2d(images, model_cfg: Vae2dConfig, train_cfg: VaeTrainConfig,
                log_path=None) -> tuple[ImageVae, list]:
    """images: (M, H, W, C) float32 stack."""
    torch.manual_seed(train_cfg.seed)
    model = ImageVae(model_cfg)
    opt = torch.optim.Adam(model.parameters(), lr=train_cfg.lr)
    rng = np.random.default_rng(train_cfg.seed)
    log = TrainLog(log_path)
    t0 = time.time()
    for step in range(train_cfg.steps):
        idx = rng.integers(0, len(images), size=train_cfg.batch_size)
        batch = torch.from_numpy(images[idx])
        out = model.encode(batch, sample_seed=train_cfg.seed * 1_000_003 + step)
        total, comps = vae2d_loss(model, out, batch)
        if not torch.isfinite(total):
            _nan_abort(log_path, {"step": step, "items": idx.tolist(),
                                  "components": {k: float(v.detach()) for k, v in comps.items()}})
        opt.zero_grad()
        total.backward()
        opt.step()
        if step % train_cfg.log_every == 0 or step == train_cfg.steps - 1:
            log.write(step=step, total=total.item(), rec=comps["rec"].item(),
                      kl=comps["kl"].item(), wall=time.time() - t0)
    log.close()
    model.eval()
    return model, log.records


# ------------------------------------------------- latent precomputation ---

@dataclass
class ObjectLatents:
    """Frozen VAE-mean latents for one object, parts in canonical box order."""

    object_id: str
    geom: torch.Tensor          # (n, T3, D3)
    image: torch.Tensor         # (n, v, T2, D2)
    box_latents: torch.Tensor   # (n, T3, D3)
    captions: torch.Tensor      # (n, L)
    boxes: list                 # BoundingBox3D, canonical order
    global_geom: torch.Tensor
    global_image: torch.Tensor
    global_caption: torch.Tensor
    wire: torch.Tensor          # (v, T2, D2)


def canonical_part_order(boxes) -> list:
    """Sort by box center lexicographically (z, y, x ascending via lexsort)."""
    centers = np.array([b.center for b in boxes])
    return list(np.lexsort((centers[:, 2], centers[:, 1], centers[:, 0])))


@dataclass
class LatentScales:
    geom: float
    image: float

    def to_json(self):
        return {"geom": self.geom, "image": self.image}


def precompute_latents(objects, vae3d: GeomVae, vae2d: ImageVae, rig: CameraRig,
                       normalize: bool = True):
    """Encode every object once; returns (list[ObjectLatents], LatentScales).

    Latents are divided by the dataset-wide standard deviation per modality
    so the diffusion operates on roughly unit-variance data; box and wire
    latents share their modality's scale.
    """
    raw = []
    with torch.no_grad():
        for obj in objects:
            order = canonical_part_order([p.box for p in obj.parts])
            parts = [obj.parts[i] for i in order]
            geom = torch.stack([vae3d.encode(p.points, p.normals).mean for p in parts])
            image = torch.stack([vae2d.encode(p.views).mean for p in parts])
            boxes = [p.box for p in parts]
            box_lat = encode_boxes(boxes, vae3d)
            captions = torch.stack([torch.from_numpy(p.caption) for p in parts])
            gp, gq = global_surface_samples(obj)
            g_geom = vae3d.encode(gp, gq).mean
            g_image = vae2d.encode(obj.global_views).mean
            wire = wireframe_latents(boxes, vae2d, rig)
            raw.append(ObjectLatents(
                object_id=obj.object_id, geom=geom, image=image, box_latents=box_lat,
                captions=captions, boxes=boxes, global_geom=g_geom, global_image=g_image,
                global_caption=torch.from_numpy(obj.global_caption), wire=wire,
            ))
    if normalize:
        g_std = torch.cat([torch.cat([ol.geom.flatten(), ol.global_geom.flatten()])
                           for ol in raw]).std().item()
        i_std = torch.cat([torch.cat([ol.image.flatten(), ol.global_image.flatten()])
                           for ol in raw]).std().item()
    else:
        g_std = i_std = 1.0
    scales = LatentScales(geom=float(g_std), image=float(i_std))
    for ol in raw:
        ol.geom /= scales.geom
        ol.box_latents /= scales.geom
        ol.global_geom /= scales.geom
        ol.image /= scales.image
        ol.global_image /= scales.image
        ol.wire /= scales.image
    return raw, scales


# ---------------------------------------------------------- diffusion ------

def save_vae_checkpoint(path, model, kind: str, train_cfg: VaeTrainConfig | None = None):
    extra = {"train_cfg": train_cfg.to_json()} if train_cfg else {}
    save_checkpoint(path, kind=kind, config=model.cfg.to_json(),
                    arrays=state_dict_to_arrays(model), extra=extra)


def load_vae3d_checkpoint(path, expect_cfg: Vae3dConfig | None = None) -> GeomVae:
    config, arrays, _ = load_checkpoint(
        path, kind="vae3d", expect_config=expect_cfg.to_json() if expect_cfg else None)
    model = GeomVae(Vae3dConfig(**config))
    load_state_dict_from_arrays(model, arrays)
    model.eval()
    return model


def load_vae2d_checkpoint(path, expect_cfg: Vae2dConfig | None = None) -> ImageVae:
    config, arrays, _ = load_checkpoint(
        path, kind="vae2d", expect_config=expect_cfg.to_json() if expect_cfg else None)
    model = ImageVae(Vae2dConfig(**config))
    load_state_dict_from_arrays(model, arrays)
    model.eval()
    return model


def _adam_state_arrays(opt: torch.optim.Adam, params):
    arrays = {}
    for i, p in enumerate(params):
        st = opt.state.get(p)
        if not st:
            continue
        arrays[f"opt.{i}.exp_avg"] = st["exp_avg"].numpy()
        arrays[f"opt.{i}.exp_avg_sq"] = st["exp_avg_sq"].numpy()
        arrays[f"opt.{i}.step"] = np.asarray(
            st["step"].item() if torch.is_tensor(st["step"]) else st["step"], dtype=np.float64)
    return arrays


def _restore_adam_state(opt: torch.optim.Adam, params, arrays):
    for i, p in enumerate(params):
        key = f"opt.{i}.exp_avg"
        if key not in arrays:
            continue
        opt.state[p] = {
            "step": torch.tensor(float(arrays[f"opt.{i}.step"])),
            "exp_avg": torch.from_numpy(np.array(arrays[f"opt.{i}.exp_avg"])),
            "exp_avg_sq": torch.from_numpy(np.array(arrays[f"opt.{i}.exp_avg_sq"])),
        }


def save_diffusion_checkpoint(path, model: DualDenoiser, scales: LatentScales,
                              opt=None, step=None, rng_state=None, train_cfg=None):
    arrays = state_dict_to_arrays(model)
    extra = {"scales": scales.to_json()}
    if step is not None:
        extra["step"] = int(step)
    if train_cfg is not None:
        extra["train_cfg"] = train_cfg.to_json()
    if opt is not None:
        arrays.update(_adam_state_arrays(opt, list(model.parameters())))
    if rng_state is not None:
        arrays["torch_rng_state"] = rng_state.numpy()
    save_checkpoint(path, kind="diffusion", config=model.cfg.to_json(), arrays=arrays, extra=extra)


def load_diffusion_checkpoint(path, expect_cfg: DenoiserConfig | None = None):
    config, arrays, extra = load_checkpoint(
        path, kind="diffusion",
        expect_config=expect_cfg.to_json() if expect_cfg else None)
    cfg = DenoiserConfig.from_json(config)
    model = DualDenoiser(cfg)
    model_arrays = {k: v for k, v in arrays.items()
                    if not k.startswith("opt.") and k != "torch_rng_state"}
    load_state_dict_from_arrays(model, model_arrays)
    model.eval()
    scales = LatentScales(**extra["scales"])
    return model, scales, arrays, extra


def build_training_state(ol: ObjectLatents, t: int, eps3, eps2, eps_g3, eps_g2,
                         schedule: NoiseSchedule, select_idx=None, pad_to: int = 0):
    """Noise one object's latents into a DenoiserState (with optional padding)."""
    geom, image = ol.geom, ol.image
    box, captions = ol.box_latents, ol.captions
    if select_idx is not None:
        geom, image = geom[select_idx], image[select_idx]
        box, captions = box[select_idx], captions[select_idx]
    n = geom.shape[0]
    noisy_geom = add_noise(geom, t, eps3, schedule)
    noisy_image = add_noise(image, t, eps2, schedule)
    noisy_g3 = add_noise(ol.global_geom, t, eps_g3, schedule)
    noisy_g2 = add_noise(ol.global_image, t, eps_g2, schedule)
    mask = torch.ones(n, dtype=torch.bool)
    if pad_to and n < pad_to:
        pad = pad_to - n
        noisy_geom = torch.cat([noisy_geom, torch.zeros(pad, *noisy_geom.shape[1:])])
        noisy_image = torch.cat([noisy_image, torch.zeros(pad, *noisy_image.shape[1:])])
        box = torch.cat([box, torch.zeros(pad, *box.shape[1:])])
        captions = torch.cat([captions, torch.zeros(pad, captions.shape[1], dtype=torch.long)])
        mask = torch.cat([mask, torch.zeros(pad, dtype=torch.bool)])
    return DenoiserState(
        geom=noisy_geom, image=noisy_image, part_mask=mask, box_latents=box,
        captions=captions, global_geom=noisy_g3, global_image=noisy_g2,
        global_caption=ol.global_caption, t=t,
    )


def train_diffusion(latents, model_cfg: DenoiserConfig, train_cfg: DiffusionTrainConfig,
                    scales: LatentScales, log_path=None, checkpoint_path=None,
                    resume_from=None) -> tuple[DualDenoiser, list]:
    """Joint denoiser training over precomputed object latents."""
    if train_cfg.pad_to and train_cfg.pad_to > 8:
        raise ParameterError("pad_to must be <= 8")
    schedule = build_schedule(train_cfg.schedule, train_cfg.t_max)
    torch.manual_seed(train_cfg.seed)
    start_step = 0
    if resume_from is not None:
        model, _, arrays, extra = load_diffusion_checkpoint(resume_from, expect_cfg=model_cfg)
        model.train()
        opt = torch.optim.Adam(model.parameters(), lr=train_cfg.lr)
        _restore_adam_state(opt, list(model.parameters()), arrays)
        if "torch_rng_state" in arrays:
            torch.set_rng_state(torch.from_numpy(np.array(arrays["torch_rng_state"])))
        start_step = int(extra.get("step", 0))
    else:
        model = DualDenoiser(model_cfg)
        opt = torch.optim.Adam(model.parameters(), lr=train_cfg.lr)
    rng = np.random.default_rng([train_cfg.seed, 0xD1FF])
    log = TrainLog(log_path)
    t0 = time.time()
    for step in range(start_step, train_cfg.steps):
        ol = latents[rng.integers(0, len(latents))]
        n = ol.geom.shape[0]
        select = None
        if n > 8:
            select = np.sort(rng.choice(n, size=8, replace=False))
        t = int(rng.integers(1, train_cfg.t_max + 1))
        n_eff = len(select) if select is not None else n
        eps3 = torch.randn(n_eff, *ol.geom.shape[1:])
        eps2 = torch.randn(n_eff, *ol.image.shape[1:])
        eps_g3 = torch.randn(*ol.global_geom.shape)
        eps_g2 = torch.randn(*ol.global_image.shape)
        state = build_training_state(ol, t, eps3, eps2, eps_g3, eps_g2, schedule,
                                     select_idx=select, pad_to=train_cfg.pad_to)
        drop = bool(rng.random() < train_cfg.p_drop)
        pred = model(state, wire_latents=ol.wire, drop_cond=drop)
        pad = state.part_mask.shape[0] - n_eff
        if pad:
            eps3 = torch.cat([eps3, torch.zeros(pad, *eps3.shape[1:])])
            eps2 = torch.cat([eps2, torch.zeros(pad, *eps2.shape[1:])])
        total, comps = diffusion_loss(pred, eps3, eps2, eps_g3, eps_g2,
                                      state.part_mask, train_cfg.lambda_global)
        if not torch.isfinite(total):
            _nan_abort(log_path, {
                "step": step, "object_id": ol.object_id, "t": t, "dropped": drop,
                "components": {k: float(v.detach()) for k, v in comps.items()},
                "geom_norm": float(state.geom.norm()), "image_norm": float(state.image.norm()),
            })
        opt.zero_grad()
        total.backward()
        opt.step()
        if step % train_cfg.log_every == 0 or step == train_cfg.steps - 1:
            log.write(step=step, total=total.item(),
                      loss_3d=comps["loss_3d"].item(), loss_2d=comps["loss_2d"].item(),
                      global_3d=comps["global_3d"].item(), global_2d=comps["global_2d"].item(),
                      wall=time.time() - t0)
        if checkpoint_path and train_cfg.checkpoint_every and \
                (step + 1) % train_cfg.checkpoint_every == 0:
            save_diffusion_checkpoint(checkpoint_path, model, scales, opt=opt,
                                      step=step + 1, rng_state=torch.get_rng_state(),
                                      train_cfg=train_cfg)
    if checkpoint_path:
        save_diffusion_checkpoint(checkpoint_path, model, scales, opt=opt,
                                  step=train_cfg.steps, rng_state=torch.get_rng_state(),
                                  train_cfg=train_cfg)
    log.close()
    model.eval()
    return model, log.records
