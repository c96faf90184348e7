"""Experiment stages binding the modules into runnable steps.

Every stage consumes an ExperimentConfig, reads/writes a fixed layout under
the run directory, and leaves a machine-readable run record:

    <out>/dataset/              generated dataset
    <out>/vae3d.npz             part VAE checkpoint (+ vae3d_log.jsonl)
    <out>/vae2d.npz             image VAE checkpoint (+ vae2d_log.jsonl)
    <out>/diffusion.npz         denoiser checkpoint (+ diffusion_log.jsonl)
    <out>/samples/<name>/       generated parts
    <out>/eval_report.json      EvalReport
    <out>/records/<command>.json
"""

from __future__ import annotations

import json
import time
from pathlib import Path

from . import __version__
from .config import ExperimentConfig
from .dataset import generate_object
from .errors import StateError
from .evaluation import evaluate_generation
from .manifest import read_manifest, write_manifest
from .sampler import PartSampler
from .training import (
    load_diffusion_checkpoint,
    load_vae2d_checkpoint,
    load_vae3d_checkpoint,
    precompute_latents,
    save_vae_checkpoint,
    train_diffusion,
    train_vae2d,
    train_vae3d,
    vae2d_training_images,
    save_diffusion_checkpoint,
)


def run_dir(cfg: ExperimentConfig, out_override=None) -> Path:
    return Path(out_override) if out_override else Path(cfg.out_dir)


def write_run_record(out: Path, command: str, cfg: ExperimentConfig, t0: float, extra=None):
    rec_dir = out / "records"
    rec_dir.mkdir(parents=True, exist_ok=True)
    record = {
        "command": command,
        "config_hash": cfg.hash(),
        "version": f"partforge-{__version__}",
        "wall_time_s": round(time.time() - t0, 3),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "extra": extra or {},
    }
    (rec_dir / f"{command}.json").write_text(json.dumps(record, indent=1, sort_keys=True))
    return record


def stage_gen_data(cfg: ExperimentConfig, out: Path) -> Path:
    t0 = time.time()
    ds = cfg.dataset
    objects = [
        generate_object(ds.seed_offset + i, (ds.part_count_min, ds.part_count_max),
                        rig=ds.rig, num_surface_samples=ds.num_surface_samples)
        for i in range(ds.num_objects)
    ]
    dataset_dir = out / "dataset"
    write_manifest(objects, dataset_dir, ds.rig,
                   meta={"config_hash": cfg.hash(), "num_objects": ds.num_objects})
    write_run_record(out, "gen-data", cfg, t0, {"objects": len(objects)})
    return dataset_dir


def _load_dataset(cfg: ExperimentConfig, out: Path):
    dataset_dir = out / "dataset"
    if not (dataset_dir / "manifest.json").exists():
        raise StateError(f"dataset not found at {dataset_dir}; run gen-data first")
    return read_manifest(dataset_dir)


def stage_train_vae3d(cfg: ExperimentConfig, out: Path) -> Path:
    t0 = time.time()
    objects, _, _ = _load_dataset(cfg, out)
    model, _ = train_vae3d(objects, cfg.vae3d_model, cfg.vae3d_train,
                           log_path=out / "vae3d_log.jsonl")
    path = out / "vae3d.npz"
    save_vae_checkpoint(path, model, kind="vae3d", train_cfg=cfg.vae3d_train)
    write_run_record(out, "train-vae3d", cfg, t0, {"steps": cfg.vae3d_train.steps})
    return path


def stage_train_vae2d(cfg: ExperimentConfig, out: Path) -> Path:
    t0 = time.time()
    objects, rig, _ = _load_dataset(cfg, out)
    images = vae2d_training_images(objects, rig)
    model, _ = train_vae2d(images, cfg.vae2d_model, cfg.vae2d_train,
                           log_path=out / "vae2d_log.jsonl")
    path = out / "vae2d.npz"
    save_vae_checkpoint(path, model, kind="vae2d", train_cfg=cfg.vae2d_train)
    write_run_record(out, "train-vae2d", cfg, t0,
                     {"steps": cfg.vae2d_train.steps, "images": len(images)})
    return path


def load_frozen_vaes(cfg: ExperimentConfig, out: Path):
    vae3d_path = out / "vae3d.npz"
    vae2d_path = out / "vae2d.npz"
    if not vae3d_path.exists():
        raise StateError(f"missing part VAE checkpoint {vae3d_path}; run train-vae3d first")
    if not vae2d_path.exists():
        raise StateError(f"missing image VAE checkpoint {vae2d_path}; run train-vae2d first")
    vae3d = load_vae3d_checkpoint(vae3d_path, expect_cfg=cfg.vae3d_model)
    vae2d = load_vae2d_checkpoint(vae2d_path, expect_cfg=cfg.vae2d_model)
    return vae3d.frozen_clone(), vae2d.frozen_clone()


def stage_train_diffusion(cfg: ExperimentConfig, out: Path, resume: bool = False) -> Path:
    t0 = time.time()
    objects, rig, _ = _load_dataset(cfg, out)
    vae3d, vae2d = load_frozen_vaes(cfg, out)
    latents, scales = precompute_latents(objects, vae3d, vae2d, rig)
    path = out / "diffusion.npz"
    train_diffusion(
        latents, cfg.diffusion_model, cfg.diffusion_train, scales,
        log_path=out / "diffusion_log.jsonl", checkpoint_path=path,
        resume_from=path if resume and path.exists() else None)
    write_run_record(out, "train-diffusion", cfg, t0, {"steps": cfg.diffusion_train.steps})
    return path


def load_sampler(cfg: ExperimentConfig, out: Path) -> PartSampler:
    diff_path = out / "diffusion.npz"
    if not diff_path.exists():
        raise StateError(f"missing diffusion checkpoint {diff_path}; run train-diffusion first")
    vae3d, vae2d = load_frozen_vaes(cfg, out)
    model, scales, _, _ = load_diffusion_checkpoint(diff_path, expect_cfg=cfg.diffusion_model)
    return PartSampler(model, vae3d, vae2d, scales, cfg.dataset.rig)


def stage_eval(cfg: ExperimentConfig, out: Path):
    t0 = time.time()
    objects, _, _ = _load_dataset(cfg, out)
    sampler = load_sampler(cfg, out)
    report = evaluate_generation(sampler, objects, cfg.eval)
    (out / "eval_report.json").write_text(json.dumps(report.to_json(), indent=1, sort_keys=True))
    write_run_record(out, "eval", cfg, t0, {
        "mean_chamfer": report.mean_chamfer,
        "mean_containment": report.mean_containment,
        "clean_sample_fraction": report.clean_sample_fraction,
    })
    return report
