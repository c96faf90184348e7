"""Command-line entry points.

Every command takes --config (a fully explicit JSON experiment file) and
writes its outputs plus a run record under the run directory. Exit codes:
0 success, 2 config/usage error, 3 missing-artifact (state) error,
4 numeric error.
"""

from __future__ import annotations

import dataclasses
import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from .assembly import assemble as assemble_parts
from .assembly import normalize_part, refine_part
from .boxes import parse_box_entry
from .config import ExperimentConfig
from .errors import (
    ConfigError,
    GeometryError,
    ManifestIOError,
    NumericError,
    ParameterError,
    PartforgeError,
    StateError,
    VersionError,
)
from .manifest import write_ply
from .pipeline import (
    load_sampler,
    run_dir,
    stage_eval,
    stage_gen_data,
    stage_train_diffusion,
    stage_train_vae2d,
    stage_train_vae3d,
    write_run_record,
)
from .sampler import SampleRequest, load_generated_parts, save_generated_parts
from .voxelize import voxelize

_EXIT_CODES = (
    (ConfigError, 2),
    (ParameterError, 2),
    (GeometryError, 2),
    (StateError, 3),
    (ManifestIOError, 3),
    (VersionError, 3),
    (NumericError, 4),
)


def _run(fn):
    try:
        fn()
    except PartforgeError as exc:
        for cls, code in _EXIT_CODES:
            if isinstance(exc, cls):
                if isinstance(exc, ConfigError):
                    for v in exc.violations:
                        click.echo(f"config error: {v}", err=True)
                else:
                    click.echo(f"error: {exc}", err=True)
                sys.exit(code)
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


def _load_config(config_path, seed):
    cfg = ExperimentConfig.load(config_path)
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=int(seed))
    return cfg


def common_options(fn):
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(), help="experiment config JSON")(fn)
    fn = click.option("--out", "out_override", default=None,
                      type=click.Path(), help="override the run directory")(fn)
    fn = click.option("--seed", default=None, type=int, help="override the config seed")(fn)
    return fn


@click.group()
def main():
    """partforge: part-based 3D generation experiments."""


@main.command("gen-data")
@common_options
def cmd_gen_data(config_path, out_override, seed):
    def go():
        cfg = _load_config(config_path, seed)
        out = run_dir(cfg, out_override)
        path = stage_gen_data(cfg, out)
        click.echo(f"dataset written to {path}")
    _run(go)


@main.command("train-vae3d")
@common_options
def cmd_train_vae3d(config_path, out_override, seed):
    def go():
        cfg = _load_config(config_path, seed)
        path = stage_train_vae3d(cfg, run_dir(cfg, out_override))
        click.echo(f"part VAE checkpoint: {path}")
    _run(go)


@main.command("train-vae2d")
@common_options
def cmd_train_vae2d(config_path, out_override, seed):
    def go():
        cfg = _load_config(config_path, seed)
        path = stage_train_vae2d(cfg, run_dir(cfg, out_override))
        click.echo(f"image VAE checkpoint: {path}")
    _run(go)


@main.command("train-diffusion")
@common_options
@click.option("--resume", is_flag=True, help="resume from an existing checkpoint")
def cmd_train_diffusion(config_path, out_override, seed, resume):
    def go():
        cfg = _load_config(config_path, seed)
        path = stage_train_diffusion(cfg, run_dir(cfg, out_override), resume=resume)
        click.echo(f"diffusion checkpoint: {path}")
    _run(go)


def _request_from_file(cfg, path, seed_override):
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ManifestIOError("missing request file", path=str(path)) from exc
    except json.JSONDecodeError as exc:
        raise ParameterError(f"request file is not valid JSON: {exc}") from exc
    entries = doc.get("parts")
    if not isinstance(entries, list):
        raise ParameterError("request must contain a 'parts' list")
    boxes, captions = zip(*(parse_box_entry(e) for e in entries)) if entries else ((), ())
    seed = doc.get("seed", cfg.sampling.seed)
    if seed_override is not None:
        seed = int(seed_override)
    return doc, SampleRequest(
        boxes=list(boxes), captions=list(captions), seed=seed,
        guidance_scale=float(doc.get("guidance_scale", cfg.sampling.guidance_scale)),
        steps=int(doc.get("steps", cfg.sampling.steps)),
        grid_resolution=int(doc.get("grid_resolution", cfg.sampling.grid_resolution)),
    )


@main.command("sample")
@common_options
@click.option("--request", "request_path", required=True, type=click.Path(),
              help="JSON with a 'parts' list of {center, half_extents, caption}")
@click.option("--name", default="sample", help="output subdirectory under <out>/samples/")
def cmd_sample(config_path, out_override, seed, request_path, name):
    def go():
        cfg = _load_config(config_path, seed)
        out = run_dir(cfg, out_override)
        t0 = time.time()
        sampler = load_sampler(cfg, out)
        _, request = _request_from_file(cfg, request_path, seed)
        parts = sampler.sample_parts(request)
        dest = out / "samples" / name
        save_generated_parts(parts, dest, extra_meta={"request": str(request_path),
                                                      "seed": request.seed})
        write_run_record(out, "sample", cfg, t0, {"parts": len(parts), "dest": str(dest)})
        click.echo(f"wrote {len(parts)} parts to {dest}")
    _run(go)


@main.command("edit")
@common_options
@click.option("--request", "request_path", required=True, type=click.Path(),
              help="JSON with 'edit_set' plus a 'parts' list of new conditions")
@click.option("--parts", "parts_dir", required=True, type=click.Path(),
              help="directory of previously generated parts")
@click.option("--name", default="edit", help="output subdirectory under <out>/samples/")
def cmd_edit(config_path, out_override, seed, request_path, parts_dir, name):
    def go():
        cfg = _load_config(config_path, seed)
        out = run_dir(cfg, out_override)
        t0 = time.time()
        sampler = load_sampler(cfg, out)
        doc, request = _request_from_file(cfg, request_path, seed)
        edit_set = doc.get("edit_set")
        if not isinstance(edit_set, list) or not edit_set:
            raise ParameterError("edit request must contain a nonempty 'edit_set' list")
        originals, _ = load_generated_parts(parts_dir, cfg.dataset.rig.num_views)
        parts = sampler.edit_parts(
            originals, edit_set,
            new_captions=list(request.captions) or None,
            new_boxes=list(request.boxes) or None,
            seed=request.seed, guidance_scale=request.guidance_scale,
            steps=request.steps, grid_resolution=request.grid_resolution)
        dest = out / "samples" / name
        save_generated_parts(parts, dest, extra_meta={"edit_set": edit_set})
        write_run_record(out, "edit", cfg, t0, {"edited": edit_set, "dest": str(dest)})
        click.echo(f"wrote {len(parts)} parts to {dest}")
    _run(go)


@main.command("extend")
@common_options
@click.option("--request", "request_path", required=True, type=click.Path(),
              help="JSON with a 'parts' list of new box conditions")
@click.option("--parts", "parts_dir", required=True, type=click.Path(),
              help="directory of previously generated (fixed) parts")
@click.option("--name", default="extend", help="output subdirectory under <out>/samples/")
def cmd_extend(config_path, out_override, seed, request_path, parts_dir, name):
    def go():
        cfg = _load_config(config_path, seed)
        out = run_dir(cfg, out_override)
        t0 = time.time()
        sampler = load_sampler(cfg, out)
        _, request = _request_from_file(cfg, request_path, seed)
        fixed, _ = load_generated_parts(parts_dir, cfg.dataset.rig.num_views)
        parts = sampler.extend_sequence(
            fixed, list(request.boxes), list(request.captions),
            seed=request.seed, guidance_scale=request.guidance_scale,
            steps=request.steps, grid_resolution=request.grid_resolution)
        dest = out / "samples" / name
        save_generated_parts(parts, dest, extra_meta={"extended_by": len(request.boxes)})
        write_run_record(out, "extend", cfg, t0, {"total": len(parts), "dest": str(dest)})
        click.echo(f"wrote {len(parts)} parts to {dest}")
    _run(go)


@main.command("assemble")
@common_options
@click.option("--parts", "parts_dir", required=True, type=click.Path(),
              help="directory of generated parts to refine and assemble")
@click.option("--name", default="scene", help="output subdirectory under <out>/")
def cmd_assemble(config_path, out_override, seed, parts_dir, name):
    def go():
        cfg = _load_config(config_path, seed)
        out = run_dir(cfg, out_override)
        t0 = time.time()
        parts, _ = load_generated_parts(parts_dir, cfg.dataset.rig.num_views)
        refined, transforms = [], []
        for part in parts:
            normalized, transform = normalize_part(part.mesh)
            voxels = voxelize(normalized, cfg.sampling.grid_resolution)
            refined.append(refine_part(part.views, voxels))
            transforms.append(transform)
        scene, clipping = assemble_parts(refined, transforms,
                                         resolution=cfg.eval.clipping_resolution,
                                         threshold=cfg.eval.clipping_threshold)
        dest = out / name
        dest.mkdir(parents=True, exist_ok=True)
        write_ply(scene, dest / "scene.ply")
        doc = {
            "parts": [{"transform": t.to_json(),
                       "box": {"center": p.box.center.tolist(),
                               "half_extents": p.box.half_extents.tolist()}}
                      for t, p in zip(transforms, parts)],
            "clipping": [c.to_json() for c in clipping],
        }
        (dest / "assembly.json").write_text(json.dumps(doc, indent=1, sort_keys=True))
        write_run_record(out, "assemble", cfg, t0,
                         {"parts": len(parts), "clipping_pairs": len(clipping)})
        click.echo(f"scene with {len(parts)} parts -> {dest} "
                   f"({len(clipping)} clipping pairs)")
    _run(go)


@main.command("eval")
@common_options
def cmd_eval(config_path, out_override, seed):
    def go():
        cfg = _load_config(config_path, seed)
        report = stage_eval(cfg, run_dir(cfg, out_override))
        click.echo(json.dumps({k: v for k, v in report.to_json().items()
                               if k != "per_object"}, indent=1, sort_keys=True))
    _run(go)


if __name__ == "__main__":
    main()
