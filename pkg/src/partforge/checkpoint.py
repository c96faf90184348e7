"""Versioned checkpoint container shared by all models.

An `.npz` archive holding a JSON header (format version, kind tag, config
echo) plus named float arrays. Loading refuses kind or config mismatches.
Writes are atomic (temp file + rename).
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np
import torch

from .errors import ManifestIOError, StateError, VersionError

CKPT_VERSION = 1


def save_checkpoint(path, kind: str, config: dict, arrays: dict, extra: dict | None = None):
    """arrays: name -> numpy array or torch tensor. extra: small JSON payload."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {}
    for name, arr in arrays.items():
        if isinstance(arr, torch.Tensor):
            arr = arr.detach().cpu().numpy()
        payload[name] = arr
    header = json.dumps({
        "ckpt_version": CKPT_VERSION,
        "kind": kind,
        "config": config,
        "extra": extra or {},
    })
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, __header__=np.frombuffer(header.encode(), dtype=np.uint8), **payload)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def load_checkpoint(path, kind: str, expect_config: dict | None = None):
    """Returns (config, arrays, extra); arrays as numpy. Validates kind/config."""
    path = Path(path)
    if not path.exists():
        raise StateError(f"checkpoint not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as z:
            header = json.loads(bytes(z["__header__"]).decode())
            arrays = {k: z[k] for k in z.files if k != "__header__"}
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        raise ManifestIOError(f"corrupt checkpoint ({exc})", path=str(path)) from exc
    if header.get("ckpt_version") != CKPT_VERSION:
        raise VersionError(f"checkpoint version {header.get('ckpt_version')!r}, supported {CKPT_VERSION}")
    if header.get("kind") != kind:
        raise StateError(f"checkpoint kind {header.get('kind')!r}, expected {kind!r}")
    if expect_config is not None and header["config"] != expect_config:
        diff = {k for k in set(header["config"]) | set(expect_config)
                if header["config"].get(k) != expect_config.get(k)}
        raise StateError(f"checkpoint config mismatch on keys {sorted(diff)}")
    return header["config"], arrays, header.get("extra", {})


def state_dict_to_arrays(module: torch.nn.Module) -> dict:
    return {k: v.detach().cpu().numpy() for k, v in module.state_dict().items()}


def load_state_dict_from_arrays(module: torch.nn.Module, arrays: dict):
    sd = module.state_dict()
    missing = set(sd) - set(arrays)
    extra = set(arrays) - set(sd)
    if missing or extra:
        raise StateError(f"parameter name mismatch (missing {sorted(missing)[:3]}, extra {sorted(extra)[:3]})")
    module.load_state_dict({k: torch.from_numpy(np.asarray(arrays[k])) for k in sd})
