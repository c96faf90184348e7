"""One flat, fully explicit experiment configuration.

Every hyperparameter appears in the document; loading rejects unknown keys
and reports all violations at once rather than stopping at the first.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path

from .denoiser import DenoiserConfig
from .errors import ConfigError
from .evaluation import EvalSettings
from .rendering import CameraRig
from .training import DiffusionTrainConfig, VaeTrainConfig
from .vae2d import Vae2dConfig
from .vae3d import Vae3dConfig


@dataclass(frozen=True)
class DatasetConfig:
    num_objects: int = 200
    part_count_min: int = 2
    part_count_max: int = 5
    seed_offset: int = 0
    num_surface_samples: int = 4096
    rig: CameraRig = field(default_factory=CameraRig)


@dataclass(frozen=True)
class SamplingConfig:
    guidance_scale: float = 3.0
    steps: int = 60
    grid_resolution: int = 64
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    out_dir: str = "runs/exp"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    vae3d_model: Vae3dConfig = field(default_factory=Vae3dConfig)
    vae3d_train: VaeTrainConfig = field(default_factory=VaeTrainConfig)
    vae2d_model: Vae2dConfig = field(default_factory=Vae2dConfig)
    vae2d_train: VaeTrainConfig = field(default_factory=VaeTrainConfig)
    diffusion_model: DenoiserConfig = field(default_factory=DenoiserConfig)
    diffusion_train: DiffusionTrainConfig = field(default_factory=DiffusionTrainConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    eval: EvalSettings = field(default_factory=EvalSettings)

    def to_json(self):
        return _to_jsonable(self)

    def hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()[:16]

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True))

    @staticmethod
    def from_json(doc) -> "ExperimentConfig":
        violations = []
        cfg = _build_dataclass(ExperimentConfig, doc, "", violations)
        if violations:
            raise ConfigError(violations)
        return cfg

    @staticmethod
    def load(path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError([f"config file not found: {path}"])
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError([f"config is not valid JSON: {exc}"]) from exc
        return ExperimentConfig.from_json(doc)


def _to_jsonable(obj):
    if is_dataclass(obj):
        return {f.name: _to_jsonable(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, tuple):
        return [_to_jsonable(v) for v in obj]
    return obj


def _build_dataclass(cls, doc, path, violations):
    prefix = f"{path}." if path else ""
    if not isinstance(doc, dict):
        violations.append(f"{path or '<root>'}: expected an object")
        return None
    known = {f.name: f for f in fields(cls)}
    for key in doc:
        if key not in known:
            violations.append(f"{prefix}{key}: unknown key")
    kwargs = {}
    ok = True
    for name, f in known.items():
        if name not in doc:
            violations.append(f"{prefix}{name}: missing")
            ok = False
            continue
        value = _coerce(f.type, doc[name], f"{prefix}{name}", violations)
        if value is _INVALID:
            ok = False
        else:
            kwargs[name] = value
    return cls(**kwargs) if ok else None


_INVALID = object()

_DATACLASS_TYPES = {
    "DatasetConfig": DatasetConfig,
    "SamplingConfig": SamplingConfig,
    "CameraRig": CameraRig,
    "Vae3dConfig": Vae3dConfig,
    "Vae2dConfig": Vae2dConfig,
    "VaeTrainConfig": VaeTrainConfig,
    "DenoiserConfig": DenoiserConfig,
    "DiffusionTrainConfig": DiffusionTrainConfig,
    "EvalSettings": EvalSettings,
}


def _coerce(ftype, value, path, violations):
    if isinstance(ftype, str):
        ftype = _DATACLASS_TYPES.get(ftype, ftype)
        if ftype == "int":
            ftype = int
        elif ftype == "float":
            ftype = float
        elif ftype == "str":
            ftype = str
        elif ftype == "bool":
            ftype = bool
        elif ftype == "tuple":
            ftype = tuple
    if is_dataclass(ftype):
        return _build_dataclass(ftype, value, path, violations) or _INVALID
    if ftype is bool:
        if isinstance(value, bool):
            return value
        violations.append(f"{path}: expected bool, got {type(value).__name__}")
        return _INVALID
    if ftype is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        violations.append(f"{path}: expected int, got {type(value).__name__}")
        return _INVALID
    if ftype is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        violations.append(f"{path}: expected number, got {type(value).__name__}")
        return _INVALID
    if ftype is str:
        if isinstance(value, str):
            return value
        violations.append(f"{path}: expected string, got {type(value).__name__}")
        return _INVALID
    if ftype is tuple:
        if isinstance(value, (list, tuple)):
            return tuple(value)
        violations.append(f"{path}: expected list, got {type(value).__name__}")
        return _INVALID
    violations.append(f"{path}: unsupported field type {ftype!r}")
    return _INVALID
