"""
Versioned checkpoint container

A checkpoint is a single `torch.save` archive holding

  format_version  - integer, checked on load
  kind            - vocoder | teacher | student
  preset          - the ModelPreset fields
  tensors         - named tensors, `<component>.<state dict key>`
  manifest        - the shape of every named tensor
  schedule        - T, offset and β (float64) of the noise schedule, if any
  stats           - mean/std feature normalisation, if any
  config          - the resolved run configuration
  metadata        - free-form scalars (losses, hashes, ...)

A JSON sidecar with the same stem summarises the archive for humans.
"""
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import torch
from monty.serialization import dumpfn

from fastvg.common import DataError, ShapeError
from fastvg.features import FeatureStats
from fastvg.networks import build, parameter_count, state_hash
from fastvg.networks.presets import ModelPreset
from fastvg.schedule import NoiseSchedule

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
KINDS = ("vocoder", "teacher", "student")

# Components stored by each kind of checkpoint
COMPONENTS = {
    "vocoder": ("vocoder",),
    "teacher": ("predictor", "speaker_encoder", "content_encoder"),
    "student": ("predictor", "speaker_encoder", "content_encoder", "discriminator"),
}


def _plain(value):
    """Numpy scalars to Python scalars, the archive is read back with weights_only"""
    return value.item() if hasattr(value, "item") and not isinstance(value, (list, dict)) else value


def _preset_from_dict(data):
    data = dict(data)
    data["upsample"] = tuple(int(u) for u in data["upsample"])
    data["resolutions"] = tuple(tuple(int(v) for v in r) for r in data["resolutions"])
    return ModelPreset(**data)


@dataclass
class Checkpoint:
    """Content of a loaded checkpoint"""

    kind: str
    preset: ModelPreset
    tensors: dict
    manifest: dict
    schedule: Optional[NoiseSchedule] = None
    stats: Optional[FeatureStats] = None
    config: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def components(self):
        return sorted({key.split(".", 1)[0] for key in self.tensors})

    def state_dict(self, component):
        prefix = component + "."
        state = {key[len(prefix) :]: value for key, value in self.tensors.items() if key.startswith(prefix)}
        if not state:
            raise DataError(f"Checkpoint of kind {self.kind} has no {component}")
        return state

    def module(self, component, **kwargs):
        """Build the network of `component` from the stored preset and load its weights"""
        module = build(component, self.preset, **kwargs)
        state = self.state_dict(component)
        expected = module.state_dict()
        if set(expected) != set(state):
            missing = sorted(set(expected) - set(state))
            extra = sorted(set(state) - set(expected))
            raise ShapeError(f"{component}: tensors do not match the architecture (missing {missing}, unexpected {extra})")
        for key, tensor in expected.items():
            if tuple(tensor.shape) != tuple(state[key].shape):
                raise ShapeError(f"{component}.{key}: shape {tuple(state[key].shape)} does not match {tuple(tensor.shape)}")
        module.load_state_dict(state, strict=True)
        return module


def save_checkpoint(path, kind, preset: ModelPreset, modules, schedule=None, stats=None, config=None, metadata=None):
    """
    Write a checkpoint archive (atomically) and its JSON sidecar.

    `modules` maps component names to torch modules.
    """
    if kind not in KINDS:
        raise DataError(f"Unknown checkpoint kind {kind}")
    path = Path(path)
    tensors = {}
    for name, module in modules.items():
        for key, tensor in module.state_dict().items():
            tensors[f"{name}.{key}"] = tensor.detach().cpu().clone()
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "preset": asdict(preset),
        "tensors": tensors,
        "manifest": {key: list(value.shape) for key, value in tensors.items()},
        "schedule": None,
        "stats": None,
        "config": dict(config or {}),
        "metadata": {key: _plain(value) for key, value in (metadata or {}).items()},
    }
    if schedule is not None:
        payload["schedule"] = {
            "T": schedule.T,
            "offset": schedule.offset,
            "beta": torch.as_tensor(schedule.beta, dtype=torch.float64),
        }
    if stats is not None:
        payload["stats"] = {"mean": torch.as_tensor(stats.mean), "std": torch.as_tensor(stats.std)}

    tmp = path.with_name(path.name + ".tmp")
    torch.save(payload, tmp)
    os.replace(tmp, path)

    summary = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "preset": preset.name,
        "n_mels": preset.n_mels,
        "components": {
            name: {"parameters": parameter_count(module), "sha256": state_hash(module)} for name, module in modules.items()
        },
        "schedule_T": None if schedule is None else schedule.T,
        "metadata": payload["metadata"],
    }
    dumpfn(summary, str(path.with_suffix(".json")), indent=1)
    logger.info(f"Saved {kind} checkpoint to {path}")
    return path


def load_checkpoint(path, kind=None):
    """Load and verify a checkpoint; `kind` restricts the accepted kind"""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"Missing prerequisite checkpoint: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as error:
        raise DataError(f"Cannot read checkpoint {path}: {error}") from error
    if not isinstance(payload, dict) or payload.get("format_version") != FORMAT_VERSION:
        found = payload.get("format_version") if isinstance(payload, dict) else None
        raise DataError(f"{path}: unsupported checkpoint format version {found}, expected {FORMAT_VERSION}")
    if kind is not None and payload["kind"] != kind:
        raise DataError(f"{path} is a {payload['kind']} checkpoint, expected {kind}")

    tensors = payload["tensors"]
    manifest = payload["manifest"]
    unknown = {key.split(".", 1)[0] for key in tensors} - set(COMPONENTS.get(payload["kind"], ()))
    if unknown:
        raise DataError(f"{path}: unexpected components {sorted(unknown)} in a {payload['kind']} checkpoint")
    if set(tensors) != set(manifest):
        raise ShapeError(f"{path}: tensor names disagree with the shape manifest")
    for key, shape in manifest.items():
        if list(tensors[key].shape) != list(shape):
            raise ShapeError(f"{path}: tensor {key} has shape {list(tensors[key].shape)}, manifest says {shape}")

    schedule = None
    if payload.get("schedule") is not None:
        data = payload["schedule"]
        schedule = NoiseSchedule.from_beta(data["beta"].numpy(), offset=data["offset"])
        if schedule.T != data["T"]:
            raise ShapeError(f"{path}: schedule length {schedule.T} does not match T={data['T']}")
    stats = None
    if payload.get("stats") is not None:
        stats = FeatureStats(payload["stats"]["mean"].numpy(), payload["stats"]["std"].numpy())

    return Checkpoint(
        kind=payload["kind"],
        preset=_preset_from_dict(payload["preset"]),
        tensors=tensors,
        manifest=manifest,
        schedule=schedule,
        stats=stats,
        config=payload.get("config", {}),
        metadata=payload.get("metadata", {}),
    )


@dataclass
class ModelBundle:
    """A noise predictor with its encoders, schedule and normalisation statistics"""

    predictor: torch.nn.Module
    speaker_encoder: torch.nn.Module
    content_encoder: torch.nn.Module
    schedule: NoiseSchedule
    stats: FeatureStats
    preset: ModelPreset

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint):
        if checkpoint.kind not in ("teacher", "student"):
            raise DataError(f"A {checkpoint.kind} checkpoint does not hold a noise predictor")
        if checkpoint.schedule is None or checkpoint.stats is None:
            raise DataError("Checkpoint lacks the noise schedule or the normalisation statistics")
        modules = {name: checkpoint.module(name).eval() for name in ("predictor", "speaker_encoder", "content_encoder")}
        return cls(schedule=checkpoint.schedule, stats=checkpoint.stats, preset=checkpoint.preset, **modules)

    @classmethod
    def load(cls, path):
        return cls.from_checkpoint(load_checkpoint(path))
