"""
Learnable components: noise predictor, conditioning encoders, vocoder and discriminator
"""
import hashlib
import logging

import numpy as np
import torch

from fastvg.common import ShapeError
from fastvg.networks.discriminator import MultiResolutionDiscriminator
from fastvg.networks.encoders import ContentEncoder, SpeakerEncoder
from fastvg.networks.noise_predictor import NoisePredictor
from fastvg.networks.presets import PRESETS, ModelPreset, get_preset
from fastvg.networks.vocoder import Vocoder

logger = logging.getLogger(__name__)

__all__ = [
    "ContentEncoder",
    "ModelPreset",
    "MultiResolutionDiscriminator",
    "NoisePredictor",
    "PRESETS",
    "SpeakerEncoder",
    "Vocoder",
    "as_batch",
    "build",
    "freeze",
    "get_preset",
    "parameter_count",
    "state_hash",
]

BUILDERS = {
    "predictor": NoisePredictor,
    "speaker_encoder": SpeakerEncoder,
    "content_encoder": ContentEncoder,
    "vocoder": Vocoder,
    "discriminator": MultiResolutionDiscriminator,
}


def parameter_count(module):
    return sum(p.numel() for p in module.parameters())


def build(kind, preset: ModelPreset, seed=None, **kwargs):
    """Construct a network, seeding torch first when `seed` is given, and log its size"""
    if seed is not None:
        torch.manual_seed(seed)
    module = BUILDERS[kind](preset, **kwargs)
    logger.info(f"Built {kind} ({preset.name} preset) with {parameter_count(module)} parameters")
    return module


def state_hash(module):
    """SHA-256 over the names and raw bytes of every tensor in the state dict"""
    digest = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        digest.update(name.encode("utf-8"))
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


def freeze(module):
    """Disable gradients and switch to evaluation mode; returns the module"""
    for param in module.parameters():
        param.requires_grad_(False)
    module.eval()
    return module


def is_frozen(module):
    return not any(p.requires_grad for p in module.parameters())


def as_batch(mel, dtype=torch.float32):
    """
    Convert a [frames x n_mels] matrix (or MelSpectrogram) into a
    channel-first [1, n_mels, frames] tensor
    """
    data = getattr(mel, "data", mel)
    data = np.asarray(data)
    if data.ndim != 2:
        raise ShapeError(f"Expected a [frames x n_mels] matrix, got shape {data.shape}")
    return torch.as_tensor(np.ascontiguousarray(data.T), dtype=dtype).unsqueeze(0)


def from_batch(x):
    """Inverse of `as_batch` for a single example: [frames x n_mels] float64 array"""
    if x.dim() != 3 or x.shape[0] != 1:
        raise ShapeError(f"Expected a [1, n_mels, frames] tensor, got {tuple(x.shape)}")
    return x[0].detach().cpu().to(torch.float64).numpy().T.copy()
