"""
Network size presets
"""
from dataclasses import dataclass, replace

from fastvg.common import ParameterError


@dataclass(frozen=True)
class ModelPreset:
    """Sizes of every learnable component"""

    name: str
    n_mels: int = 80
    # Noise predictor (U-Net)
    n_layers: int = 6
    hidden: int = 64
    time_dim: int = 64
    # Speaker encoder
    speaker_dim: int = 64
    speaker_hidden: int = 64
    speaker_layers: int = 4
    # Content encoder (frame autoencoder bottleneck)
    content_dim: int = 16
    content_hidden: int = 64
    # Vocoder
    vocoder_channels: int = 64
    vocoder_kernel: int = 7
    upsample: tuple = (4, 8, 8)
    # Discriminator
    disc_channels: int = 16
    disc_layers: int = 4
    resolutions: tuple = ((512, 128, 512), (1024, 256, 1024), (2048, 512, 2048))
    # Activation of the vocoder, encoders and discriminator
    activation: str = "leaky_relu"

    def __post_init__(self):
        if self.n_layers < 6:
            raise ParameterError("The U-Net needs at least 6 convolution layers")
        if self.time_dim % 2:
            raise ParameterError("time_dim must be even")

    def with_mels(self, n_mels):
        return replace(self, n_mels=int(n_mels))


PRESETS = {
    # Below 5000 parameters per network with smooth activations, for finite-difference checks
    "tiny": ModelPreset(
        name="tiny",
        n_mels=8,
        n_layers=6,
        hidden=4,
        time_dim=8,
        speaker_dim=4,
        speaker_hidden=4,
        content_dim=2,
        content_hidden=4,
        vocoder_channels=8,
        vocoder_kernel=3,
        disc_channels=2,
        disc_layers=3,
        activation="silu",
    ),
    "toy": ModelPreset(name="toy"),
    "paper": ModelPreset(
        name="paper",
        n_layers=12,
        hidden=512,
        time_dim=128,
        speaker_dim=256,
        speaker_hidden=256,
        content_dim=16,
        content_hidden=256,
        vocoder_channels=512,
        disc_channels=32,
        disc_layers=5,
    ),
}


def get_preset(name, n_mels=None):
    """Return a preset by name, optionally overriding the number of mel bins"""
    try:
        preset = PRESETS[name]
    except KeyError as error:
        raise ParameterError(f"Unknown preset {name}, choose from {sorted(PRESETS)}") from error
    if n_mels is not None and n_mels != preset.n_mels:
        preset = preset.with_mels(n_mels)
    return preset
