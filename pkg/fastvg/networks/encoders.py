"""
Conditioning encoders: speaker embedding s and content embedding p
"""
import logging

import torch
from torch import nn
from torch.nn import functional as F

from fastvg.common import ShapeError
from fastvg.networks.layers import activation, instance_normalize
from fastvg.networks.presets import ModelPreset

logger = logging.getLogger(__name__)

MIN_SPEAKER_FRAMES = 4
MIN_CONTENT_FRAMES = 2


def _check_mel(x, n_mels, min_frames, what):
    if x.dim() != 3 or x.shape[1] != n_mels:
        raise ShapeError(f"{what} expects [B, {n_mels}, L], got {tuple(x.shape)}")
    if x.shape[-1] < min_frames:
        raise ShapeError(f"{what} needs at least {min_frames} frames, got {x.shape[-1]}")


class SpeakerEncoder(nn.Module):
    """
    Stack of circularly padded convolutions followed by mean+std pooling over
    time and a projection to a unit-norm embedding.

    Circular padding with unit stride keeps the frame features equivariant to
    circular shifts, so the pooled embedding is invariant to them.
    """

    def __init__(self, preset: ModelPreset):
        super().__init__()
        self.preset = preset
        layers = []
        channels = preset.n_mels
        for _ in range(preset.speaker_layers):
            layers.append(nn.Conv1d(channels, preset.speaker_hidden, 3, padding=1, padding_mode="circular"))
            layers.append(activation(preset.activation))
            channels = preset.speaker_hidden
        self.convs = nn.Sequential(*layers)
        self.proj = nn.Linear(2 * preset.speaker_hidden, preset.speaker_dim)

    def forward(self, x):
        _check_mel(x, self.preset.n_mels, MIN_SPEAKER_FRAMES, "Speaker encoder")
        h = self.convs(x)
        pooled = torch.cat([h.mean(dim=-1), h.std(dim=-1, unbiased=False)], dim=-1)
        return F.normalize(self.proj(pooled), dim=-1)


class ContentEncoder(nn.Module):
    """
    Frame autoencoder with a narrow tanh bottleneck.

    The input is instance normalised per utterance so that the per-bin level
    (largely speaker dependent) is removed before the bottleneck. `forward`
    returns the frame-aligned content embedding [B, content_dim, L]; `decode`
    is only used while pretraining.
    """

    def __init__(self, preset: ModelPreset):
        super().__init__()
        self.preset = preset
        h = preset.content_hidden
        self.encoder = nn.Sequential(
            nn.Conv1d(preset.n_mels, h, 5, padding=2),
            activation(preset.activation),
            nn.Conv1d(h, h, 5, padding=2),
            activation(preset.activation),
            nn.Conv1d(h, preset.content_dim, 1),
            nn.Tanh(),
        )
        self.decoder = nn.Sequential(
            nn.Conv1d(preset.content_dim, h, 5, padding=2),
            activation(preset.activation),
            nn.Conv1d(h, preset.n_mels, 5, padding=2),
        )

    def forward(self, x):
        _check_mel(x, self.preset.n_mels, MIN_CONTENT_FRAMES, "Content encoder")
        return self.encoder(instance_normalize(x))

    def decode(self, p):
        return self.decoder(p)

    def reconstruction_loss(self, x):
        """L1 between the decoded bottleneck and the instance normalised input"""
        return torch.mean(torch.abs(self.decode(self.forward(x)) - instance_normalize(x)))


def encode_speaker(mel, encoder: SpeakerEncoder):
    """Unit-norm speaker embedding [B, speaker_dim] of a [B, n_mels, L] batch"""
    return encoder(mel)


def encode_content(mel, encoder: ContentEncoder):
    """Frame-aligned content embedding [B, content_dim, L]"""
    return encoder(mel)
