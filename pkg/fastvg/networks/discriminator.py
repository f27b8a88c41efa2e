"""
Multi-resolution spectrogram discriminator with feature taps
"""
import logging

import torch
from torch import nn
from torch.nn import functional as F
from torch.nn.utils.parametrizations import weight_norm

from fastvg.common import ShapeError
from fastvg.networks.layers import activation
from fastvg.networks.presets import ModelPreset

logger = logging.getLogger(__name__)


class ResolutionDiscriminator(nn.Module):
    """
    2D convolutions over the linear magnitude spectrogram of one STFT
    resolution. Returns the flattened score map and the feature map of every
    layer (conv_post included).
    """

    def __init__(self, preset: ModelPreset, resolution):
        super().__init__()
        if len(resolution) != 3:
            raise ShapeError(f"A resolution is (n_fft, hop, win), got {resolution}")
        self.resolution = tuple(int(x) for x in resolution)
        ch = preset.disc_channels
        convs = [weight_norm(nn.Conv2d(1, ch, (3, 9), padding=(1, 4)))]
        for _ in range(preset.disc_layers - 2):
            convs.append(weight_norm(nn.Conv2d(ch, ch, (3, 9), stride=(1, 2), padding=(1, 4))))
        convs.append(weight_norm(nn.Conv2d(ch, ch, (3, 3), padding=(1, 1))))
        self.convs = nn.ModuleList(convs)
        self.conv_post = weight_norm(nn.Conv2d(ch, 1, (3, 3), padding=(1, 1)))
        self.act = activation(preset.activation)

    @property
    def n_layers(self):
        return len(self.convs) + 1

    def spectrogram(self, wav):
        n_fft, hop, win = self.resolution
        pad = (n_fft - hop) // 2
        x = F.pad(wav.unsqueeze(1), (pad, pad), mode="reflect").squeeze(1)
        spec = torch.stft(x, n_fft=n_fft, hop_length=hop, win_length=win, center=False, return_complex=True)
        return torch.sqrt(spec.real**2 + spec.imag**2 + 1e-9)

    def forward(self, wav):
        x = self.spectrogram(wav).unsqueeze(1)
        fmap = []
        for conv in self.convs:
            x = self.act(conv(x))
            fmap.append(x)
        x = self.conv_post(x)
        fmap.append(x)
        return torch.flatten(x, 1, -1), fmap


class MultiResolutionDiscriminator(nn.Module):
    """One ResolutionDiscriminator per STFT resolution of the preset"""

    def __init__(self, preset: ModelPreset):
        super().__init__()
        self.preset = preset
        self.discriminators = nn.ModuleList([ResolutionDiscriminator(preset, r) for r in preset.resolutions])

    @property
    def n_layers(self):
        """Number of feature taps L per resolution"""
        return self.discriminators[0].n_layers

    def forward(self, wav):
        """Return (scores, fmaps): one score tensor and one list of L feature maps per resolution"""
        if wav.dim() != 2:
            raise ShapeError(f"Discriminator expects [B, samples], got {tuple(wav.shape)}")
        scores, fmaps = [], []
        for disc in self.discriminators:
            score, fmap = disc(wav)
            scores.append(score)
            fmaps.append(fmap)
        return scores, fmaps


def discriminate(wav, disc: MultiResolutionDiscriminator):
    return disc(wav)


def feature_counts(fmaps):
    """N_l of every feature map (elements per example), per resolution"""
    return [[int(f[0].numel()) for f in fmap] for fmap in fmaps]
