"""
Small transposed-convolution vocoder, mel -> waveform
"""
import logging
from math import prod

import torch
from torch import nn
from torch.nn import functional as F
from torch.nn.utils.parametrizations import weight_norm

from fastvg.common import ParameterError, ShapeError
from fastvg.networks.layers import activation
from fastvg.networks.presets import ModelPreset

logger = logging.getLogger(__name__)

STFT_RESOLUTIONS = ((512, 128, 512), (1024, 256, 1024), (2048, 512, 2048))


class ResidualUnit(nn.Module):
    """Two dilated convolutions with a residual connection"""

    def __init__(self, channels, kernel_size, act, dilations=(1, 3)):
        super().__init__()
        self.convs = nn.ModuleList(
            [
                weight_norm(nn.Conv1d(channels, channels, kernel_size, dilation=d, padding=d * (kernel_size - 1) // 2))
                for d in dilations
            ]
        )
        self.act = activation(act)

    def forward(self, x):
        for conv in self.convs:
            x = x + conv(self.act(x))
        return x


class Vocoder(nn.Module):
    """
    conv_pre -> (act, ConvTranspose(2u, stride u), residual unit) per upsampling
    stage -> conv_post -> tanh. Channels halve at every stage.

    Input [B, n_mels, L] (normalised mel), output [B, L·hop] waveform.
    """

    def __init__(self, preset: ModelPreset, hop=256):
        super().__init__()
        if prod(preset.upsample) != hop:
            raise ParameterError(f"Upsampling factors {preset.upsample} do not multiply to the hop size {hop}")
        if any(u % 2 for u in preset.upsample):
            raise ParameterError("Upsampling factors must be even")
        self.preset = preset
        self.hop = hop
        ch = preset.vocoder_channels
        k = preset.vocoder_kernel
        self.conv_pre = weight_norm(nn.Conv1d(preset.n_mels, ch, k, padding=k // 2))
        self.ups = nn.ModuleList()
        self.resblocks = nn.ModuleList()
        for u in preset.upsample:
            out = max(ch // 2, 1)
            self.ups.append(weight_norm(nn.ConvTranspose1d(ch, out, 2 * u, stride=u, padding=u // 2)))
            self.resblocks.append(ResidualUnit(out, 3, preset.activation))
            ch = out
        self.act = activation(preset.activation)
        self.conv_post = weight_norm(nn.Conv1d(ch, 1, k, padding=k // 2))

    def forward(self, mel):
        if mel.dim() != 3 or mel.shape[1] != self.preset.n_mels:
            raise ShapeError(f"Vocoder expects [B, {self.preset.n_mels}, L], got {tuple(mel.shape)}")
        x = self.conv_pre(mel)
        for up, res in zip(self.ups, self.resblocks):
            x = res(up(self.act(x)))
        return torch.tanh(self.conv_post(self.act(x))).squeeze(1)


def vocode(mel, vocoder: Vocoder):
    """Waveform [B, frames·hop] of a normalised mel batch"""
    return vocoder(mel)


def _stft_magnitude(wav, n_fft, hop, win):
    window = torch.hann_window(win, dtype=wav.dtype, device=wav.device)
    spec = torch.stft(wav, n_fft=n_fft, hop_length=hop, win_length=win, window=window, center=True, return_complex=True)
    return torch.sqrt(spec.real**2 + spec.imag**2 + 1e-9)


def stft_loss(real, fake, resolutions=STFT_RESOLUTIONS):
    """
    Multi-resolution STFT loss: spectral convergence plus log-magnitude L1,
    averaged over resolutions.
    """
    if real.shape != fake.shape:
        raise ShapeError(f"Waveform shapes differ: {tuple(real.shape)} vs {tuple(fake.shape)}")
    total = 0.0
    for n_fft, hop, win in resolutions:
        mag_r = _stft_magnitude(real, n_fft, hop, win)
        mag_f = _stft_magnitude(fake, n_fft, hop, win)
        convergence = torch.linalg.norm(mag_r - mag_f) / torch.linalg.norm(mag_r)
        log_mag = F.l1_loss(torch.log(mag_f), torch.log(mag_r))
        total = total + convergence + log_mag
    return total / len(resolutions)
