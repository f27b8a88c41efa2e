"""
Conditional 1D U-Net noise predictor ε(x_t, t, s, p)
"""
import logging
import math

import torch
from torch import nn
from torch.nn import functional as F
from torch.nn.utils.parametrizations import weight_norm

from fastvg.common import ShapeError
from fastvg.networks.layers import GatedConv1d
from fastvg.networks.presets import ModelPreset

logger = logging.getLogger(__name__)

DOWNSAMPLE = 4  # two stride-2 stages


def encode_time(t, dim):
    """
    Sinusoidal embedding [sin(t·w_i), cos(t·w_i)] with w_i = 10000^(-i/half).

    `t` may be an int, a float or a tensor of shape [B]; returns [B, dim].
    """
    if not torch.is_tensor(t):
        t = torch.tensor([t])
    t = t.reshape(-1).to(torch.float64)
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / half)
    args = t[:, None] * freqs[None, :]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=-1)


class ConditionProjection(nn.Module):
    """Projects (t, s, p) to the hidden width of one block; t and s broadcast over frames"""

    def __init__(self, time_dim, speaker_dim, content_dim, hidden):
        super().__init__()
        self.time = nn.Linear(time_dim, hidden)
        self.speaker = nn.Linear(speaker_dim, hidden)
        self.content = nn.Conv1d(content_dim, hidden, 1)

    def forward(self, temb, s, p):
        return (self.time(temb) + self.speaker(s))[:, :, None] + self.content(p)


class NoisePredictor(nn.Module):
    """
    U-Net of weight normalised GLU convolutions with two downsampling and two
    upsampling stages and additive skips. Conditioning is projected and added
    after every encoder/decoder block.

    Inputs are channel-first: x [B, n_mels, L], s [B, speaker_dim],
    p [B, content_dim, L], t a step index or a [B] tensor of steps.
    """

    def __init__(self, preset: ModelPreset):
        super().__init__()
        self.preset = preset
        h = preset.hidden
        self.time_mlp = nn.Sequential(nn.Linear(preset.time_dim, preset.time_dim), nn.SiLU())
        self.enc = GatedConv1d(preset.n_mels, h, 5)
        self.down = nn.ModuleList([GatedConv1d(h, h, 4, stride=2), GatedConv1d(h, h, 4, stride=2)])
        self.mid = nn.ModuleList([GatedConv1d(h, h, 5) for _ in range(preset.n_layers - 6)])
        self.up = nn.ModuleList([GatedConv1d(h, h, 4, stride=2, transpose=True), GatedConv1d(h, h, 4, stride=2, transpose=True)])
        self.out = weight_norm(nn.Conv1d(h, preset.n_mels, 5, padding=2))
        n_blocks = 1 + len(self.down) + len(self.mid) + len(self.up)
        self.cond = nn.ModuleList(
            [ConditionProjection(preset.time_dim, preset.speaker_dim, preset.content_dim, h) for _ in range(n_blocks)]
        )

    def forward(self, x, t, s, p):
        if x.dim() != 3 or x.shape[1] != self.preset.n_mels:
            raise ShapeError(f"Expected x of shape [B, {self.preset.n_mels}, L], got {tuple(x.shape)}")
        if p.shape[0] != x.shape[0] or p.shape[-1] != x.shape[-1]:
            raise ShapeError(f"Content embedding {tuple(p.shape)} is not frame aligned with x {tuple(x.shape)}")
        if s.shape[0] != x.shape[0]:
            raise ShapeError(f"Speaker embedding batch {s.shape[0]} does not match x batch {x.shape[0]}")

        length = x.shape[-1]
        pad = (-length) % DOWNSAMPLE
        if pad:
            x = F.pad(x, (0, pad), mode="replicate")
            p = F.pad(p, (0, pad), mode="replicate")

        if not torch.is_tensor(t):
            t = torch.full((x.shape[0],), int(t))
        elif t.dim() == 0:
            t = t.expand(x.shape[0])
        temb = self.time_mlp(encode_time(t, self.preset.time_dim).to(dtype=x.dtype, device=x.device))

        conds = iter(self.cond)
        h = self.enc(x) + next(conds)(temb, s, p)
        skips = [h]
        for i, layer in enumerate(self.down):
            p_i = F.avg_pool1d(p, 2 ** (i + 1))
            h = layer(h) + next(conds)(temb, s, p_i)
            skips.append(h)
        p_mid = F.avg_pool1d(p, DOWNSAMPLE)
        for layer in self.mid:
            h = h + layer(h) + next(conds)(temb, s, p_mid)
        skips.pop()
        for i, layer in enumerate(self.up):
            p_i = F.avg_pool1d(p, 2 ** (len(self.up) - 1 - i)) if i < len(self.up) - 1 else p
            h = layer(h) + skips.pop() + next(conds)(temb, s, p_i)
        return self.out(h)[..., :length]


def predict_noise(x_t, t, s, p, model: NoisePredictor):
    """ε̂ for a batch; same shape as x_t"""
    return model(x_t, t, s, p)
