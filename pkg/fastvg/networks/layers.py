"""
Shared building blocks
"""
import torch
from torch import nn
from torch.nn import functional as F
from torch.nn.utils.parametrizations import weight_norm

from fastvg.common import ParameterError

LRELU_SLOPE = 0.1


def activation(name):
    """Return the activation module used by a preset"""
    if name == "leaky_relu":
        return nn.LeakyReLU(LRELU_SLOPE)
    if name == "silu":
        return nn.SiLU()
    raise ParameterError(f"Unknown activation {name}")


class GatedConv1d(nn.Module):
    """Weight normalised (transposed) convolution followed by a gated linear unit"""

    def __init__(self, in_channels, out_channels, kernel_size, stride=1, transpose=False):
        super().__init__()
        if transpose:
            conv = nn.ConvTranspose1d(in_channels, 2 * out_channels, kernel_size, stride=stride, padding=(kernel_size - stride) // 2)
        elif stride > 1:
            conv = nn.Conv1d(in_channels, 2 * out_channels, kernel_size, stride=stride, padding=(kernel_size - stride) // 2)
        else:
            conv = nn.Conv1d(in_channels, 2 * out_channels, kernel_size, padding=kernel_size // 2)
        self.conv = weight_norm(conv)

    def forward(self, x):
        return F.glu(self.conv(x), dim=1)


def instance_normalize(x, eps=1e-5):
    """Per-utterance, per-channel normalisation over time of a [B, C, L] tensor"""
    mean = x.mean(dim=-1, keepdim=True)
    var = x.var(dim=-1, keepdim=True, unbiased=False)
    return (x - mean) / torch.sqrt(var + eps)
