"""Region-wise normalization: per-region style injection into feature maps.

A feature map is normalized by whole-map channel statistics, then each
semantic region receives its own learned affine modulation (gamma_i, beta_i)
derived from that region's style row; the per-region results are summed back
into one map. Because every pixel belongs to exactly one region, the output
at a pixel depends only on its own region's modulation, and both gamma and
beta are masked by the region channel so styles cannot leak across regions.
"""

from __future__ import annotations

from typing import NamedTuple

import torch
from torch import Tensor, nn

from .errors import ValidationError

# Keeps sigma strictly positive for constant feature maps.
EPS = 1e-5


class ChannelStats(NamedTuple):
    mean: Tensor  # (C,)
    std: Tensor  # (C,), >= sqrt(EPS)


def channel_stats(f_in: Tensor) -> ChannelStats:
    """Mean and standard deviation per channel over the whole (N, H, W) extent."""
    if f_in.ndim != 4:
        raise ValidationError(f"feature map must be 4-D (N,C,H,W), got shape {tuple(f_in.shape)}")
    if f_in.numel() == 0:
        raise ValidationError("feature map is empty")
    mean = f_in.mean(dim=(0, 2, 3))
    sq_mean = (f_in * f_in).mean(dim=(0, 2, 3))
    var = (sq_mean - mean * mean).clamp_min(0.0)
    return ChannelStats(mean, torch.sqrt(var + EPS))


def _as_batched_mask(cm: Tensor, batch: int) -> Tensor:
    if cm.ndim == 3:
        cm = cm.unsqueeze(0).expand(batch, -1, -1, -1)
    if cm.ndim != 4 or cm.shape[0] != batch:
        raise ValidationError(f"one-hot mask shape {tuple(cm.shape)} does not fit batch {batch}")
    return cm


def _as_batched_modulation(mod: Tensor, batch: int, name: str) -> Tensor:
    if mod.ndim == 2:
        mod = mod.unsqueeze(0).expand(batch, -1, -1)
    if mod.ndim != 3 or mod.shape[0] != batch:
        raise ValidationError(f"{name} shape {tuple(mod.shape)} does not fit batch {batch}")
    return mod


def rin_forward(f_in: Tensor, cm: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    """Normalize by channel statistics and modulate each region by its own
    (gamma_i, beta_i), both masked to the region's pixels.

    f_in: (N, C, H, W); cm: (N, R, H, W) or (R, H, W) one-hot mask;
    gamma, beta: (N, R, C) or (R, C). An all-zero mask channel (region absent
    from the image) simply contributes nothing.
    """
    if f_in.ndim != 4:
        raise ValidationError(f"feature map must be 4-D (N,C,H,W), got shape {tuple(f_in.shape)}")
    n, c, h, w = f_in.shape
    cm = _as_batched_mask(cm, n)
    gamma = _as_batched_modulation(gamma, n, "gamma")
    beta = _as_batched_modulation(beta, n, "beta")
    if cm.shape[2:] != (h, w):
        raise ValidationError(
            f"mask spatial dims {tuple(cm.shape[2:])} do not match feature dims {(h, w)}"
        )
    r = cm.shape[1]
    if gamma.shape[1:] != (r, c) or beta.shape[1:] != (r, c):
        raise ValidationError(
            f"modulation shapes {tuple(gamma.shape)}/{tuple(beta.shape)} do not match "
            f"(R={r}, C={c})"
        )

    mean, std = channel_stats(f_in)
    normed = (f_in - mean.view(1, c, 1, 1)) / std.view(1, c, 1, 1)
    cm = cm.to(f_in.dtype)
    # Per-pixel modulation: at each site only the owning region's row survives.
    gamma_map = torch.einsum("nrhw,nrc->nchw", cm, gamma)
    beta_map = torch.einsum("nrhw,nrc->nchw", cm, beta)
    return normed * (1.0 + gamma_map) + beta_map


class RINBlock(nn.Module):
    """One normalization block: a shared style-row -> (gamma, beta) affine map
    plus the masked modulation above. All regions share the map's weights and
    differ only through their style rows, so the parameter count is
    independent of R."""

    def __init__(self, num_channels: int, style_dim: int):
        super().__init__()
        self.num_channels = num_channels
        self.style_dim = style_dim
        self.to_modulation = nn.Linear(style_dim, 2 * num_channels)
        nn.init.zeros_(self.to_modulation.bias)

    def modulation(self, st: Tensor) -> tuple[Tensor, Tensor]:
        """Map style rows (..., R, D) to gamma, beta of shape (..., R, C)."""
        if st.shape[-1] != self.style_dim:
            raise ValidationError(
                f"style width {st.shape[-1]} does not match block style_dim {self.style_dim}"
            )
        out = self.to_modulation(st)
        return out[..., : self.num_channels], out[..., self.num_channels :]

    def forward(self, f_in: Tensor, cm: Tensor, st: Tensor) -> Tensor:
        gamma, beta = self.modulation(st)
        return rin_forward(f_in, cm, gamma, beta)


class RINResBlock(nn.Module):
    """Residual block of three convolutions, three ReLUs and three RIN blocks.

    Main path: RIN -> ReLU -> 3x3 conv, twice. Skip path: identity when the
    channel counts match, otherwise RIN -> ReLU -> 1x1 conv. Spatial dims are
    preserved; the content mask must already be at the feature resolution.
    """

    def __init__(self, in_channels: int, out_channels: int, style_dim: int):
        super().__init__()
        mid = min(in_channels, out_channels)
        self.rin1 = RINBlock(in_channels, style_dim)
        self.conv1 = nn.Conv2d(in_channels, mid, kernel_size=3, padding=1)
        self.rin2 = RINBlock(mid, style_dim)
        self.conv2 = nn.Conv2d(mid, out_channels, kernel_size=3, padding=1)
        self.learned_skip = in_channels != out_channels
        if self.learned_skip:
            self.rin_skip = RINBlock(in_channels, style_dim)
            self.conv_skip = nn.Conv2d(in_channels, out_channels, kernel_size=1, bias=False)

    def forward(self, f_in: Tensor, cm: Tensor, st: Tensor) -> Tensor:
        h = self.conv1(torch.relu(self.rin1(f_in, cm, st)))
        h = self.conv2(torch.relu(self.rin2(h, cm, st)))
        if self.learned_skip:
            skip = self.conv_skip(torch.relu(self.rin_skip(f_in, cm, st)))
        else:
            skip = f_in
        return skip + h
