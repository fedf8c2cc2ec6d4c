"""Generator (content encoder, style encoder, decoder) and the conditional
discriminator.

The generator factors as: encode content to an 8x-downsampled feature map,
encode the style image into one style row per region via region-wise average
pooling, then decode with region-wise normalization blocks that re-downsample
the content mask at each resolution. The discriminator is a patch-level trunk
with one logit head per domain class; its penultimate activations double as
the feature extractor for the feature matching loss.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
import torch
from torch import Tensor, nn

from . import masks
from .errors import ValidationError


@dataclass(frozen=True)
class GeneratorConfig:
    image_size: int = 32
    num_regions: int = 3
    num_domains: int = 2
    style_dim: int = 64
    base_channels: int = 64
    image_channels: int = 3

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        return cls(**d)


def onehot_from_labels(labels: Tensor, num_regions: int, dtype=torch.float32) -> Tensor:
    """(N, H, W) integer labels -> (N, R, H, W) one-hot tensor."""
    if labels.ndim != 3:
        raise ValidationError(f"label batch must be 3-D (N,H,W), got {tuple(labels.shape)}")
    if labels.numel() and (labels.min() < 0 or labels.max() >= num_regions):
        raise ValidationError(
            f"labels must lie in 0..{num_regions - 1}, got range "
            f"[{int(labels.min())}, {int(labels.max())}]"
        )
    r = torch.arange(num_regions, device=labels.device)
    return (labels.unsqueeze(1) == r.view(1, -1, 1, 1)).to(dtype)


def downsample_labels(labels: Tensor, target_h: int, target_w: int) -> Tensor:
    """Nearest-neighbor downsample of a (N, H, W) label batch, using the same
    pixel-center rule as masks.downsample_mask."""
    n, h, w = labels.shape
    rows = torch.from_numpy(masks.nearest_indices(h, target_h)).to(labels.device)
    cols = torch.from_numpy(masks.nearest_indices(w, target_w)).to(labels.device)
    return labels.index_select(1, rows).index_select(2, cols)


def region_average_pool(feat: Tensor, sm_onehot: Tensor) -> Tensor:
    """Average feature vectors inside each region: (N, D, H, W) x (N, R, H, W)
    -> style tensor (N, R, D). Regions absent from the mask yield zero rows."""
    if feat.ndim != 4 or sm_onehot.ndim != 4:
        raise ValidationError("region_average_pool expects 4-D feature map and one-hot mask")
    if feat.shape[2:] != sm_onehot.shape[2:] or feat.shape[0] != sm_onehot.shape[0]:
        raise ValidationError(
            f"feature shape {tuple(feat.shape)} and mask shape {tuple(sm_onehot.shape)} "
            "are not spatially aligned"
        )
    m = sm_onehot.to(feat.dtype)
    sums = torch.einsum("ndhw,nrhw->nrd", feat, m)
    counts = m.sum(dim=(2, 3)).clamp_min(1.0)
    return sums / counts.unsqueeze(-1)


class ContentEncoder(nn.Module):
    """Three stride-2 convolution blocks with instance normalization; output
    spatial dims are the input's divided by 8."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        b = cfg.base_channels
        self.layers = nn.Sequential(
            nn.Conv2d(cfg.image_channels, b, 3, padding=1),
            nn.InstanceNorm2d(b),
            nn.ReLU(inplace=True),
            nn.Conv2d(b, 2 * b, 4, stride=2, padding=1),
            nn.InstanceNorm2d(2 * b),
            nn.ReLU(inplace=True),
            nn.Conv2d(2 * b, 4 * b, 4, stride=2, padding=1),
            nn.InstanceNorm2d(4 * b),
            nn.ReLU(inplace=True),
            nn.Conv2d(4 * b, 4 * b, 4, stride=2, padding=1),
            nn.InstanceNorm2d(4 * b),
            nn.ReLU(inplace=True),
        )
        self.out_channels = 4 * b

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] % 8 or x.shape[-2] % 8:
            raise ValidationError(
                f"content image dims {tuple(x.shape[-2:])} must be divisible by 8"
            )
        return self.layers(x)


class StyleEncoder(nn.Module):
    """Bottleneck: stride-2 convolutions down, transposed convolutions back to
    input resolution, then region-wise average pooling into one row per region.

    No normalization layers here: the pooled rows must keep the raw feature
    statistics that carry region appearance.
    """

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        b = max(cfg.base_channels // 2, 16)
        self.num_regions = cfg.num_regions
        self.down = nn.Sequential(
            nn.Conv2d(cfg.image_channels, b, 4, stride=2, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(b, 2 * b, 4, stride=2, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(2 * b, 4 * b, 4, stride=2, padding=1),
            nn.ReLU(inplace=True),
        )
        self.up = nn.Sequential(
            nn.ConvTranspose2d(4 * b, 2 * b, 4, stride=2, padding=1),
            nn.ReLU(inplace=True),
            nn.ConvTranspose2d(2 * b, b, 4, stride=2, padding=1),
            nn.ReLU(inplace=True),
            nn.ConvTranspose2d(b, cfg.style_dim, 4, stride=2, padding=1),
        )

    def forward(self, s: Tensor, sm_labels: Tensor) -> Tensor:
        if s.shape[-2:] != sm_labels.shape[-2:]:
            raise ValidationError(
                f"style image dims {tuple(s.shape[-2:])} do not match mask dims "
                f"{tuple(sm_labels.shape[-2:])}"
            )
        feat = self.up(self.down(s))
        onehot = onehot_from_labels(sm_labels, self.num_regions, dtype=feat.dtype)
        return region_average_pool(feat, onehot)


class Decoder(nn.Module):
    """Five RIN residual blocks, three 2x upsampling stages and a per-pixel
    linear projection to RGB with tanh. The content mask is re-downsampled to
    the feature resolution at the entry of every block."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        from .rin import RINResBlock

        b = cfg.base_channels
        d = cfg.style_dim
        self.num_regions = cfg.num_regions
        self.blocks = nn.ModuleList(
            [
                RINResBlock(4 * b, 4 * b, d),
                RINResBlock(4 * b, 4 * b, d),
                RINResBlock(4 * b, 2 * b, d),
                RINResBlock(2 * b, b, d),
                RINResBlock(b, b, d),
            ]
        )
        # Which blocks are preceded by a 2x nearest upsample.
        self.upsample_before = (False, False, True, True, True)
        self.to_rgb = nn.Conv2d(b, cfg.image_channels, kernel_size=1)

    def forward(self, z: Tensor, cm_labels: Tensor, st: Tensor) -> Tensor:
        if st.ndim != 3 or st.shape[1] != self.num_regions:
            raise ValidationError(
                f"style tensor shape {tuple(st.shape)} does not provide "
                f"{self.num_regions} region rows"
            )
        full_h, full_w = cm_labels.shape[-2:]
        if (z.shape[-2] * 8, z.shape[-1] * 8) != (full_h, full_w):
            raise ValidationError(
                f"content features {tuple(z.shape[-2:])} x8 do not match mask dims "
                f"{(full_h, full_w)}"
            )
        h = z
        for up, block in zip(self.upsample_before, self.blocks):
            if up:
                h = nn.functional.interpolate(h, scale_factor=2, mode="nearest")
            small = downsample_labels(cm_labels, h.shape[-2], h.shape[-1])
            onehot = onehot_from_labels(small, self.num_regions, dtype=h.dtype)
            h = block(h, onehot, st)
        return torch.tanh(self.to_rgb(h))


class Generator(nn.Module):
    """Full translation network: x_hat = decode(content_encode(x), cm,
    encode_style(s, sm))."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        self.content_encoder = ContentEncoder(cfg)
        self.style_encoder = StyleEncoder(cfg)
        self.decoder = Decoder(cfg)

    def content_encode(self, x: Tensor) -> Tensor:
        return self.content_encoder(x)

    def encode_style(self, s: Tensor, sm_labels: Tensor) -> Tensor:
        return self.style_encoder(s, sm_labels)

    def decode(self, z: Tensor, cm_labels: Tensor, st: Tensor) -> Tensor:
        return self.decoder(z, cm_labels, st)

    def forward(self, x: Tensor, cm_labels: Tensor, s: Tensor, sm_labels: Tensor) -> Tensor:
        return self.decode(self.content_encode(x), cm_labels, self.encode_style(s, sm_labels))

    generate = forward


class Discriminator(nn.Module):
    """Patch-level trunk shared by all classes, one logit map head per domain.
    ``features`` (the trunk output) is the D_f extractor used by the feature
    matching loss."""

    # Three stride-2 stages.
    downsampling_factor = 8

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        b = cfg.base_channels
        self.num_domains = cfg.num_domains
        self.trunk = nn.Sequential(
            nn.Conv2d(cfg.image_channels, b, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(b, 2 * b, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(2 * b, 4 * b, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(4 * b, 4 * b, 3, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
        )
        self.heads = nn.Conv2d(4 * b, cfg.num_domains, kernel_size=1)

    def features(self, img: Tensor) -> Tensor:
        return self.trunk(img)

    def forward(self, img: Tensor, domain: Tensor) -> tuple[Tensor, Tensor]:
        """Return (per-sample class-head logit map (N,1,h,w), trunk features)."""
        domain = torch.as_tensor(domain, device=img.device)
        if domain.ndim == 0:
            domain = domain.expand(img.shape[0])
        if domain.numel() and (domain.min() < 0 or domain.max() >= self.num_domains):
            raise ValidationError(
                f"domain labels must lie in 0..{self.num_domains - 1}, got "
                f"{domain.tolist()}"
            )
        feat = self.trunk(img)
        logits = self.heads(feat)
        n, _, h, w = logits.shape
        index = domain.long().view(n, 1, 1, 1).expand(n, 1, h, w)
        return logits.gather(1, index), feat


def init_weights(module: nn.Module, std: float = 0.02) -> None:
    """Gaussian init for all conv/linear weights; modulation biases stay zero."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.normal_(m.weight, 0.0, std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.Linear):
            nn.init.normal_(m.weight, 0.0, std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
