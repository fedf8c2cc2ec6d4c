"""Training objectives: conditional GAN terms, image reconstruction, feature
matching against style references, and the region matching loss that ties a
single-region translation to the full translation inside the swapped region
and to the untouched content image everywhere else.

All L1 terms use the mean over every tensor element so the loss weights stay
resolution-independent. None of the losses detach their inputs; the training
step decides what to detach (the discriminator update detaches the
translation so its gradients never reach the generator).
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Callable, Sequence

import torch
import torch.nn.functional as F
from torch import Tensor

from .errors import ValidationError
from .networks import Generator


@dataclass(frozen=True)
class LossWeights:
    """(lambda_R, lambda_FM, lambda_RM) applied to reconstruction, feature
    matching and region matching on top of the GAN term."""

    lambda_r: float = 0.1
    lambda_fm: float = 1.0
    lambda_rm: float = 1.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 0:
                raise ValidationError(f"{name} must be nonnegative, got {value}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LossWeights":
        return cls(**d)


def replace_style_rows(st_base: Tensor, st_other: Tensor, regions: Sequence[int] | int) -> Tensor:
    """Copy of st_base with the given region rows taken from st_other."""
    if st_base.shape != st_other.shape:
        raise ValidationError(
            f"style tensors {tuple(st_base.shape)} and {tuple(st_other.shape)} differ in shape"
        )
    if isinstance(regions, int):
        regions = [regions]
    num_regions = st_base.shape[-2]
    for i in regions:
        if not 0 <= i < num_regions:
            raise ValidationError(f"region index {i} outside 0..{num_regions - 1}")
    st = st_base.clone()
    for i in regions:
        st[..., i, :] = st_other[..., i, :]
    return st


def translate_full(gen: Generator, x: Tensor, cm: Tensor, s: Tensor, sm: Tensor) -> Tensor:
    """Decode the content of x with the style image's whole style tensor."""
    st_t = gen.encode_style(s, sm)
    return gen.decode(gen.content_encode(x), cm, st_t)


def translate_region(
    gen: Generator,
    x: Tensor,
    cm: Tensor,
    s: Tensor,
    sm: Tensor,
    regions: Sequence[int] | int,
) -> Tensor:
    """Translate only the listed regions: the content image's own style tensor
    with those rows replaced by the style image's rows."""
    st_t = gen.encode_style(s, sm)
    st_r = replace_style_rows(gen.encode_style(x, cm), st_t, regions)
    return gen.decode(gen.content_encode(x), cm, st_r)


def region_matching_loss(
    x: Tensor, x_hat: Tensor, r_hat: Tensor, cm_onehot: Tensor, region: int
) -> Tensor:
    """Mean over all elements of |r_hat - x_hat| inside region ``region`` plus
    |r_hat - x| over the complement."""
    if not (x.shape == x_hat.shape == r_hat.shape):
        raise ValidationError("x, x_hat and r_hat must share a shape")
    if cm_onehot.ndim != 4 or cm_onehot.shape[0] != x.shape[0]:
        raise ValidationError(
            f"one-hot mask shape {tuple(cm_onehot.shape)} does not fit batch {x.shape[0]}"
        )
    if cm_onehot.shape[2:] != x.shape[2:]:
        raise ValidationError("mask and images are not spatially aligned")
    if not 0 <= region < cm_onehot.shape[1]:
        raise ValidationError(f"region index {region} outside 0..{cm_onehot.shape[1] - 1}")
    inside = cm_onehot[:, region : region + 1].to(x.dtype)
    outside = 1.0 - inside
    return ((r_hat - x_hat).abs() * inside + (r_hat - x).abs() * outside).mean()


def gan_loss_d(
    disc, x: Tensor, c_x: Tensor, x_hat: Tensor, c_y: Tensor
) -> Tensor:
    """Discriminator side of the conditional GAN loss:
    E[-log D^{c_x}(x)] + E[-log(1 - D^{c_y}(x_hat))], via log-sigmoid on the
    patch logit maps. Detach x_hat at the call site for a D update."""
    real_logits, _ = disc(x, c_x)
    fake_logits, _ = disc(x_hat, c_y)
    return F.softplus(-real_logits).mean() + F.softplus(fake_logits).mean()


def gan_loss_g(disc, x_hat: Tensor, c_y: Tensor) -> Tensor:
    """Nonsaturating generator term E[-log D^{c_y}(x_hat)]."""
    fake_logits, _ = disc(x_hat, c_y)
    return F.softplus(-fake_logits).mean()


def reconstruction_loss(gen, x: Tensor, cm: Tensor) -> Tensor:
    """Mean |x - G(x, cm, {x, cm})|: the generator fed its own input as the
    style must reproduce it. ``gen`` is any callable with the generator
    signature (x, cm, s, sm) -> image."""
    return (x - gen(x, cm, x, cm)).abs().mean()


def feature_matching_loss(
    d_f: Callable[[Tensor], Tensor], x_hat: Tensor, styles: Sequence[Tensor]
) -> Tensor:
    """Mean |D_f(x_hat) - (1/K) sum_k D_f(y_k)| over K style reference images."""
    if len(styles) < 1:
        raise ValidationError("feature matching needs at least one style image")
    target = torch.stack([d_f(y) for y in styles], dim=0).mean(dim=0)
    return (d_f(x_hat) - target).abs().mean()


def total_generator_objective(
    gan: Tensor, recon: Tensor, fm: Tensor, rm: Tensor, weights: LossWeights
) -> tuple[Tensor, dict[str, float]]:
    """Weighted sum of the generator terms, plus the per-component values for
    logging."""
    total = gan + weights.lambda_r * recon + weights.lambda_fm * fm + weights.lambda_rm * rm
    components = {
        "loss_gan": float(gan.detach()),
        "loss_recon": float(recon.detach()),
        "loss_fm": float(fm.detach()),
        "loss_rm": float(rm.detach()),
        "loss_g_total": float(total.detach()),
    }
    return total, components
