"""Segmentation masks as total partitions into R regions.

A mask is an H*W integer label grid with values in 0..R-1; every pixel
belongs to exactly one region, and R is declared by the dataset (a given
image may legally miss some of the declared regions). All resampling is
nearest-neighbor on the label map so that no new labels are ever invented.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class RegionMask:
    """An H*W label grid partitioning an image into ``num_regions`` regions."""

    labels: np.ndarray
    num_regions: int

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise ValidationError(f"mask labels must be 2-D, got shape {labels.shape}")
        if not np.issubdtype(labels.dtype, np.integer):
            raise ValidationError(f"mask labels must be integers, got dtype {labels.dtype}")
        if self.num_regions < 1:
            raise ValidationError(f"num_regions must be positive, got {self.num_regions}")
        bad = (labels < 0) | (labels >= self.num_regions)
        if bad.any():
            y, x = np.argwhere(bad)[0]
            raise ValidationError(
                f"label {int(labels[y, x])} at pixel (y={y}, x={x}) is outside "
                f"0..{self.num_regions - 1}"
            )
        object.__setattr__(self, "labels", labels)

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def present_regions(self) -> np.ndarray:
        """Sorted array of labels that actually occur in this mask."""
        return np.unique(self.labels)


@dataclass(frozen=True)
class OneHotMask:
    """R*H*W binary expansion of a RegionMask; channels are disjoint and
    cover every pixel."""

    channels: np.ndarray

    def __post_init__(self):
        channels = np.asarray(self.channels)
        if channels.ndim != 3:
            raise ValidationError(f"one-hot channels must be 3-D, got shape {channels.shape}")
        if not np.isin(channels, (0, 1)).all():
            raise ValidationError("one-hot channels must contain only 0 and 1")
        sums = channels.sum(axis=0)
        if not (sums == 1).all():
            y, x = np.argwhere(sums != 1)[0]
            raise ValidationError(
                f"one-hot channels sum to {int(sums[y, x])} at pixel (y={y}, x={x}); "
                "expected exactly 1"
            )
        object.__setattr__(self, "channels", channels)

    @property
    def num_regions(self) -> int:
        return self.channels.shape[0]

    def to_labels(self) -> RegionMask:
        return RegionMask(np.argmax(self.channels, axis=0).astype(np.int64), self.num_regions)


def to_onehot(mask: RegionMask) -> OneHotMask:
    """Expand a label grid into R disjoint binary channels."""
    r = np.arange(mask.num_regions)
    channels = (mask.labels[None, :, :] == r[:, None, None]).astype(np.uint8)
    return OneHotMask(channels)


def nearest_indices(src_size: int, dst_size: int) -> np.ndarray:
    """Source indices sampled for each destination pixel.

    Pixel-center rule: dst pixel j reads src pixel floor((j + 0.5) * src/dst).
    This is the single resampling rule used everywhere masks meet feature
    maps, so label maps downsampled by different call sites always agree.
    """
    if dst_size < 1:
        raise ValidationError(f"target size must be positive, got {dst_size}")
    if dst_size > src_size:
        raise ValidationError(f"target size {dst_size} exceeds source size {src_size}")
    idx = np.floor((np.arange(dst_size) + 0.5) * (src_size / dst_size)).astype(np.int64)
    return np.minimum(idx, src_size - 1)


def downsample_mask(mask: RegionMask, target_h: int, target_w: int) -> RegionMask:
    """Resample a label grid to (target_h, target_w) by nearest neighbor.

    Labels are never interpolated; the output alphabet is a subset of the
    input alphabet and constant masks stay constant.
    """
    h, w = mask.shape
    rows = nearest_indices(h, target_h)
    cols = nearest_indices(w, target_w)
    return RegionMask(mask.labels[np.ix_(rows, cols)], mask.num_regions)


def remap_regions(mask: RegionMask, mapping: dict[int, int]) -> RegionMask:
    """Relabel regions through a label -> label table.

    The table must cover every declared source label (0..R-1) and its image
    must be the contiguous range 0..R'-1.
    """
    declared = set(range(mask.num_regions))
    missing = sorted(declared - set(int(k) for k in mapping))
    if missing:
        raise ValidationError(f"mapping does not cover source labels {missing}")
    targets = {int(v) for v in mapping.values()}
    new_r = max(targets) + 1
    if targets != set(range(new_r)):
        raise ValidationError(
            f"mapping image {sorted(targets)} is not the contiguous range 0..{new_r - 1}"
        )
    table = np.zeros(mask.num_regions, dtype=np.int64)
    for src, dst in mapping.items():
        table[int(src)] = int(dst)
    return RegionMask(table[mask.labels], new_r)
