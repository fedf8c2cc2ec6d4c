"""Dataset ingestion and the procedural synthetic dataset.

On-disk layout mirrors CelebAMask-HQ-style collections: ``images/`` and
``masks/`` directories with shared file stems plus a ``manifest.json``
declaring the region alphabet, the domain list and the train/test splits.
Images are 8-bit RGB PNG; masks are 8-bit single-channel PNG whose pixel
value is the region id.

The synthetic set stands in for the license-gated face datasets: two domains
("warm" and "cool") over a fixed 3-region layout (background, an elliptical
face, a crescent of hair hugging its top). Domains differ in both texture
(warm is red-biased and speckled, cool is blue-biased and smooth) and shape
(the warm crescent is thicker), so both texture and shape translation are
exercisable. Generation is a pure function of (spec, domain, sample index).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np
from PIL import Image

from .errors import ValidationError
from .masks import RegionMask, remap_regions


# ---------------------------------------------------------------------------
# image / mask files


def save_image(path: str | Path, img: np.ndarray) -> None:
    """Write a (3, H, W) float image in [-1, 1] as 8-bit RGB PNG."""
    arr = np.clip(np.round((np.asarray(img) + 1.0) * 127.5), 0, 255).astype(np.uint8)
    Image.fromarray(arr.transpose(1, 2, 0), mode="RGB").save(path)


def load_image(path: str | Path) -> np.ndarray:
    """Read an RGB PNG into a (3, H, W) float32 array in [-1, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return arr.transpose(2, 0, 1) / 127.5 - 1.0


def save_mask(path: str | Path, mask: RegionMask) -> None:
    if mask.num_regions > 256:
        raise ValidationError("mask files support at most 256 regions")
    Image.fromarray(mask.labels.astype(np.uint8), mode="L").save(path)


def load_mask(path: str | Path, num_regions: int) -> RegionMask:
    with Image.open(path) as im:
        labels = np.asarray(im.convert("L"), dtype=np.int64)
    try:
        return RegionMask(labels, num_regions)
    except ValidationError as e:
        raise ValidationError(f"{path}: {e}") from e


# ---------------------------------------------------------------------------
# manifest


class SampleRef(NamedTuple):
    stem: str
    domain: str


@dataclass
class DatasetManifest:
    root: Path
    name: str
    num_regions: int
    region_names: list[str]
    domains: list[str]
    samples: dict[str, list[SampleRef]]
    label_remap: dict[int, int] | None = None

    def domain_index(self, name: str) -> int:
        try:
            return self.domains.index(name)
        except ValueError:
            raise ValidationError(f"unknown domain {name!r}; declared: {self.domains}") from None

    def region_index(self, name: str) -> int:
        try:
            return self.region_names.index(name)
        except ValueError:
            raise ValidationError(
                f"unknown region {name!r}; declared: {self.region_names}"
            ) from None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "num_regions": self.num_regions,
            "region_names": self.region_names,
            "domains": self.domains,
            "label_remap": (
                {str(k): v for k, v in self.label_remap.items()} if self.label_remap else None
            ),
            "samples": {
                split: [{"stem": s.stem, "domain": s.domain} for s in refs]
                for split, refs in self.samples.items()
            },
        }


def save_manifest(manifest: DatasetManifest, path: str | Path | None = None) -> Path:
    path = Path(path) if path else manifest.root / "manifest.json"
    path.write_text(json.dumps(manifest.to_dict(), indent=1, sort_keys=True))
    return path


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.exists():
        raise ValidationError(f"manifest {path} does not exist")
    raw = json.loads(path.read_text())
    required = {"name", "num_regions", "region_names", "domains", "samples"}
    missing = required - set(raw)
    if missing:
        raise ValidationError(f"manifest {path} is missing fields {sorted(missing)}")
    remap_raw = raw.get("label_remap")
    # region_names describe the regions downstream code sees, i.e. post-remap.
    effective = (
        max(int(v) for v in remap_raw.values()) + 1 if remap_raw else raw["num_regions"]
    )
    if len(raw["region_names"]) != effective:
        raise ValidationError(
            f"manifest declares {effective} effective regions but "
            f"{len(raw['region_names'])} region names"
        )
    samples = {}
    for split, refs in raw["samples"].items():
        out = []
        for ref in refs:
            if ref["domain"] not in raw["domains"]:
                raise ValidationError(
                    f"sample {ref['stem']!r} declares unknown domain {ref['domain']!r}"
                )
            out.append(SampleRef(ref["stem"], ref["domain"]))
        samples[split] = out
    return DatasetManifest(
        root=path.parent,
        name=raw["name"],
        num_regions=raw["num_regions"],
        region_names=raw["region_names"],
        domains=raw["domains"],
        samples=samples,
        label_remap={int(k): int(v) for k, v in remap_raw.items()} if remap_raw else None,
    )


# ---------------------------------------------------------------------------
# loading


@dataclass
class LoadedSplit:
    """A fully materialized split: images in [-1, 1], validated masks, and
    integer domain labels, in a deterministic order."""

    images: np.ndarray  # (N, 3, H, W) float32
    masks: np.ndarray  # (N, H, W) int64
    domains: np.ndarray  # (N,) int64
    stems: list[str]
    num_regions: int
    domain_names: list[str]

    def __len__(self) -> int:
        return self.images.shape[0]

    def __iter__(self) -> Iterator[tuple[np.ndarray, np.ndarray, int]]:
        for i in range(len(self)):
            yield self.images[i], self.masks[i], int(self.domains[i])

    def indices_for_domain(self, domain: int) -> np.ndarray:
        return np.nonzero(self.domains == domain)[0]


def load_dataset(
    manifest: DatasetManifest | str | Path, split: str = "train", seed: int | None = None
) -> LoadedSplit:
    """Load a split as (image, mask, domain) triples.

    Order is the manifest order, or a reproducible shuffle of it when ``seed``
    is given. Any missing file or invalid mask aborts with the sample named.
    """
    if not isinstance(manifest, DatasetManifest):
        manifest = load_manifest(manifest)
    if split not in manifest.samples:
        raise ValidationError(
            f"split {split!r} not in manifest (has {sorted(manifest.samples)})"
        )
    refs = list(manifest.samples[split])
    if seed is not None:
        order = np.random.default_rng(seed).permutation(len(refs))
        refs = [refs[i] for i in order]

    images, masks, domains, stems = [], [], [], []
    for ref in refs:
        img_path = manifest.root / "images" / f"{ref.stem}.png"
        mask_path = manifest.root / "masks" / f"{ref.stem}.png"
        for p in (img_path, mask_path):
            if not p.exists():
                raise ValidationError(f"sample {ref.stem!r}: missing file {p}")
        img = load_image(img_path)
        mask = load_mask(mask_path, manifest.num_regions)
        if manifest.label_remap:
            mask = remap_regions(mask, manifest.label_remap)
        if img.shape[1:] != mask.shape:
            raise ValidationError(
                f"sample {ref.stem!r}: image dims {img.shape[1:]} != mask dims {mask.shape}"
            )
        images.append(img)
        masks.append(mask.labels)
        domains.append(manifest.domain_index(ref.domain))
        stems.append(ref.stem)

    if not images:
        raise ValidationError(f"split {split!r} is empty")
    return LoadedSplit(
        images=np.stack(images).astype(np.float32),
        masks=np.stack(masks).astype(np.int64),
        domains=np.asarray(domains, dtype=np.int64),
        stems=stems,
        num_regions=manifest.num_regions if not manifest.label_remap
        else max(manifest.label_remap.values()) + 1,
        domain_names=list(manifest.domains),
    )


# ---------------------------------------------------------------------------
# synthetic dataset


@dataclass(frozen=True)
class SyntheticSpec:
    image_size: int = 32
    samples_per_domain: int = 100
    test_fraction: float = 0.2
    seed: int = 7

    def num_test(self) -> int:
        return max(1, round(self.samples_per_domain * self.test_fraction))


REGION_NAMES = ["background", "face", "hair"]
DOMAIN_NAMES = ["cool", "warm"]

# Base RGB per (domain, region), in [-1, 1].
_BASE_COLORS = {
    "cool": {"background": (-0.55, -0.25, 0.45), "face": (-0.25, 0.05, 0.80), "hair": (-0.50, -0.10, 0.60)},
    "warm": {"background": (0.45, -0.40, -0.55), "face": (0.80, -0.05, -0.30), "hair": (0.60, -0.30, -0.50)},
}


def _synthetic_sample(
    spec: SyntheticSpec, domain: str, index: int
) -> tuple[np.ndarray, RegionMask]:
    """One (image, mask) pair; pure function of its arguments."""
    size = spec.image_size
    rng = np.random.default_rng([spec.seed, DOMAIN_NAMES.index(domain), index])

    ys, xs = np.mgrid[0:size, 0:size]
    yy = (ys + 0.5) / size
    xx = (xs + 0.5) / size

    cx = 0.5 + rng.uniform(-0.05, 0.05)
    cy = 0.56 + rng.uniform(-0.04, 0.04)
    rx = 0.26 + rng.uniform(-0.03, 0.03)
    ry = 0.30 + rng.uniform(-0.03, 0.03)
    # Warm hair is thicker: a shape cue on top of the texture cue.
    thick = (1.55 if domain == "warm" else 1.25) + rng.uniform(-0.06, 0.06)

    face = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
    crown = ((xx - cx) / (rx * thick)) ** 2 + ((yy - cy) / (ry * thick)) ** 2 <= 1.0
    hair = crown & (yy < cy) & ~face

    labels = np.zeros((size, size), dtype=np.int64)
    labels[face] = 1
    labels[hair] = 2
    mask = RegionMask(labels, 3)

    img = np.zeros((3, size, size), dtype=np.float64)
    for region, name in enumerate(REGION_NAMES):
        base = np.array(_BASE_COLORS[domain][name]) + rng.uniform(-0.08, 0.08, size=3)
        sel = labels == region
        for c in range(3):
            img[c][sel] = base[c]
    if domain == "warm":
        # High-frequency speckle.
        img += rng.uniform(-0.22, 0.22, size=img.shape)
    else:
        # Smooth directional gradient plus faint noise.
        gx, gy = rng.uniform(-0.18, 0.18, size=2)
        img += gx * (xx - 0.5) + gy * (yy - 0.5)
        img += rng.uniform(-0.03, 0.03, size=img.shape)
    return np.clip(img, -1.0, 1.0), mask


def generate_synthetic(spec: SyntheticSpec, out_dir: str | Path) -> Path:
    """Write the synthetic dataset under ``out_dir`` and return the manifest
    path. Rerunning with the same spec produces byte-identical files."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)

    n_test = spec.num_test()
    if n_test >= spec.samples_per_domain:
        raise ValidationError(
            f"test fraction {spec.test_fraction} leaves no training samples of "
            f"{spec.samples_per_domain} per domain"
        )
    samples: dict[str, list[SampleRef]] = {"train": [], "test": []}
    for domain in DOMAIN_NAMES:
        for index in range(spec.samples_per_domain):
            stem = f"{domain}_{index:04d}"
            img, mask = _synthetic_sample(spec, domain, index)
            save_image(out_dir / "images" / f"{stem}.png", img)
            save_mask(out_dir / "masks" / f"{stem}.png", mask)
            split = "test" if index >= spec.samples_per_domain - n_test else "train"
            samples[split].append(SampleRef(stem, domain))

    manifest = DatasetManifest(
        root=out_dir,
        name="synthetic",
        num_regions=3,
        region_names=list(REGION_NAMES),
        domains=list(DOMAIN_NAMES),
        samples=samples,
    )
    return save_manifest(manifest)


# ---------------------------------------------------------------------------
# CelebAMask-HQ-style attribute merging


def merge_attribute_masks(
    attribute_masks: dict[str, np.ndarray],
    priority: list[str],
    labels: dict[str, int],
    background_label: int = 0,
) -> np.ndarray:
    """Merge per-attribute binary masks into one label map.

    Attributes are applied in ``priority`` order; a pixel keeps the label of
    the first attribute that claims it, and unclaimed pixels get
    ``background_label``.
    """
    unknown = [name for name in priority if name not in attribute_masks]
    if unknown:
        raise ValidationError(f"priority names {unknown} have no attribute mask")
    unlabeled = [name for name in priority if name not in labels]
    if unlabeled:
        raise ValidationError(f"priority names {unlabeled} have no target label")

    shape = next(iter(attribute_masks.values())).shape
    out = np.full(shape, background_label, dtype=np.int64)
    claimed = np.zeros(shape, dtype=bool)
    for name in priority:
        m = np.asarray(attribute_masks[name]).astype(bool)
        if m.shape != shape:
            raise ValidationError(f"attribute mask {name!r} has shape {m.shape}, expected {shape}")
        take = m & ~claimed
        out[take] = labels[name]
        claimed |= take
    return out
