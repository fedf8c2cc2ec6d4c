"""Evaluation metrics: domain-classification accuracy, Fréchet distance
between Gaussian feature summaries, and a perceptual feature distance, all
over a pluggable feature extractor.

At desk scale the extractor is the penultimate layer of a small convolutional
classifier trained on the evaluation dataset itself, so Fréchet and
perceptual numbers are comparable only across models evaluated with the same
extractor ("relative-only"), never across papers.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .dataio import DatasetManifest, load_dataset, load_manifest
from .errors import ValidationError
from .losses import translate_full, translate_region
from .networks import Generator, onehot_from_labels


class DomainClassifier(nn.Module):
    """Three stride-2 conv layers, global average pooling, linear head."""

    def __init__(self, num_domains: int, base: int = 16):
        super().__init__()
        self.num_domains = num_domains
        self.conv1 = nn.Conv2d(3, base, 3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(base, 2 * base, 3, stride=2, padding=1)
        self.conv3 = nn.Conv2d(2 * base, 4 * base, 3, stride=2, padding=1)
        self.head = nn.Linear(4 * base, num_domains)
        self.feature_dim = 4 * base

    def layer_activations(self, x: Tensor) -> list[Tensor]:
        a1 = torch.relu(self.conv1(x))
        a2 = torch.relu(self.conv2(a1))
        a3 = torch.relu(self.conv3(a2))
        return [a1, a2, a3]

    def features(self, x: Tensor) -> Tensor:
        return self.layer_activations(x)[-1].mean(dim=(2, 3))

    def forward(self, x: Tensor) -> Tensor:
        return self.head(self.features(x))


def train_domain_classifier(
    images: np.ndarray,
    domains: np.ndarray,
    num_domains: int,
    seed: int = 0,
    epochs: int = 30,
    batch_size: int = 32,
    lr: float = 1e-3,
) -> DomainClassifier:
    """Train the desk-scale classifier; deterministic given the seed."""
    torch.manual_seed(seed)
    clf = DomainClassifier(num_domains)
    opt = torch.optim.Adam(clf.parameters(), lr=lr)
    x = torch.as_tensor(np.asarray(images), dtype=torch.float32)
    y = torch.as_tensor(np.asarray(domains), dtype=torch.long)
    rng = np.random.default_rng(seed)
    clf.train()
    for _ in range(epochs):
        order = rng.permutation(len(x))
        for start in range(0, len(x), batch_size):
            idx = torch.from_numpy(order[start : start + batch_size])
            opt.zero_grad()
            loss = F.cross_entropy(clf(x[idx]), y[idx])
            loss.backward()
            opt.step()
    clf.eval()
    return clf


@dataclass
class ClassifierFeatureExtractor:
    """Feature extractor backed by a trained DomainClassifier."""

    classifier: DomainClassifier
    name: str = "desk-classifier"
    version: str = "1"

    @property
    def feature_dim(self) -> int:
        return self.classifier.feature_dim

    def extract(self, images: Tensor | np.ndarray) -> np.ndarray:
        x = torch.as_tensor(np.asarray(images), dtype=torch.float32)
        with torch.no_grad():
            return self.classifier.features(x).numpy()

    def layers(self, images: Tensor | np.ndarray) -> list[Tensor]:
        x = torch.as_tensor(np.asarray(images), dtype=torch.float32)
        with torch.no_grad():
            return self.classifier.layer_activations(x)


def accuracy(classifier: DomainClassifier, images, target_domains) -> float:
    """Fraction of images the classifier assigns to their target domain."""
    x = torch.as_tensor(np.asarray(images), dtype=torch.float32)
    targets = torch.as_tensor(np.asarray(target_domains), dtype=torch.long)
    with torch.no_grad():
        preds = classifier(x).argmax(dim=1)
    return float((preds == targets).float().mean())


# ---------------------------------------------------------------------------
# Fréchet distance


@dataclass(frozen=True)
class GaussianSummary:
    mean: np.ndarray  # (D,)
    cov: np.ndarray  # (D, D), symmetric

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.cov, dtype=np.float64)
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ValidationError(
                f"summary shapes {mean.shape}/{cov.shape} are inconsistent"
            )
        if not np.allclose(cov, cov.T, atol=1e-8):
            raise ValidationError("covariance must be symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", (cov + cov.T) / 2.0)

    @classmethod
    def from_features(cls, feats: np.ndarray) -> "GaussianSummary":
        feats = np.asarray(feats, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] < 2:
            raise ValidationError(
                f"need a (M>=2, D) feature matrix, got shape {feats.shape}"
            )
        mean = feats.mean(axis=0)
        centered = feats - mean
        cov = centered.T @ centered / (feats.shape[0] - 1)
        return cls(mean, cov)


def _psd_root(mat: np.ndarray) -> np.ndarray:
    """Symmetric square root with negative eigenvalues clamped to zero."""
    vals, vecs = np.linalg.eigh(mat)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def frechet_distance(a: GaussianSummary, b: GaussianSummary) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}).

    The product root's trace is computed as Tr((S_a^{1/2} S_b S_a^{1/2})^{1/2})
    so only symmetric eigendecompositions are needed; negative eigenvalues
    from numerical noise are clamped at zero, as is the final value.
    """
    if a.mean.shape != b.mean.shape:
        raise ValidationError(
            f"summary dimensions differ: {a.mean.shape} vs {b.mean.shape}"
        )
    diff = a.mean - b.mean
    root_a = _psd_root(a.cov)
    inner = root_a @ b.cov @ root_a
    inner = (inner + inner.T) / 2.0
    vals = np.clip(np.linalg.eigvalsh(inner), 0.0, None)
    tr_root = float(np.sqrt(vals).sum())
    fd = float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * tr_root)
    return max(fd, 0.0)


# ---------------------------------------------------------------------------
# perceptual distance


def _normalize_channels(feat: Tensor, eps: float = 1e-10) -> Tensor:
    return feat / torch.sqrt((feat * feat).sum(dim=1, keepdim=True) + eps)


def perceptual_distances(extractor, imgs_a, imgs_b) -> np.ndarray:
    """Per-sample mean L1 distance between unit-normalized feature stacks,
    averaged over layers. Returns shape (N,)."""
    layers_a = extractor.layers(imgs_a)
    layers_b = extractor.layers(imgs_b)
    per_layer = []
    for fa, fb in zip(layers_a, layers_b):
        if fa.shape != fb.shape:
            raise ValidationError("images must share a shape for the perceptual distance")
        d = (_normalize_channels(fa) - _normalize_channels(fb)).abs().mean(dim=(1, 2, 3))
        per_layer.append(d)
    return torch.stack(per_layer, dim=0).mean(dim=0).numpy()


def perceptual_distance(extractor, img_a, img_b) -> float:
    """Perceptual distance between two single images (3, H, W)."""
    a = np.asarray(img_a)[None] if np.asarray(img_a).ndim == 3 else np.asarray(img_a)
    b = np.asarray(img_b)[None] if np.asarray(img_b).ndim == 3 else np.asarray(img_b)
    out = perceptual_distances(extractor, a, b)
    if out.size != 1:
        raise ValidationError("perceptual_distance expects a single image pair")
    return float(out[0])


# ---------------------------------------------------------------------------
# whole-model evaluation


@dataclass
class SamplePanel:
    """One row of the report's translation figure."""

    content: np.ndarray
    style: np.ndarray
    full: np.ndarray
    region: np.ndarray
    source_domain: str
    target_domain: str


@dataclass
class EvaluationReport:
    accuracy: float
    fid_avg: float
    perceptual_avg: float
    leakage: float
    region_change_inside: float
    region_change_outside: float
    fid_pairs: dict[str, float]
    num_test_images: int
    num_style_refs: int
    leakage_region: str
    feature_space: str
    config_hash: str
    checkpoint_iteration: int
    seed: int
    samples: list[SamplePanel] = field(default_factory=list, repr=False)

    def to_rows(self) -> list[tuple[str, str]]:
        """Stable key/value rows for the delimited report."""
        rows = [
            ("accuracy", repr(self.accuracy)),
            ("fid_avg", repr(self.fid_avg)),
            ("perceptual_avg", repr(self.perceptual_avg)),
            ("leakage", repr(self.leakage)),
            ("config_hash", self.config_hash),
            ("region_change_inside", repr(self.region_change_inside)),
            ("region_change_outside", repr(self.region_change_outside)),
        ]
        for pair in sorted(self.fid_pairs):
            rows.append((f"fid_{pair}", repr(self.fid_pairs[pair])))
        rows += [
            ("num_test_images", str(self.num_test_images)),
            ("num_style_refs", str(self.num_style_refs)),
            ("leakage_region", self.leakage_region),
            ("feature_space", self.feature_space),
            ("checkpoint_iteration", str(self.checkpoint_iteration)),
            ("seed", str(self.seed)),
        ]
        return rows


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


def _batched(n: int, size: int):
    for start in range(0, n, size):
        yield slice(start, min(start + size, n))


def _generate_batch(gen: Generator, x, cm, s, sm) -> np.ndarray:
    with torch.no_grad():
        out = translate_full(gen, x, cm, s, sm)
    return out.numpy()


def evaluate_model(
    gen: Generator,
    manifest: DatasetManifest | str,
    extractor: ClassifierFeatureExtractor,
    classifier: DomainClassifier | None = None,
    num_style_refs: int = 10,
    seed: int = 0,
    leakage_region: str = "hair",
    cfg: dict | None = None,
    checkpoint_iteration: int = 0,
    batch_size: int = 32,
    num_sample_panels: int = 4,
) -> EvaluationReport:
    """Run the evaluation protocol over the test split.

    Every test image is translated into each other domain using
    ``num_style_refs`` style images sampled from that domain's test split;
    accuracy is the fraction of translations classified as their target,
    Fréchet distances are computed per ordered domain pair against the real
    training images of the target domain and averaged, and the perceptual
    distance is averaged between each translation and its style reference.
    The leakage score translates only ``leakage_region`` and measures the
    mean absolute pixel change outside that region.
    """
    if not isinstance(manifest, DatasetManifest):
        manifest = load_manifest(manifest)
    classifier = classifier if classifier is not None else extractor.classifier
    test = load_dataset(manifest, "test")
    train = load_dataset(manifest, "train")
    rng = np.random.default_rng(seed)
    gen.eval()

    num_domains = len(manifest.domains)
    region_idx = manifest.region_index(leakage_region)
    images_t = torch.from_numpy(test.images)
    masks_t = torch.from_numpy(test.masks)

    real_summaries = {}
    for d in range(num_domains):
        feats = extractor.extract(train.images[train.indices_for_domain(d)])
        real_summaries[d] = GaussianSummary.from_features(feats)

    fid_pairs: dict[str, float] = {}
    correct, total = 0, 0
    perceptual_vals: list[np.ndarray] = []
    panels: list[SamplePanel] = []

    for a in range(num_domains):
        content_idx = test.indices_for_domain(a)
        if content_idx.size == 0:
            continue
        for b in range(num_domains):
            if b == a:
                continue
            style_pool = test.indices_for_domain(b)
            if style_pool.size == 0:
                continue
            pair_content = np.repeat(content_idx, num_style_refs)
            pair_style = rng.choice(
                style_pool,
                size=pair_content.size,
                replace=style_pool.size < pair_content.size or num_style_refs > 1,
            )
            translated = np.empty(
                (pair_content.size, *test.images.shape[1:]), dtype=np.float32
            )
            for sl in _batched(pair_content.size, batch_size):
                translated[sl] = _generate_batch(
                    gen,
                    images_t[pair_content[sl]],
                    masks_t[pair_content[sl]],
                    images_t[pair_style[sl]],
                    masks_t[pair_style[sl]],
                )
            acc_preds = accuracy(classifier, translated, np.full(len(translated), b))
            correct += acc_preds * len(translated)
            total += len(translated)
            feats = extractor.extract(translated)
            fid_pairs[f"{manifest.domains[a]}_to_{manifest.domains[b]}"] = frechet_distance(
                GaussianSummary.from_features(feats), real_summaries[b]
            )
            for sl in _batched(pair_content.size, batch_size):
                perceptual_vals.append(
                    perceptual_distances(
                        extractor, translated[sl], test.images[pair_style[sl]]
                    )
                )
            if len(panels) < num_sample_panels:
                ci, si = pair_content[0], pair_style[0]
                with torch.no_grad():
                    region_img = translate_region(
                        gen,
                        images_t[ci : ci + 1],
                        masks_t[ci : ci + 1],
                        images_t[si : si + 1],
                        masks_t[si : si + 1],
                        region_idx,
                    ).numpy()[0]
                panels.append(
                    SamplePanel(
                        content=test.images[ci],
                        style=test.images[si],
                        full=translated[0],
                        region=region_img,
                        source_domain=manifest.domains[a],
                        target_domain=manifest.domains[b],
                    )
                )

    # Leakage: translate only the target region, measure change in/outside.
    inside_vals, outside_vals = [], []
    lk_targets = np.array(
        [rng.choice([d for d in range(num_domains) if d != a]) for a in test.domains]
    )
    lk_styles = np.array(
        [int(rng.choice(test.indices_for_domain(b))) for b in lk_targets]
    )
    for sl in _batched(len(test), batch_size):
        x = images_t[sl]
        with torch.no_grad():
            r_hat = translate_region(
                gen, x, masks_t[sl], images_t[lk_styles[sl]], masks_t[lk_styles[sl]], region_idx
            )
        delta = (r_hat - x).abs()
        onehot = onehot_from_labels(masks_t[sl], test.num_regions, dtype=delta.dtype)
        inside_m = onehot[:, region_idx : region_idx + 1]
        in_count = inside_m.sum(dim=(1, 2, 3)).clamp_min(1.0) * delta.shape[1]
        out_count = (1 - inside_m).sum(dim=(1, 2, 3)).clamp_min(1.0) * delta.shape[1]
        inside_vals.append(((delta * inside_m).sum(dim=(1, 2, 3)) / in_count).numpy())
        outside_vals.append(((delta * (1 - inside_m)).sum(dim=(1, 2, 3)) / out_count).numpy())

    inside = float(np.concatenate(inside_vals).mean())
    outside = float(np.concatenate(outside_vals).mean())

    return EvaluationReport(
        accuracy=float(correct / max(total, 1)),
        fid_avg=float(np.mean(list(fid_pairs.values()))) if fid_pairs else float("nan"),
        perceptual_avg=float(np.concatenate(perceptual_vals).mean()),
        leakage=outside,
        region_change_inside=inside,
        region_change_outside=outside,
        fid_pairs=fid_pairs,
        num_test_images=len(test),
        num_style_refs=num_style_refs,
        leakage_region=leakage_region,
        feature_space=f"{extractor.name} v{extractor.version} (relative-only)",
        config_hash=config_hash(cfg or {}),
        checkpoint_iteration=checkpoint_iteration,
        seed=seed,
        samples=panels,
    )
