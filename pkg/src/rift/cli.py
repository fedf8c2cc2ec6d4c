"""Command line entry points.

Every command echoes its resolved configuration and seed to stderr before
doing anything; stdout carries only result paths (and the report rows for
``evaluate``). Exit codes: 0 success, 2 validation/usage error, 3
runtime/numerical failure.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click
import numpy as np
import torch

from . import dataio, metrics, report, training
from .errors import TrainingDiverged, ValidationError
from .losses import translate_full, translate_region

ENV_DATA_ROOT = "RIFT_DATA_ROOT"


def _echo_config(name: str, cfg: dict) -> None:
    click.echo(f"[{name}] resolved config: {json.dumps(cfg, sort_keys=True)}", err=True)


def _default_data_root() -> str:
    return os.environ.get(ENV_DATA_ROOT, "data")


def _run(name: str, fn) -> None:
    try:
        fn()
    except ValidationError as e:
        click.echo(f"{name}: validation error: {e}", err=True)
        sys.exit(2)
    except TrainingDiverged as e:
        click.echo(f"{name}: training diverged: {e}", err=True)
        if e.snapshot_path:
            click.echo(f"{name}: diagnostic snapshot at {e.snapshot_path}", err=True)
        sys.exit(3)
    except Exception as e:  # pragma: no cover - defensive
        click.echo(f"{name}: runtime failure: {e}", err=True)
        sys.exit(3)


@click.group()
def main():
    """Region-wise image translation."""


@main.command("synth-data")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help=f"Output directory (default: ${ENV_DATA_ROOT}/synthetic or data/synthetic).")
@click.option("--image-size", default=32, show_default=True)
@click.option("--samples-per-domain", default=100, show_default=True)
@click.option("--test-fraction", default=0.2, show_default=True)
@click.option("--seed", default=7, show_default=True)
def cmd_synth_data(out_dir, image_size, samples_per_domain, test_fraction, seed):
    """Generate the two-domain, three-region synthetic dataset."""
    out_dir = out_dir or str(Path(_default_data_root()) / "synthetic")
    spec = dataio.SyntheticSpec(
        image_size=image_size,
        samples_per_domain=samples_per_domain,
        test_fraction=test_fraction,
        seed=seed,
    )
    _echo_config("synth-data", {"out": out_dir, **spec.__dict__})

    def go():
        manifest_path = dataio.generate_synthetic(spec, out_dir)
        click.echo(str(manifest_path))

    _run("synth-data", go)


@main.command("train")
@click.option("--data", "data_root", type=click.Path(), default=None,
              help=f"Dataset directory (default: ${ENV_DATA_ROOT}/synthetic).")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--preset", type=click.Choice(sorted(training.PRESETS)), default="desk",
              show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON file overriding preset fields.")
@click.option("--seed", type=int, default=None)
@click.option("--iterations", type=int, default=None)
@click.option("--lambda-rm", type=float, default=None,
              help="Override the region matching weight (for ablations).")
@click.option("--resume", "resume_from", type=click.Path(exists=True), default=None)
def cmd_train(data_root, out_dir, preset, config_path, seed, iterations, lambda_rm,
              resume_from):
    """Train a translation model and write checkpoints, log and loss curves."""
    overrides: dict = {}
    if config_path:
        overrides.update(json.loads(Path(config_path).read_text()))
    data_root = data_root or overrides.pop("data_root", None) or str(
        Path(_default_data_root()) / "synthetic"
    )
    overrides.pop("out_dir", None)
    if seed is not None:
        overrides["seed"] = seed
    if iterations is not None:
        overrides["max_iterations"] = iterations
    if lambda_rm is not None:
        weights = overrides.get("weights", {})
        if not isinstance(weights, dict):
            weights = weights.to_dict()
        weights["lambda_rm"] = lambda_rm
        overrides["weights"] = weights

    def go():
        config = training.preset_config(
            preset, data_root=str(data_root), out_dir=str(out_dir), **overrides
        )
        _echo_config("train", json.loads(config.to_json()))
        click.echo(f"[train] seed: {config.seed}", err=True)
        final = training.fit(config, resume_from=resume_from)
        curves = report.render_loss_curves(
            Path(out_dir) / "log.csv", Path(out_dir) / "loss_curves.png"
        )
        click.echo(str(final))
        click.echo(str(curves))

    _run("train", go)


def _load_pair(image_path, mask_path, num_regions):
    img = dataio.load_image(image_path)
    mask = dataio.load_mask(mask_path, num_regions)
    if img.shape[1:] != mask.shape:
        raise ValidationError(
            f"image dims {img.shape[1:]} do not match mask dims {mask.shape}"
        )
    return (
        torch.from_numpy(img[None].astype(np.float32)),
        torch.from_numpy(mask.labels[None]),
    )


def _translate_command(content, mask, style, style_mask, checkpoint_path, out,
                       regions=None):
    gen, _ = training.load_generator(checkpoint_path)
    num_regions = gen.cfg.num_regions
    x, cm = _load_pair(content, mask, num_regions)
    s, sm = _load_pair(style, style_mask, num_regions)
    with torch.no_grad():
        if regions is None:
            out_img = translate_full(gen, x, cm, s, sm)
        else:
            out_img = translate_region(gen, x, cm, s, sm, regions)
    dataio.save_image(out, out_img.numpy()[0])
    click.echo(str(out))


@main.command("translate")
@click.option("--content", type=click.Path(exists=True), required=True)
@click.option("--mask", type=click.Path(exists=True), required=True)
@click.option("--style", type=click.Path(exists=True), required=True)
@click.option("--style-mask", type=click.Path(exists=True), required=True)
@click.option("--checkpoint", "checkpoint_path", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
def cmd_translate(content, mask, style, style_mask, checkpoint_path, out):
    """Translate every region of the content image to the style image's styles."""
    _echo_config("translate", {
        "content": content, "mask": mask, "style": style, "style_mask": style_mask,
        "checkpoint": checkpoint_path, "out": out,
    })
    _run("translate", lambda: _translate_command(
        content, mask, style, style_mask, checkpoint_path, out
    ))


def _parse_regions(raw: str, num_regions: int) -> list[int]:
    raw = raw.strip()
    if not raw:
        raise ValidationError("--regions must name at least one region")
    if raw.lower() == "all":
        return list(range(num_regions))
    try:
        regions = [int(part) for part in raw.split(",") if part.strip() != ""]
    except ValueError:
        raise ValidationError(f"cannot parse region list {raw!r}") from None
    if not regions:
        raise ValidationError("--regions must name at least one region")
    return regions


@main.command("translate-region")
@click.option("--content", type=click.Path(exists=True), required=True)
@click.option("--mask", type=click.Path(exists=True), required=True)
@click.option("--style", type=click.Path(exists=True), required=True)
@click.option("--style-mask", type=click.Path(exists=True), required=True)
@click.option("--checkpoint", "checkpoint_path", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--regions", required=True,
              help="Comma-separated region indices, or 'all'.")
def cmd_translate_region(content, mask, style, style_mask, checkpoint_path, out, regions):
    """Translate only the listed regions, keeping all others untouched."""
    _echo_config("translate-region", {
        "content": content, "mask": mask, "style": style, "style_mask": style_mask,
        "checkpoint": checkpoint_path, "out": out, "regions": regions,
    })

    def go():
        gen, _ = training.load_generator(checkpoint_path)
        region_list = _parse_regions(regions, gen.cfg.num_regions)
        _translate_command(
            content, mask, style, style_mask, checkpoint_path, out, regions=region_list,
        )

    _run("translate-region", go)


@main.command("evaluate")
@click.option("--checkpoint", "checkpoint_path", type=click.Path(exists=True), required=True)
@click.option("--data", "data_root", type=click.Path(), default=None,
              help=f"Dataset directory (default: ${ENV_DATA_ROOT}/synthetic).")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--style-refs", default=10, show_default=True,
              help="Style images sampled per test image and target domain.")
@click.option("--seed", default=0, show_default=True)
@click.option("--leakage-region", default="hair", show_default=True)
def cmd_evaluate(checkpoint_path, data_root, out_dir, style_refs, seed, leakage_region):
    """Evaluate a checkpoint: report.csv plus figures in the output directory."""
    data_root = data_root or str(Path(_default_data_root()) / "synthetic")
    _echo_config("evaluate", {
        "checkpoint": checkpoint_path, "data": data_root, "out": out_dir,
        "style_refs": style_refs, "seed": seed, "leakage_region": leakage_region,
    })

    def go():
        gen, loaded = training.load_generator(checkpoint_path)
        manifest = dataio.load_manifest(data_root)
        train_split = dataio.load_dataset(manifest, "train")
        classifier = metrics.train_domain_classifier(
            train_split.images, train_split.domains, len(manifest.domains), seed=seed
        )
        extractor = metrics.ClassifierFeatureExtractor(classifier)
        result = metrics.evaluate_model(
            gen,
            manifest,
            extractor,
            num_style_refs=style_refs,
            seed=seed,
            leakage_region=leakage_region,
            cfg=loaded["config"],
            checkpoint_iteration=loaded["iteration"],
        )
        out = Path(out_dir)
        report_path = report.write_report(result, out / "report.csv")
        report.render_report_figures(result, out)
        click.echo(str(report_path))
        for key, value in result.to_rows():
            click.echo(f"{key},{value}")

    _run("evaluate", go)


if __name__ == "__main__":
    main()
