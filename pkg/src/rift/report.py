"""Report emission: a delimited key,value file plus matplotlib figures
rendered alongside it (sample translation grid, per-pair Fréchet bars,
in/out-of-region change, training loss curves)."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import EvaluationReport


def write_report(report: EvaluationReport, path: str | Path) -> Path:
    """Write the stable key,value rows as CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("key", "value"))
        writer.writerows(report.to_rows())
    return path


def _to_display(img: np.ndarray) -> np.ndarray:
    return np.clip((img.transpose(1, 2, 0) + 1.0) / 2.0, 0.0, 1.0)


def render_translation_grid(report: EvaluationReport, path: str | Path) -> Path | None:
    if not report.samples:
        return None
    cols = ["content", "style", "full translation", f"{report.leakage_region} only"]
    rows = len(report.samples)
    fig, axes = plt.subplots(rows, 4, figsize=(8, 2.1 * rows), squeeze=False)
    for r, panel in enumerate(report.samples):
        for c, img in enumerate((panel.content, panel.style, panel.full, panel.region)):
            ax = axes[r][c]
            ax.imshow(_to_display(img))
            ax.set_xticks([])
            ax.set_yticks([])
            if r == 0:
                ax.set_title(cols[c], fontsize=9)
        axes[r][0].set_ylabel(
            f"{panel.source_domain}→{panel.target_domain}", fontsize=8
        )
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)


def render_fid_pairs(report: EvaluationReport, path: str | Path) -> Path:
    names = sorted(report.fid_pairs)
    values = [report.fid_pairs[n] for n in names]
    fig, ax = plt.subplots(figsize=(1.6 + 1.2 * max(len(names), 1), 3.2))
    ax.bar(range(len(names)), values, color="#4878a8")
    ax.axhline(report.fid_avg, color="#b04030", linestyle="--", label="average")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels([n.replace("_to_", "→") for n in names], fontsize=8)
    ax.set_ylabel("Fréchet distance (relative-only)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)


def render_region_change(report: EvaluationReport, path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(3.6, 3.2))
    ax.bar(
        [0, 1],
        [report.region_change_inside, report.region_change_outside],
        color=["#4878a8", "#b04030"],
    )
    ax.set_xticks([0, 1])
    ax.set_xticklabels(
        [f"inside {report.leakage_region}", "outside (leakage)"], fontsize=8
    )
    ax.set_ylabel("mean abs pixel change")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)


def render_report_figures(report: EvaluationReport, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    p = render_translation_grid(report, out_dir / "translation_grid.png")
    if p:
        paths.append(p)
    paths.append(render_fid_pairs(report, out_dir / "fid_pairs.png"))
    paths.append(render_region_change(report, out_dir / "region_change.png"))
    return paths


def render_loss_curves(log_csv: str | Path, path: str | Path) -> Path:
    """Plot each loss component over iterations from a training log."""
    with open(log_csv, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"training log {log_csv} is empty")
    iters = np.array([int(r["iteration"]) for r in rows])
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    for key in ("loss_d", "loss_gan", "loss_recon", "loss_fm", "loss_rm"):
        ax.plot(iters, [float(r[key]) for r in rows], label=key, linewidth=0.9)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.legend(fontsize=8, ncol=3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)
