"""Report rendering: JSON plus CSV and matplotlib figures next to it."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .quality import MetricReport

_METRIC_LABELS = {
    "l1": "L1 (0-255 scale, lower is better)",
    "psnr": "PSNR (dB, higher is better)",
    "perceptual": "perceptual distance (lower is better)",
}


def write_report(report: MetricReport, out_json: str | Path, figures: bool = True) -> list[Path]:
    """Write report.json, a per-image CSV alongside, and metric histograms.

    Returns the list of written paths.
    """
    out_json = Path(out_json)
    out_json.parent.mkdir(parents=True, exist_ok=True)
    written = [out_json]
    out_json.write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n")

    out_csv = out_json.with_suffix(".csv")
    with out_csv.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["name", "l1", "psnr", "perceptual"])
        for m in report.per_image:
            writer.writerow([m.name, repr(m.l1), repr(m.psnr), repr(m.perceptual)])
    written.append(out_csv)

    if figures:
        written.extend(_write_figures(report, out_json))
    return written


def _write_figures(report: MetricReport, out_json: Path) -> list[Path]:
    written = []
    values = {
        "l1": [m.l1 for m in report.per_image],
        "psnr": [m.psnr for m in report.per_image],
        "perceptual": [m.perceptual for m in report.per_image],
    }
    means = {"l1": report.mean_l1, "psnr": report.mean_psnr, "perceptual": report.mean_perceptual}
    for key, vals in values.items():
        fig, ax = plt.subplots(figsize=(5, 3.2))
        bins = min(30, max(5, len(vals) // 2 + 1))
        ax.hist(vals, bins=bins, color="#4878b0", edgecolor="white")
        ax.axvline(means[key], color="#c44e52", linestyle="--",
                   label=f"mean = {means[key]:.3f}")
        ax.set_xlabel(_METRIC_LABELS[key])
        ax.set_ylabel("images")
        ax.set_title(f"{key} over {len(vals)} images ({report.extractor_tag})")
        ax.legend(frameon=False)
        fig.tight_layout()
        path = out_json.with_name(f"{out_json.stem}_{key}.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written
