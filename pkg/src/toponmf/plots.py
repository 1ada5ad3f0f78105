"""Residue/similarity scatter plots, one panel per class.

Each true class gets a self-contained SVG (S score on x, R score on y,
both in [0, 1], points colored by the aligned predicted label) plus the
backing CSV with the plotted rows.
"""

from __future__ import annotations

import csv
import re
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .evaluation import EvalReport

# stable ids inside the SVG output so reruns produce identical files
matplotlib.rcParams["svg.hashsalt"] = "toponmf"


def _safe_name(label: str) -> str:
    cleaned = re.sub(r"[^A-Za-z0-9_.-]+", "_", label).strip("_")
    return cleaned or "class"


def _color_table(labels: list[str]) -> dict[str, tuple]:
    cmap = plt.get_cmap("tab20" if len(labels) > 10 else "tab10")
    return {lab: cmap(i % cmap.N) for i, lab in enumerate(labels)}


def emit_plots(report: EvalReport, out_dir) -> list[str]:
    """Write one RS scatter SVG + CSV per true class; returns the paths."""
    if report.rs is None:
        raise ValueError("report carries no residue/similarity scores")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    palette = _color_table(sorted(set(report.aligned_labels)))
    written = []
    for cls in report.rs.classes:
        members = [j for j, lab in enumerate(report.true_labels) if lab == cls]
        stem = out / f"rs_{_safe_name(cls)}"

        csv_path = stem.with_suffix(".csv")
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                ["cell_id", "true_label", "aligned_label", "s_score", "r_score"]
            )
            for j in members:
                writer.writerow(
                    [
                        report.cell_ids[j],
                        report.true_labels[j],
                        report.aligned_labels[j],
                        repr(float(report.rs.s_scores[j])),
                        repr(float(report.rs.r_scores[j])),
                    ]
                )

        fig, ax = plt.subplots(figsize=(4.0, 4.0))
        for lab in sorted({report.aligned_labels[j] for j in members}):
            idx = [j for j in members if report.aligned_labels[j] == lab]
            ax.scatter(
                report.rs.s_scores[idx],
                report.rs.r_scores[idx],
                s=14,
                color=palette[lab],
                label=lab,
                edgecolors="none",
            )
        ax.set_xlim(0.0, 1.0)
        ax.set_ylim(0.0, 1.0)
        ax.set_xlabel("S score")
        ax.set_ylabel("R score")
        ax.set_title(str(cls))
        if members:
            ax.legend(loc="lower left", fontsize=8, frameon=False)
        fig.tight_layout()
        svg_path = stem.with_suffix(".svg")
        fig.savefig(svg_path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.extend([str(svg_path), str(csv_path)])
    return written
