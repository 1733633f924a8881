"""Figure and delimited-output rendering for evaluation runs.

Every report writes machine-readable output (JSON + CSV) next to a
rendered figure so runs can be diffed and eyeballed with the same
command.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import MetricReport


def render_evaluation(report: MetricReport, out_dir, top_n: int = 25) -> list[Path]:
    """Write metrics.json, per_concept.csv and an F1 bar chart.

    Returns the list of files written.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    metrics_path = out_dir / "metrics.json"
    metrics_path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    written.append(metrics_path)

    csv_path = out_dir / "per_concept.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["concept_id", "tp", "fp", "fn", "precision", "recall", "f1"])
        for cui in sorted(report.per_concept):
            c = report.per_concept[cui]
            writer.writerow([
                cui, c["tp"], c["fp"], c["fn"],
                f"{c['precision']:.6f}", f"{c['recall']:.6f}", f"{c['f1']:.6f}",
            ])
    written.append(csv_path)

    fig_path = out_dir / "f1_by_concept.png"
    ranked = sorted(
        report.per_concept.items(), key=lambda kv: (-kv[1]["f1"], kv[0])
    )[:top_n]
    fig, ax = plt.subplots(figsize=(10, 5))
    if ranked:
        labels = [cui for cui, _ in ranked]
        values = [c["f1"] for _, c in ranked]
        ax.bar(range(len(labels)), values, color="#4878a8")
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=60, ha="right", fontsize=7)
    if report.micro:
        ax.axhline(report.micro["f1"], color="#b04030", linestyle="--",
                   label=f"micro F1 = {report.micro['f1']:.3f}")
    if report.macro:
        ax.axhline(report.macro["f1"], color="#508050", linestyle=":",
                   label=f"macro F1 = {report.macro['f1']:.3f}")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("F1")
    ax.set_title("Per-concept F1 (top %d)" % top_n)
    ax.legend(loc="lower left")
    fig.tight_layout()
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)
    written.append(fig_path)
    return written


def render_learning_curve(results: dict[int, float], out_dir) -> list[Path]:
    """Write learning_curve.csv and a size-vs-F1 line plot."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    csv_path = out_dir / "learning_curve.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["train_docs_per_concept", "micro_f1"])
        for size in sorted(results):
            writer.writerow([size, f"{results[size]:.6f}"])
    written.append(csv_path)

    fig_path = out_dir / "learning_curve.png"
    sizes = sorted(results)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(sizes, [results[s] for s in sizes], marker="o", color="#4878a8")
    for s in sizes:
        ax.annotate(f"{results[s]:.2f}", (s, results[s]),
                    textcoords="offset points", xytext=(0, 8), fontsize=8)
    ax.set_xlabel("training documents per concept")
    ax.set_ylabel("micro F1")
    ax.set_ylim(0, 1.05)
    ax.set_title("Disambiguation learning curve")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)
    written.append(fig_path)
    return written


def render_meta_training(metrics: list[dict], out_dir, task_name: str) -> list[Path]:
    """Write per-epoch training metrics and a loss/F1 curve."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    csv_path = out_dir / f"meta_{task_name}_metrics.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "split", "loss", "macro_f1", "weighted_f1"])
        for rec in metrics:
            writer.writerow([
                rec["epoch"], rec["split"], f"{rec['loss']:.6f}",
                f"{rec['macro_f1']:.6f}", f"{rec['weighted_f1']:.6f}",
            ])
    written.append(csv_path)

    fig_path = out_dir / f"meta_{task_name}_curve.png"
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for split, style in (("train", "-"), ("test", "--")):
        recs = [m for m in metrics if m["split"] == split]
        if not recs:
            continue
        epochs = [m["epoch"] for m in recs]
        ax1.plot(epochs, [m["loss"] for m in recs], style, label=split)
        ax2.plot(epochs, [m["macro_f1"] for m in recs], style, label=split)
    ax1.set_xlabel("epoch"); ax1.set_ylabel("loss"); ax1.legend()
    ax2.set_xlabel("epoch"); ax2.set_ylabel("macro F1"); ax2.set_ylim(0, 1.05)
    ax2.legend()
    fig.suptitle(f"Context classifier training: {task_name}")
    fig.tight_layout()
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)
    written.append(fig_path)
    return written
