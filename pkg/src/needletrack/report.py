"""Report writers: metrics JSON / text table, loss CSV, and figures."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .harness import LatencyStats, Metrics


def metrics_to_dict(metrics: Metrics, config_digest: str = "") -> dict:
    return {
        "per_axis": {axis: {"mean_mm": getattr(metrics, axis).mean_mm,
                            "std_mm": getattr(metrics, axis).std_mm}
                     for axis in ("x", "y", "z")},
        "l2": {"mean_mm": metrics.l2.mean_mm, "std_mm": metrics.l2.std_mm},
        "n_test": metrics.n_test,
        "config_digest": config_digest,
    }


def metrics_table(metrics: Metrics) -> str:
    """Plain-text per-axis accuracy table (mean +/- std, mm)."""
    rows = [("x", metrics.x), ("y", metrics.y), ("z", metrics.z), ("L2-Norm", metrics.l2)]
    lines = [f"{'':<8}  Accuracy & Standard Deviation (mm)",
             "-" * 44]
    for label, stat in rows:
        lines.append(f"{label:<8}  {stat.mean_mm:8.4f} +/- {stat.std_mm:.4f}")
    lines.append("-" * 44)
    lines.append(f"n_test = {metrics.n_test}")
    return "\n".join(lines) + "\n"


def write_metrics(metrics: Metrics, json_path, txt_path=None, config_digest: str = "") -> None:
    payload = metrics_to_dict(metrics, config_digest)
    Path(json_path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    if txt_path is not None:
        Path(txt_path).write_text(metrics_table(metrics))


def write_loss_history(loss_history, csv_path) -> None:
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_mse"])
        for epoch, loss in enumerate(loss_history):
            writer.writerow([epoch, repr(float(loss))])


def read_loss_history(csv_path) -> list[float]:
    with open(csv_path, newline="") as fh:
        return [float(row["train_mse"]) for row in csv.DictReader(fh)]


def plot_loss_curve(loss_history, png_path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.arange(len(loss_history)), loss_history, lw=1.2)
    ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel("training MSE (normalized units)")
    ax.set_title("Training loss")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)


def plot_error_distribution(errors_mm: np.ndarray, png_path) -> None:
    """Histogram the signed per-axis errors and the L2 error, mm."""
    fig, axes = plt.subplots(1, 4, figsize=(12, 3), sharey=True)
    for k, (ax, label) in enumerate(zip(axes[:3], "xyz")):
        ax.hist(errors_mm[:, k], bins=30, color="tab:blue", alpha=0.8)
        ax.set_xlabel(f"{label} error (mm)")
        ax.axvline(0, color="k", lw=0.8)
    l2 = np.linalg.norm(errors_mm, axis=1)
    axes[3].hist(l2, bins=30, color="tab:orange", alpha=0.8)
    axes[3].set_xlabel("L2 error (mm)")
    axes[0].set_ylabel("count")
    fig.suptitle("Test-set tip position errors")
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)


def latency_to_dict(stats: LatencyStats) -> dict:
    return asdict(stats)


def write_latency(stats: LatencyStats, json_path) -> None:
    Path(json_path).write_text(json.dumps(latency_to_dict(stats), indent=2, sort_keys=True) + "\n")


def plot_latency(stats_list: list[LatencyStats], png_path) -> None:
    """Bar chart of mean/p50/p95 per configuration with the 20 ms reference line."""
    fig, ax = plt.subplots(figsize=(6, 4))
    labels = [f"{s.image_side} px" for s in stats_list]
    x = np.arange(len(stats_list))
    width = 0.25
    ax.bar(x - width, [s.mean_ms for s in stats_list], width, label="mean")
    ax.bar(x, [s.p50_ms for s in stats_list], width, label="p50")
    ax.bar(x + width, [s.p95_ms for s in stats_list], width, label="p95")
    ref = stats_list[0].reference_ms if stats_list else 20.0
    ax.axhline(ref, color="r", ls="--", lw=1, label=f"{ref:.0f} ms reference")
    ax.set_xticks(x, labels)
    ax.set_ylabel("per-frame time (ms)")
    ax.set_title("Inference latency")
    ax.legend()
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
