"""Report writers: delimited outputs plus matplotlib figures rendered to files.

Every figure goes next to the CSV/JSON it illustrates.  PNG only; the
files carry no timestamps so reruns with the same seed are byte-identical.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_PNG_META = {"Software": "sourceloc"}

METRIC_NAMES = ("precision", "recall", "f1", "auc")


def _save(fig, path) -> None:
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def write_trials_csv(path, reports: dict) -> None:
    """One row per (method, trial): PR then RE, then F1 and AUC."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "trial", "precision", "recall", "f1", "auc"])
        for method in sorted(reports):
            rep = reports[method]
            for t in range(rep.trials):
                writer.writerow(
                    [method, t, repr(rep.precision[t]), repr(rep.recall[t]), repr(rep.f1[t]), repr(rep.auc[t])]
                )


def write_summary_json(path, summary: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_scores(path, scores, binary) -> None:
    """Per-node dump: index, relaxed score, binary decision."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node", "score", "binary"])
        for i, (s, b) in enumerate(zip(scores, binary)):
            writer.writerow([i, repr(float(s)), int(b)])


def write_loss_csv(path, rows, header) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def write_scaling_csv(path, rows) -> None:
    write_loss_csv(path, rows, ["num_nodes", "train_seconds", "infer_seconds"])


# figures -------------------------------------------------------------------


def plot_loss_curves(path, traces: dict) -> None:
    """Training-loss curves; traces maps a label to a per-epoch series."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, series in sorted(traces.items()):
        ax.plot(range(len(series)), series, label=label, linewidth=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def plot_metric_bars(path, reports: dict) -> None:
    """Grouped mean +/- std bars for every metric and method."""
    methods = sorted(reports)
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.8 / max(1, len(methods))
    xs = range(len(METRIC_NAMES))
    for i, method in enumerate(methods):
        rep = reports[method]
        means = [rep.mean(m) for m in METRIC_NAMES]
        stds = [rep.std(m) for m in METRIC_NAMES]
        ax.bar([x + i * width for x in xs], means, width=width, yerr=stds, capsize=3, label=method)
    ax.set_xticks([x + width * (len(methods) - 1) / 2 for x in xs])
    ax.set_xticklabels(METRIC_NAMES)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.legend()
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def plot_scaling(path, rows) -> None:
    sizes = [r[0] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(sizes, [r[1] for r in rows], marker="o", label="train")
    ax.plot(sizes, [r[2] for r in rows], marker="s", label="infer")
    ax.set_xlabel("nodes")
    ax.set_ylabel("seconds")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def plot_score_profile(path, scores, threshold_value: float) -> None:
    """Sorted relaxed scores with the decision threshold marked."""
    ordered = sorted(scores, reverse=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(len(ordered)), ordered, drawstyle="steps-post")
    ax.axhline(threshold_value, color="crimson", linestyle="--", linewidth=1, label="threshold")
    ax.set_xlabel("node rank")
    ax.set_ylabel("score")
    ax.set_ylim(-0.02, 1.02)
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
