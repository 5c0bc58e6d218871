"""Vector (SVG) figures for the experiment summaries."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "psogsim"  # stable element ids

COLORS = {"FS": "#1f77b4", "FT": "#d62728"}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _by(summary, regimen, xkey):
    rows = [r for r in summary if r["regimen"] == regimen]
    return ([r[xkey] for r in rows], np.array([r["mean_deg"] for r in rows]),
            np.array([r["std_deg"] for r in rows]))


def plot_data_scale(summary, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for reg in sorted({r["regimen"] for r in summary}):
        x, m, s = _by(summary, reg, "fraction")
        ax.errorbar(np.array(x) * 100, m, yerr=s, marker="o", capsize=3, label=reg, color=COLORS.get(reg))
    ax.set_xlabel("training data (% of superset)")
    ax.set_ylabel("spatial accuracy (deg)")
    ax.legend()
    return _save(fig, path)


def plot_shift_bins(summary, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    labels = ["[0, 1]", "(1, 1.5]", "(1.5, 2]", "> 2"]
    for k, reg in enumerate(sorted({r["regimen"] for r in summary})):
        x, m, s = _by(summary, reg, "bin")
        pos = np.array([int(b[1:]) for b in x]) + (k - 0.5) * 0.15
        ax.errorbar(pos, m, yerr=s, marker="o", capsize=3, linestyle="none", label=reg,
                    color=COLORS.get(reg))
    ax.set_xticks([1, 2, 3, 4], labels)
    ax.set_xlabel("shift magnitude (mm)")
    ax.set_ylabel("spatial accuracy (deg)")
    ax.legend()
    return _save(fig, path)


def plot_epoch_curves(summary, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for reg in ("FS", "FT"):
        x, m, s = _by(summary, reg, "epoch")
        x = np.array(x, dtype=float)
        keep = x > 0
        ax.plot(x[keep], m[keep], marker="o", label=reg, color=COLORS[reg])
        ax.fill_between(x[keep], (m - s)[keep], (m + s)[keep], alpha=0.15, color=COLORS[reg])
    ax.set_xscale("log")
    ax.set_xlabel("training epochs")
    ax.set_ylabel("validation accuracy (deg)")
    ax.legend()
    return _save(fig, path)


def plot_subject_curves(rows, path) -> Path:
    """Per-subject FT curves (seed-averaged), including the pre-training-only point."""
    ft = [r for r in rows if r["regimen"] == "FT"]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for sid in sorted({r["subject"] for r in ft}):
        pts: dict[int, list[float]] = {}
        for r in ft:
            if r["subject"] == sid:
                pts.setdefault(r["epoch"], []).append(r["val_accuracy_deg"])
        ep = sorted(pts)
        ax.plot([e + 1 for e in ep], [np.mean(pts[e]) for e in ep], linewidth=1, label=sid)
    ax.set_xscale("log")
    ax.set_xlabel("training epochs + 1")
    ax.set_ylabel("FT validation accuracy (deg)")
    ax.legend(fontsize=6, ncol=2)
    return _save(fig, path)


def plot_extended(summary, path) -> Path:
    fig, ax = plt.subplots(figsize=(3.5, 3.5))
    regs = [r["regimen"] for r in summary]
    ax.bar(regs, [r["mean_deg"] for r in summary], yerr=[r["std_deg"] for r in summary], capsize=4,
           color=[COLORS.get(r) for r in regs])
    ax.set_ylabel("spatial accuracy (deg)")
    return _save(fig, path)


def plot_results(results: dict, out: Path) -> list[Path]:
    out = Path(out)
    files = []
    if "data-scale" in results:
        files.append(plot_data_scale(results["data-scale"].summary, out / "data_scale.svg"))
    if "shift-bins" in results:
        files.append(plot_shift_bins(results["shift-bins"].summary, out / "shift_bins.svg"))
    if "extended-range" in results:
        files.append(plot_extended(results["extended-range"].summary, out / "extended_range.svg"))
    if "epoch-curves" in results:
        files.append(plot_epoch_curves(results["epoch-curves"].summary, out / "epoch_curves.svg"))
        files.append(plot_subject_curves(results["epoch-curves"].rows, out / "epoch_subjects.svg"))
    return files
