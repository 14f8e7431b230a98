"""Matplotlib rendering for the metrics report: per-pair histogram overlays
and a summary chart, written next to the delimited output."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import FrameBuffer, histogram


def render_histogram_pair(ref: FrameBuffer, test: FrameBuffer, path: str,
                          title: str = "") -> None:
    href = histogram(ref)
    htest = histogram(test)
    levels = np.arange(ref.levels)
    fig, ax = plt.subplots(figsize=(6.0, 3.4))
    ax.fill_between(levels, href, step="mid", alpha=0.55, label="reference")
    ax.fill_between(levels, htest, step="mid", alpha=0.55, label="test")
    ax.set_xlabel("pixel value")
    ax.set_ylabel("count")
    if title:
        ax.set_title(title, fontsize=10)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_summary(rows: list[dict], path: str) -> None:
    """Bar chart of the per-frame metrics, one group per metric."""
    if not rows:
        return
    metrics = [("eq_ratio", "EQ / EQ_max"), ("edr", "EDR"),
               ("npcr", "NPCR / 100"), ("uaci", "UACI / 100")]
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    idx = np.arange(len(rows))
    bar_w = 0.8 / len(metrics)
    for mi, (key, label) in enumerate(metrics):
        if key == "eq_ratio":
            values = [r["eq"] / r["eq_max"] if r["eq_max"] else 0.0 for r in rows]
        elif key in ("npcr", "uaci"):
            values = [r[key] / 100.0 for r in rows]
        else:
            values = [r[key] for r in rows]
        ax.bar(idx + mi * bar_w, values, bar_w, label=label)
    ax.set_xticks(idx + 0.4 - bar_w / 2)
    ax.set_xticklabels([str(r["frame"]) for r in rows], fontsize=8)
    ax.set_xlabel("frame")
    ax.set_ylabel("normalized score")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_report_figures(pairs: list[tuple[FrameBuffer, FrameBuffer, str]],
                          rows: list[dict], out_dir: str) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for ref, test, name in pairs:
        path = os.path.join(out_dir, f"{name}_hist.png")
        render_histogram_pair(ref, test, path, title=name)
        written.append(path)
    summary = os.path.join(out_dir, "summary.png")
    render_summary(rows, summary)
    written.append(summary)
    return written
