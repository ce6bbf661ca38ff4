"""Matplotlib figure rendering for evaluation reports.

The eval report path can write two figures next to the delimited output: a
grouped bar chart of Pass@k vs Exec@k, and the per-task pass/exec counts in
stream order (which is where the memory's cross-task learning shows up).
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import MetricReport


def render_report_figures(report: MetricReport, out_dir: str) -> list[str]:
    """Write the report figures into out_dir; returns the created paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = [
        _render_metric_bars(report, os.path.join(out_dir, "pass_exec_at_k.png")),
        _render_stream_counts(report, os.path.join(out_dir, "per_task_counts.png")),
    ]
    return paths


def _render_metric_bars(report: MetricReport, path: str) -> str:
    ks = sorted(report.pass_at)
    x = range(len(ks))
    width = 0.38
    fig, ax = plt.subplots(figsize=(6, 4))
    pass_values = [100 * report.pass_at[k] for k in ks]
    exec_values = [100 * report.exec_at[k] for k in ks]
    ax.bar([i - width / 2 for i in x], pass_values, width, label="Pass@k", color="#2d7dd2")
    ax.bar([i + width / 2 for i in x], exec_values, width, label="Exec@k", color="#97cc04")
    for i, v in zip(x, pass_values):
        ax.text(i - width / 2, v + 1, f"{v:.2f}", ha="center", fontsize=8)
    for i, v in zip(x, exec_values):
        ax.text(i + width / 2, v + 1, f"{v:.2f}", ha="center", fontsize=8)
    ax.set_xticks(list(x))
    ax.set_xticklabels([f"k={k}" for k in ks])
    ax.set_ylabel("%")
    ax.set_ylim(0, 110)
    ax.set_title(f"Pass@k / Exec@k over {report.instance_count} tasks (n={report.n_samples})")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _render_stream_counts(report: MetricReport, path: str) -> str:
    positions = range(1, len(report.rows) + 1)
    fig, ax = plt.subplots(figsize=(max(6, 0.5 * len(report.rows)), 4))
    ax.plot(
        positions,
        [r.c_exec for r in report.rows],
        marker="s",
        label="executed samples",
        color="#97cc04",
    )
    ax.plot(
        positions,
        [r.c_pass for r in report.rows],
        marker="o",
        label="passing samples",
        color="#2d7dd2",
    )
    ax.set_xticks(list(positions))
    ax.set_xticklabels([r.task_id for r in report.rows], rotation=45, ha="right", fontsize=7)
    ax.set_ylabel(f"samples (of n={report.n_samples})")
    ax.set_ylim(-0.5, report.n_samples + 0.5)
    ax.set_xlabel("task stream order")
    ax.set_title("Per-task outcomes along the stream")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
