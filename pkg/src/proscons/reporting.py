"""Report emission: delimited outputs plus rendered figures.

Every report is written as JSON and/or CSV next to a PNG figure of the
same data. All writes are atomic (temp file + rename) and byte-stable:
no timestamps, fixed float formatting in figures, and PNG metadata
stripped so repeated runs produce identical files.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

__all__ = [
    "atomic_write_bytes",
    "atomic_write_text",
    "write_json",
    "write_csv",
    "render_query_length_figure",
    "render_verification_figure",
    "render_scores_figure",
]

_PNG_METADATA = {"Software": None}


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path: str | Path, payload) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, ensure_ascii=False) + "\n")


def write_csv(path: str | Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if cell is None else cell for cell in row])
    atomic_write_text(path, buffer.getvalue())


def _save_figure(fig, path: str | Path) -> None:
    buffer = io.BytesIO()
    fig.savefig(buffer, format="png", dpi=100, metadata=_PNG_METADATA)
    plt.close(fig)
    atomic_write_bytes(path, buffer.getvalue())


def render_query_length_figure(histogram: Mapping[str, int], path: str | Path) -> None:
    """Bar chart of query lengths in words."""
    fig, ax = plt.subplots(figsize=(5, 3.2))
    labels = list(histogram)
    ax.bar(labels, [histogram[k] for k in labels], color="#4878a8")
    ax.set_xlabel("query length (words)")
    ax.set_ylabel("queries")
    ax.set_title("Annotated query lengths")
    fig.tight_layout()
    _save_figure(fig, path)


def render_verification_figure(aggregates: Mapping[str, Mapping[str, float | None]],
                               path: str | Path) -> None:
    """Grouped bars of mean AR/SF/OF per summary set (plus roll-up)."""
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    metrics = ("mean_ar", "mean_sf", "mean_of")
    names = list(aggregates)
    width = 0.8 / max(len(names), 1)
    for pos, name in enumerate(names):
        values = [aggregates[name].get(metric) or 0.0 for metric in metrics]
        offsets = [i + pos * width for i in range(len(metrics))]
        ax.bar(offsets, values, width=width, label=str(name))
    ax.set_xticks([i + width * (len(names) - 1) / 2 for i in range(len(metrics))])
    ax.set_xticklabels(["AR", "SF", "OF"])
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("mean over counted highlights")
    ax.set_title("Verification metrics")
    if names:
        ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    _save_figure(fig, path)


def render_scores_figure(rows: Sequence[Mapping], metric_keys: Sequence[str],
                         path: str | Path, title: str = "Scores",
                         label_key: str = "system") -> None:
    """Grouped bars of per-system metric columns (e.g. section ROUGE)."""
    fig, ax = plt.subplots(figsize=(7.0, 3.8))
    width = 0.8 / max(len(rows), 1)
    for pos, row in enumerate(rows):
        values = [row.get(key) or 0.0 for key in metric_keys]
        offsets = [i + pos * width for i in range(len(metric_keys))]
        ax.bar(offsets, values, width=width, label=str(row.get(label_key, pos)))
    ax.set_xticks([i + width * (len(rows) - 1) / 2 for i in range(len(metric_keys))])
    ax.set_xticklabels(metric_keys, rotation=30, ha="right", fontsize=7)
    ax.set_ylabel("score")
    ax.set_title(title)
    if rows:
        ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    _save_figure(fig, path)
