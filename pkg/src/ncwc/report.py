"""Result rendering: aligned text tables for the terminal, CSV and
canonical JSON for machines, and a wall-time chart for benchmark runs."""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .values import DocValue, Tag, to_canonical_json


def cell_text(value) -> str:
    """Terminal form of one cell; non-text values use canonical JSON."""
    if isinstance(value, DocValue):
        if value.tag == Tag.NULL:
            return "NULL"
        if value.tag == Tag.TEXT:
            return value.value
        return to_canonical_json(value)
    return str(value)


def format_table(headers, rows) -> str:
    """Space-padded columns, one header row and one line per data row."""
    headers = [str(h) for h in headers]
    text_rows = [[cell_text(v) for v in row] for row in rows]
    widths = [len(h) for h in headers]
    for row in text_rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    for row in text_rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines)


def batch_table(batch) -> str:
    return format_table(batch.column_names(), batch.rows())


def canonical_json(obj) -> str:
    """Canonical JSON of plain Python data: sorted keys, no whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def batch_json(batch) -> str:
    rows = DocValue.array(DocValue.array(row) for row in batch.rows())
    names = DocValue.array(DocValue.text(n) for n in batch.column_names())
    return to_canonical_json(DocValue.object((("columns", names), ("rows", rows))))


BENCH_FIELDS = (
    "job",
    "rows_moved",
    "split_count",
    "inference_passes",
    "serialization_steps",
    "staging_files",
    "wall_time_ms",
)


def bench_table(results) -> str:
    rows = [[r.to_dict()[f] for f in BENCH_FIELDS] for r in results]
    return format_table(BENCH_FIELDS, rows)


def write_bench_csv(path, results) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCH_FIELDS)
        writer.writeheader()
        for r in results:
            writer.writerow(r.to_dict())


def write_bench_json(path, results) -> None:
    Path(path).write_text(canonical_json([r.to_dict() for r in results]) + "\n", encoding="utf-8")


def write_bench_figure(path, results) -> None:
    """Bar chart of per-job wall time, rendered headless to a file."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    jobs = [r.job for r in results]
    times = [r.report.wall_time_ms for r in results]
    fig, ax = plt.subplots(figsize=(9, 4.5))
    ax.bar(range(len(jobs)), times, color="#33658a")
    ax.set_xticks(range(len(jobs)))
    ax.set_xticklabels(jobs, rotation=20, ha="right")
    ax.set_ylabel("wall time (ms)")
    ax.set_title("transfer job wall times")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
