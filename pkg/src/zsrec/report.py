"""Comparison tables (model x metric@cutoff) as CSV and Markdown."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .experiments import EvalReport
from .metrics import LOWER, ORIENTATION, MetricValue


class ReportError(ValueError):
    pass


@dataclass
class ComparisonTable:
    rows: list[str]
    columns: list[tuple[str, int]]
    cells: dict[tuple[str, str, int], float]
    sort_metric: str
    metadata: dict = field(default_factory=dict)

    def value(self, model: str, name: str, cutoff: int) -> float:
        return self.cells[(model, name, cutoff)]


def _parse_label(label: str) -> tuple[str, int]:
    name, _, cut = label.rpartition("@")
    return name, int(cut)


def build_table(reports: Sequence[EvalReport], sort_metric: str = "nDCG@10") -> ComparisonTable:
    if not reports:
        raise ReportError("no reports to tabulate")
    prints = {r.metadata.get("dataset_fingerprint") for r in reports}
    if len(prints) > 1:
        raise ReportError(f"reports come from different dataset/split fingerprints: {sorted(map(str, prints))}")
    columns: list[tuple[str, int]] = []
    cells = {}
    for rep in reports:
        for v in rep.values:
            if (v.name, v.cutoff) not in columns:
                columns.append((v.name, v.cutoff))
            cells[(rep.model, v.name, v.cutoff)] = v.value
    names = list(dict.fromkeys(n for n, _ in columns))
    columns.sort(key=lambda c: (c[1], names.index(c[0])))
    key = _parse_label(sort_metric)
    if key not in columns:
        raise ReportError(f"sort metric {sort_metric} not present in the reports")
    sign = 1 if ORIENTATION.get(key[0]) == LOWER else -1
    models = sorted((r.model for r in reports),
                    key=lambda m: ((m, *key) not in cells, sign * cells.get((m, *key), 0.0), m))
    meta = {k: reports[0].metadata[k] for k in ("dataset", "experiment", "dataset_fingerprint",
                                                 "split_seed", "split_ratio")
            if k in reports[0].metadata}
    return ComparisonTable(models, columns, cells, sort_metric, meta)


def to_csv(table: ComparisonTable) -> str:
    buf = io.StringIO()
    for k, v in sorted(table.metadata.items()):
        buf.write(f"# {k}: {v}\n")
    buf.write(f"# sort: {table.sort_metric}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model"] + [f"{n}@{c}" for n, c in table.columns])
    for m in table.rows:
        w.writerow([m] + [repr(table.cells[(m, n, c)]) if (m, n, c) in table.cells else ""
                          for n, c in table.columns])
    return buf.getvalue()


def read_csv(text: str) -> list[EvalReport]:
    """Inverse of :func:`to_csv`: one report per row, values at full precision."""
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    labels = [_parse_label(h) for h in header[1:]]
    out = []
    for row in reader:
        values = [MetricValue(n, c, float(cell), ORIENTATION[n])
                  for (n, c), cell in zip(labels, row[1:]) if cell != ""]
        out.append(EvalReport(row[0], values))
    return out


def _fmt(name: str, value: float) -> str:
    if name == "ItemCoverage" and float(value).is_integer():
        return str(int(value))
    return f"{value:.5f}"


def to_markdown(table: ComparisonTable) -> str:
    """5-decimal table; per column the best value is bold and the runner-up italic."""
    marks: dict[tuple[str, str, int], str] = {}
    for n, c in table.columns:
        present = [(table.cells[(m, n, c)], m) for m in table.rows if (m, n, c) in table.cells]
        if len(present) < 2:
            continue
        lower = ORIENTATION.get(n) == LOWER
        distinct = sorted({v for v, _ in present}, reverse=not lower)
        for m in table.rows:
            v = table.cells.get((m, n, c))
            if v == distinct[0]:
                marks[(m, n, c)] = "**"
            elif len(distinct) > 1 and v == distinct[1]:
                marks[(m, n, c)] = "_"
    lines = []
    for k, v in sorted(table.metadata.items()):
        lines.append(f"- {k}: {v}")
    lines.append(f"- sorted by: {table.sort_metric}")
    lines.append("")
    lines.append("| Model | " + " | ".join(f"{n}@{c}" for n, c in table.columns) + " |")
    lines.append("|---|" + "---:|" * len(table.columns))
    for m in table.rows:
        cells = []
        for n, c in table.columns:
            if (m, n, c) not in table.cells:
                cells.append("")
                continue
            mark = marks.get((m, n, c), "")
            cells.append(f"{mark}{_fmt(n, table.cells[(m, n, c)])}{mark}")
        lines.append(f"| {m} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def emit_comparison_table(reports: Sequence[EvalReport], out_dir, dataset: str, config: str,
                          sort_metric: str = "nDCG@10",
                          formats: Sequence[str] = ("csv", "markdown")) -> list[Path]:
    """Write ``report_<dataset>_<config>.{csv,md}`` and return the written paths."""
    table = build_table(reports, sort_metric)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for fmt in formats:
        if fmt == "csv":
            path, text = out_dir / f"report_{dataset}_{config}.csv", to_csv(table)
        elif fmt in ("markdown", "md"):
            path, text = out_dir / f"report_{dataset}_{config}.md", to_markdown(table)
        else:
            raise ReportError(f"unknown report format {fmt!r}")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        written.append(path)
    return written
