from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

from rich.console import Console
from rich.table import Table

from .experiments import BiasRow, ExperimentReport


_console = Console()


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_csv(rows: Sequence[Mapping[str, Any]]) -> str:
    """CSV text with a header from the first row's keys; floats use repr."""
    output = io.StringIO()
    writer = csv.writer(output, lineterminator="\n")
    if rows:
        header = list(rows[0].keys())
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(row.get(col)) for col in header])
    return output.getvalue()


def render_json(summary: Mapping[str, Any]) -> str:
    return json.dumps(summary, indent=2) + "\n"


def _write(text: str, out: Optional[Path]) -> None:
    if out is None:
        print(text.rstrip("\n"))
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)


def summary_path(out: Path) -> Path:
    return out.with_suffix(".json")


def _print_table(title: str, rows: Sequence[Mapping[str, Any]]) -> None:
    if not rows:
        _console.print(f"{title}: no rows.")
        return
    table = Table(title=title)
    for col in rows[0].keys():
        table.add_column(col, justify="right")
    for row in rows:
        table.add_row(
            *(f"{v:.4f}" if isinstance(v, float) else _cell(v) for v in row.values())
        )
    _console.print(table)


def output_rows(
    title: str,
    rows: Sequence[Mapping[str, Any]],
    summary: Mapping[str, Any],
    fmt: str = "table",
    out: Optional[Path] = None,
) -> None:
    """Write metric rows as CSV plus a JSON summary, or show them.

    With `out` the CSV goes to `out` and the summary next to it with a .json
    suffix; otherwise `fmt` picks what is printed.
    """
    if out is not None:
        _write(render_csv(rows), out)
        _write(render_json(summary), summary_path(out))
        _console.print(f"Wrote {out} and {summary_path(out)}")
        return

    if fmt == "json":
        _write(render_json(summary), None)
        return

    if fmt == "csv":
        _write(render_csv(rows), None)
        return

    _print_table(title, rows)


def output_bias_rows(
    rows: List[BiasRow], summary: Dict[str, Any], fmt: str = "table", out: Optional[Path] = None
) -> None:
    output_rows(
        "Information gain bias",
        [row.to_dict() for row in rows],
        {**summary, "rows": [row.to_dict() for row in rows]},
        fmt=fmt,
        out=out,
    )


def output_report(report: ExperimentReport, fmt: str = "table", out: Optional[Path] = None) -> None:
    output_rows(
        f"{report.kind.capitalize()} experiment",
        report.csv_rows(),
        report.to_dict(),
        fmt=fmt,
        out=out,
    )
    if out is None and fmt == "table":
        _console.print(f"Runtime: {report.runtime_s:.1f} s")
