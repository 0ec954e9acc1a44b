"""
Report emission: JSON and CSV files, stdout JSON and a console summary.

Files are written atomically (temp file in the target directory, then
``os.replace``), so a reader never sees a half-written report. The console
summary goes to stderr; stdout carries only the report JSON.
"""

from __future__ import annotations

import csv
import io
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import IO, Any

from common.errors import OutputError
from contracts.records import DataTable, ExperimentReport

from app.cli.parser import RunConfig
from app.core.config import LAB_ARTIFACTS_DIR

# Optional rich for pretty console output
try:
    from rich.console import Console
    from rich.table import Table

    _RICH = True
except ImportError:
    _RICH = False

logger = logging.getLogger(__name__)


# ── Paths ─────────────────────────────────────────────────────────────


def _stem(report: ExperimentReport, config: RunConfig) -> Path:
    if config.out:
        out = Path(config.out)
        return out.with_suffix("") if out.suffix in (".json", ".csv") else out
    return Path(LAB_ARTIFACTS_DIR) / report.name


def json_path(report: ExperimentReport, config: RunConfig) -> Path | None:
    if config.format == "csv":
        return None
    if config.out and config.format == "json":
        return Path(config.out)
    if config.out or config.format == "both":
        return _stem(report, config).with_suffix(".json")
    return None


def csv_paths(report: ExperimentReport, config: RunConfig) -> dict[str, Path]:
    if config.format == "json":
        return {}
    names = list(report.tables)
    if config.out and config.out.endswith(".csv") and len(names) == 1:
        return {names[0]: Path(config.out)}
    stem = _stem(report, config)
    return {name: stem.parent / f"{stem.name}.{name}.csv" for name in names}


# ── Writers ───────────────────────────────────────────────────────────


def _cell(value: Any) -> Any:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return value


def table_to_csv(table: DataTable) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue().encode("utf-8")


def write_atomic(path: Path, payload: bytes) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(payload)
            os.replace(tmp, path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


# ── Console ───────────────────────────────────────────────────────────


def _rich_summary(report: ExperimentReport, stream: IO[str]) -> None:
    console = Console(file=stream, highlight=False)
    title = f"{report.name}" + (f" · {report.body}" if report.body else "")
    table = Table(title=title, show_lines=False)
    table.add_column("Quantity", style="bold")
    table.add_column("Value", justify="right")
    table.add_column("± stderr", justify="right")
    table.add_column("Method")
    for name, est in report.estimates.items():
        flags = f" [{', '.join(f.value for f in est.flags)}]" if est.flags else ""
        table.add_row(name, f"{est.value:.6g}", f"{est.stderr:.2g}", est.method.value + flags)
    console.print(table)

    checks = Table(show_header=True)
    checks.add_column("Check", style="bold")
    checks.add_column("Tier")
    checks.add_column("Result", justify="center")
    for name, ok in report.verdicts.items():
        checks.add_row(name, "verdict", "[green]PASS[/]" if ok else "[red]FAIL[/]")
    for name, ok in report.stability.items():
        checks.add_row(name, "stability", "[green]stable[/]" if ok else "[yellow]unstable[/]")
    if report.verdicts or report.stability:
        console.print(checks)
    for note in report.notes:
        console.print(f"[dim]note:[/] {note}")


def _plain_summary(report: ExperimentReport, stream: IO[str]) -> None:
    print(f"== {report.name} {report.body or ''}".rstrip(), file=stream)
    for name, est in report.estimates.items():
        print(f"  {name:<32} {est.value:>14.6g} ± {est.stderr:.2g} ({est.method.value})", file=stream)
    for name, ok in report.verdicts.items():
        print(f"  {'PASS' if ok else 'FAIL'}  {name}", file=stream)
    for name, ok in report.stability.items():
        print(f"  {'stable' if ok else 'unstable'}  {name}", file=stream)
    for note in report.notes:
        print(f"  note: {note}", file=stream)


def print_summary(report: ExperimentReport, stream: IO[str] | None = None) -> None:
    stream = stream or sys.stderr
    if _RICH:
        _rich_summary(report, stream)
    else:
        _plain_summary(report, stream)


# ── Entry point ───────────────────────────────────────────────────────


def emit_report(
    report: ExperimentReport,
    config: RunConfig,
    *,
    stdout: IO[str] | None = None,
    stderr: IO[str] | None = None,
) -> list[Path]:
    """Write the report files; returns the paths written in write order."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    payload = report.to_json_bytes()
    written: list[Path] = []

    target = json_path(report, config)
    if target is not None:
        write_atomic(target, payload)
        written.append(target)
    for name, path in csv_paths(report, config).items():
        write_atomic(path, table_to_csv(report.tables[name]))
        written.append(path)
    for path in written:
        logger.info("wrote %s", path)

    stdout.write(payload.decode("utf-8"))
    stdout.flush()
    print_summary(report, stderr)
    for name in report.failed_verdicts:
        print(f"verdict failed: {name}", file=stderr)
    return written
