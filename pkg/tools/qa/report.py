"""
QA report: one :class:`QAReport` rendered three ways.

``report.json`` carries everything; ``report.md`` and the rich console view
share the same row builders so the two never drift apart.
"""

from __future__ import annotations

import json
import os
import xml.etree.ElementTree as ET
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Any

from rich.console import Console
from rich.table import Table

from tools.qa.config import ARTIFACTS_DIR, BUDGET_SLACK

# ── Records ──────────────────────────────────────────────────────────


@dataclass
class PhaseResult:
    name: str
    passed: bool
    duration_ms: float = 0.0
    detail: str = ""
    sub_results: list[dict[str, Any]] = field(default_factory=list)


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    duration_s: float = 0.0
    budget_s: float = 0.0
    tests: int = 0
    detail: str = ""

    @property
    def over_budget(self) -> bool:
        return self.duration_s > self.budget_s * BUDGET_SLACK


@dataclass
class TestStats:
    """Counts folded in from every JUnit file the run produced."""

    total_tests: int = 0
    passed: int = 0
    failed: int = 0
    errors: int = 0
    skipped: int = 0
    suites: list[str] = field(default_factory=list)

    def add_junit(self, path: str, label: str) -> int:
        """Fold one JUnit XML file in; returns the number of tests it held."""
        try:
            root = ET.parse(path).getroot()
        except (OSError, ET.ParseError):
            return 0
        suites = root.findall("testsuite") if root.tag == "testsuites" else [root]
        held = 0
        for suite in suites:
            tests, failures, errors, skipped = (
                int(suite.get(key, 0)) for key in ("tests", "failures", "errors", "skipped")
            )
            held += tests
            self.total_tests += tests
            self.failed += failures
            self.errors += errors
            self.skipped += skipped
            self.passed += tests - failures - errors - skipped
        if held and label not in self.suites:
            self.suites.append(label)
        return held

    def summary(self) -> str:
        return (
            f"{self.total_tests} tests: {self.passed} passed, {self.failed} failed, "
            f"{self.errors} errors, {self.skipped} skipped"
        )


@dataclass
class QAReport:
    started_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    total_duration_s: float = 0.0
    overall_pass: bool = True
    phases: list[PhaseResult] = field(default_factory=list)
    criteria: list[CriterionResult] = field(default_factory=list)
    test_stats: TestStats = field(default_factory=TestStats)
    recommendations: list[str] = field(default_factory=list)

    def add_phase(self, phase: PhaseResult) -> None:
        self.phases.append(phase)
        self.overall_pass = self.overall_pass and phase.passed

    def add_criterion(self, result: CriterionResult) -> None:
        self.criteria.append(result)
        self.overall_pass = self.overall_pass and result.passed

    @property
    def criteria_passed(self) -> int:
        return sum(1 for c in self.criteria if c.passed)

    def headline(self) -> str:
        verdict = "PASS" if self.overall_pass else "FAIL"
        parts = [verdict, f"{self.total_duration_s:.1f}s"]
        if self.criteria:
            parts.append(f"{self.criteria_passed}/{len(self.criteria)} criteria")
        return " · ".join(parts)

    def collect_recommendations(self) -> None:
        recs: list[str] = []
        by_name = {p.name: p for p in self.phases}
        if "lint" in by_name and not by_name["lint"].passed:
            recs.append("Run `ruff check --fix .` and `black .` in the failing package.")
        if "unit_tests" in by_name and not by_name["unit_tests"].passed:
            recs.append("Fast suite is red; re-run it with `pytest -x` before looking at the criteria.")
        if "determinism" in by_name and not by_name["determinism"].passed:
            recs.append(
                "Outputs change with the thread count: some draw is not taken from its chunk substream "
                "or chunk results are merged out of order."
            )
        for c in self.criteria:
            if c.passed and c.over_budget:
                recs.append(f"Criterion {c.number} passed in {c.duration_s:.0f}s, over its {c.budget_s:.0f}s budget.")
            elif not c.passed and c.tests == 0:
                recs.append(f"Criterion {c.number} selected no tests; its -k expression no longer matches.")
            elif not c.passed:
                recs.append(f"Criterion {c.number} failed; see junit-criterion-{c.number}.xml.")
        self.recommendations = recs


# ── Row builders ─────────────────────────────────────────────────────

PHASE_HEADER = ("Phase", "Status", "Duration", "Detail")
CRITERION_HEADER = ("#", "Criterion", "Status", "Tests", "Runtime", "Budget")


def _status(passed: bool) -> str:
    return "PASS" if passed else "FAIL"


def phase_rows(report: QAReport) -> list[tuple[str, ...]]:
    return [(p.name, _status(p.passed), f"{p.duration_ms / 1000:.1f}s", p.detail[:80]) for p in report.phases]


def criterion_rows(report: QAReport) -> list[tuple[str, ...]]:
    return [
        (
            str(c.number),
            c.title,
            _status(c.passed),
            str(c.tests),
            f"{c.duration_s:.1f}s" + (" (slow)" if c.over_budget else ""),
            f"{c.budget_s:.0f}s",
        )
        for c in report.criteria
    ]


# ── Writers ──────────────────────────────────────────────────────────


def write_reports(report: QAReport) -> None:
    os.makedirs(ARTIFACTS_DIR, exist_ok=True)
    report.collect_recommendations()
    json_path = _write_json(report)
    md_path = _write_markdown(report)
    _print_console(report, [json_path, md_path])


def _write_json(report: QAReport) -> str:
    path = os.path.join(ARTIFACTS_DIR, "report.json")
    payload = asdict(report)
    payload["headline"] = report.headline()
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, default=str)
    return path


def _md_table(header: tuple[str, ...], rows: list[tuple[str, ...]]) -> list[str]:
    out = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    out += ["| " + " | ".join(cell.replace("|", "/") for cell in row) + " |" for row in rows]
    return out


def _write_markdown(report: QAReport) -> str:
    path = os.path.join(ARTIFACTS_DIR, "report.md")
    lines = [f"# Lab QA – {report.started_at}", "", f"**{report.headline()}**", ""]
    if report.test_stats.total_tests:
        lines += [f"Tests: {report.test_stats.summary()} ({', '.join(report.test_stats.suites)})", ""]
    if report.phases:
        lines += ["## Phases", "", *_md_table(PHASE_HEADER, phase_rows(report)), ""]
    if report.criteria:
        lines += ["## Acceptance criteria", "", *_md_table(CRITERION_HEADER, criterion_rows(report)), ""]
    failures = [(p.name, s) for p in report.phases for s in p.sub_results]
    if failures:
        lines += ["## Failure detail", ""]
        lines += [f"- **{name}**: `{json.dumps(sub, default=str)[:200]}`" for name, sub in failures]
        lines.append("")
    if report.recommendations:
        lines += ["## Next steps", "", *(f"- {r}" for r in report.recommendations), ""]
    with open(path, "w") as f:
        f.write("\n".join(lines))
    return path


def _rich_table(title: str, header: tuple[str, ...], rows: list[tuple[str, ...]]) -> Table:
    table = Table(title=title, title_justify="left", header_style="bold cyan")
    for name in header:
        table.add_column(name, justify="right" if name in ("#", "Tests", "Runtime", "Budget", "Duration") else "left")
    for row in rows:
        styled = [
            f"[green]{cell}[/green]" if cell == "PASS" else f"[red]{cell}[/red]" if cell == "FAIL" else cell
            for cell in row
        ]
        table.add_row(*styled)
    return table


def _print_console(report: QAReport, written: list[str]) -> None:
    console = Console()
    console.rule("[bold]Lab QA[/bold]")
    if report.test_stats.total_tests:
        console.print(report.test_stats.summary())
    if report.phases:
        console.print(_rich_table("Phases", PHASE_HEADER, phase_rows(report)))
    if report.criteria:
        console.print(_rich_table("Acceptance criteria", CRITERION_HEADER, criterion_rows(report)))
    for rec in report.recommendations:
        console.print(f"  • {rec}")
    for path in written:
        console.print(f"  [dim]{path}[/dim]")
    colour = "green" if report.overall_pass else "red"
    console.print(f"\n[bold {colour}]{report.headline()}[/bold {colour}]\n")
