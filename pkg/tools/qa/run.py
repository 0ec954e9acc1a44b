#!/usr/bin/env python3
"""
QA Orchestrator – single entry-point for the lab quality pipeline.

Phases:
  1. Lint + type check (ruff, black, mypy)
  2. Unit tests (pytest, slow runs excluded) → JUnit XML + optional coverage
  3. Acceptance criteria: one pytest selection per criterion, timed against its budget
  4. Determinism: ``dvlab`` at two thread counts, outputs compared byte for byte
  5. Generate report → JSON + Markdown + console

Usage:
  python -m tools.qa.run                      # full suite
  python -m tools.qa.run --fast               # lint + unit only
  python -m tools.qa.run --criteria 2,3       # selected acceptance criteria only
  python -m tools.qa.run --determinism-only   # thread-count check only
"""

from __future__ import annotations

import argparse
import filecmp
import os
import shutil
import subprocess
import sys
import time

# Ensure project root is on sys.path so `tools.qa.*` imports resolve.
PROJECT_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", ".."))
if PROJECT_ROOT not in sys.path:
    sys.path.insert(0, PROJECT_ROOT)

from tools.qa.config import (  # noqa: E402
    ACCEPTANCE_TIMEOUT_S,
    ARTIFACTS_DIR,
    COVERAGE_ENABLED,
    CRITERIA,
    DETERMINISM_RUNS,
    DETERMINISM_SEED,
    DETERMINISM_THREADS,
    LAB_DIR,
    LIB_DIRS,
    UNIT_TEST_ENV,
    UNIT_TIMEOUT_S,
    Criterion,
)
from tools.qa.report import CriterionResult, PhaseResult, QAReport, TestStats, write_reports  # noqa: E402

# pytest: "no tests collected"
_NO_TESTS = 5


# ── Utility ──────────────────────────────────────────────────────────


def _run(
    cmd: list[str],
    cwd: str | None = None,
    timeout: int = 600,
    env: dict[str, str] | None = None,
) -> subprocess.CompletedProcess:
    """Run a command, capture output, never raise on non-zero exit."""
    run_env = os.environ.copy()
    if env:
        run_env.update(env)
    return subprocess.run(
        cmd,
        cwd=cwd or LAB_DIR,
        capture_output=True,
        text=True,
        timeout=timeout,
        env=run_env,
    )


def _log(icon: str, msg: str) -> None:
    print(f"  {icon}  {msg}", flush=True)


def _lab_env() -> dict[str, str]:
    env = dict(UNIT_TEST_ENV)
    env["PYTHONPATH"] = os.pathsep.join([LAB_DIR, *LIB_DIRS])
    return env


def _pytest(marker: str, keyword: str | None, junit: str, extra: list[str] | None = None) -> list[str]:
    cmd = [sys.executable, "-m", "pytest", "tests/", "-m", marker, "--tb=short", "-q", f"--junitxml={junit}"]
    if keyword:
        cmd.extend(["-k", keyword])
    return cmd + (extra or [])


# ── Phases ───────────────────────────────────────────────────────────


def phase_lint() -> PhaseResult:
    """Run ruff + black + mypy on the lab and its libs."""
    _log("🔍", "Running lint / format / type checks …")
    t0 = time.monotonic()
    errors: list[str] = []

    for tool, cmd in [
        ("ruff", ["ruff", "check", "."]),
        ("black", ["black", "--check", "."]),
        ("mypy", ["mypy", "app/", "--ignore-missing-imports", "--no-error-summary"]),
    ]:
        r = _run(cmd, cwd=LAB_DIR, timeout=180)
        if r.returncode != 0:
            errors.append(f"geometry-lab/{tool}: {r.stdout[:200]}")

    for lib_dir in LIB_DIRS:
        if not os.path.isdir(lib_dir):
            continue
        for tool, cmd in [
            ("ruff", ["ruff", "check", "."]),
            ("black", ["black", "--check", "."]),
        ]:
            r = _run(cmd, cwd=lib_dir, timeout=60)
            if r.returncode != 0:
                errors.append(f"{os.path.basename(lib_dir)}/{tool}: {r.stdout[:200]}")

    dur = (time.monotonic() - t0) * 1000
    if errors:
        return PhaseResult(
            name="lint",
            passed=False,
            duration_ms=dur,
            detail=f"{len(errors)} lint error(s)",
            sub_results=[{"error": e} for e in errors[:10]],
        )
    return PhaseResult(name="lint", passed=True, duration_ms=dur, detail="ruff + black + mypy OK")


def phase_unit_tests(stats: TestStats) -> PhaseResult:
    """Run the fast suite, collect JUnit XML + optional coverage."""
    _log("🧪", "Running unit tests …")
    t0 = time.monotonic()
    os.makedirs(ARTIFACTS_DIR, exist_ok=True)
    junit = os.path.join(ARTIFACTS_DIR, "junit-unit.xml")

    extra: list[str] = []
    if COVERAGE_ENABLED:
        cov_xml = os.path.join(ARTIFACTS_DIR, "coverage.xml")
        extra = ["--cov=app", f"--cov-report=xml:{cov_xml}", "--cov-report=term-missing:skip-covered"]

    r = _run(_pytest("not slow", None, junit, extra), timeout=UNIT_TIMEOUT_S, env=_lab_env())
    stats.add_junit(junit, "unit")

    dur = (time.monotonic() - t0) * 1000
    detail = f"{stats.total_tests} tests ({stats.passed} pass, {stats.failed} fail)"
    if r.returncode != 0:
        return PhaseResult(
            name="unit_tests",
            passed=False,
            duration_ms=dur,
            detail=detail,
            sub_results=[{"error": r.stdout[-300:]}],
        )
    if COVERAGE_ENABLED:
        _log("📊", f"Coverage report: {os.path.join(ARTIFACTS_DIR, 'coverage.xml')}")
    return PhaseResult(name="unit_tests", passed=True, duration_ms=dur, detail=detail)


def run_criterion(criterion: Criterion, stats: TestStats) -> CriterionResult:
    """Run one criterion's pytest selection and time it."""
    _log("📐", f"Criterion {criterion.number}: {criterion.title}")
    junit = os.path.join(ARTIFACTS_DIR, f"junit-criterion-{criterion.number}.xml")
    t0 = time.monotonic()
    try:
        r = _run(
            _pytest(criterion.marker, criterion.keyword, junit),
            timeout=ACCEPTANCE_TIMEOUT_S,
            env=_lab_env(),
        )
    except subprocess.TimeoutExpired:
        return CriterionResult(
            number=criterion.number,
            title=criterion.title,
            passed=False,
            duration_s=time.monotonic() - t0,
            budget_s=criterion.budget_s,
            detail=f"timed out after {ACCEPTANCE_TIMEOUT_S}s",
        )
    duration = time.monotonic() - t0
    tests = stats.add_junit(junit, f"criterion-{criterion.number}")

    if r.returncode == _NO_TESTS:
        detail = "no tests selected"
    elif r.returncode != 0:
        detail = r.stdout[-300:]
    else:
        detail = f"{tests} test(s) passed"
    result = CriterionResult(
        number=criterion.number,
        title=criterion.title,
        passed=r.returncode == 0 and tests > 0,
        duration_s=duration,
        budget_s=criterion.budget_s,
        tests=tests,
        detail=detail,
    )
    _log("✓" if result.passed else "✗", f"{duration:.1f}s (budget {criterion.budget_s:.0f}s)")
    return result


def phase_determinism() -> PhaseResult:
    """Run each CLI command at two thread counts and diff every output file."""
    _log("🎲", f"Comparing outputs across --threads {DETERMINISM_THREADS} …")
    t0 = time.monotonic()
    out_root = os.path.join(ARTIFACTS_DIR, "determinism")
    shutil.rmtree(out_root, ignore_errors=True)
    mismatches: list[dict[str, str]] = []

    for i, argv in enumerate(DETERMINISM_RUNS):
        label = f"{i:02d}-{argv[1] if argv[0] == 'verify' else argv[0]}"
        outputs: list[tuple[str, str]] = []
        for threads in DETERMINISM_THREADS:
            run_dir = os.path.join(out_root, f"threads-{threads}")
            os.makedirs(run_dir, exist_ok=True)
            stem = os.path.join(run_dir, label)
            cmd = [
                sys.executable,
                "-m",
                "app.main",
                *argv,
                "--seed",
                str(DETERMINISM_SEED),
                "--threads",
                str(threads),
                "--format",
                "both",
                "--out",
                stem,
            ]
            r = _run(cmd, timeout=UNIT_TIMEOUT_S, env=_lab_env())
            if r.returncode != 0:
                mismatches.append({"run": label, "error": f"exit {r.returncode}: {r.stderr[-200:]}"})
            outputs.append((run_dir, r.stdout))

        (dir_a, stdout_a), (dir_b, stdout_b) = outputs
        if stdout_a != stdout_b:
            mismatches.append({"run": label, "error": "stdout differs"})
        names_a = sorted(f for f in os.listdir(dir_a) if f.startswith(label + "."))
        names_b = sorted(f for f in os.listdir(dir_b) if f.startswith(label + "."))
        if names_a != names_b:
            mismatches.append({"run": label, "error": f"file sets differ: {names_a} vs {names_b}"})
            continue
        for name in names_a:
            if not filecmp.cmp(os.path.join(dir_a, name), os.path.join(dir_b, name), shallow=False):
                mismatches.append({"run": label, "error": f"{name} differs"})

    dur = (time.monotonic() - t0) * 1000
    if mismatches:
        return PhaseResult(
            name="determinism",
            passed=False,
            duration_ms=dur,
            detail=f"{len(mismatches)} mismatch(es)",
            sub_results=mismatches,
        )
    return PhaseResult(
        name="determinism",
        passed=True,
        duration_ms=dur,
        detail=f"{len(DETERMINISM_RUNS)} runs byte-identical",
    )


# ── Main ─────────────────────────────────────────────────────────────


def _selected(spec: str | None) -> list[Criterion]:
    if not spec:
        return CRITERIA
    wanted = {int(part) for part in spec.split(",") if part.strip()}
    return [c for c in CRITERIA if c.number in wanted]


def main() -> int:
    parser = argparse.ArgumentParser(description="QA Orchestrator")
    parser.add_argument("--fast", action="store_true", help="Lint + unit tests only")
    parser.add_argument("--criteria", help="Comma-separated acceptance criteria to run (default: all)")
    parser.add_argument("--determinism-only", action="store_true", help="Thread-count determinism check only")
    parser.add_argument("--skip-lint", action="store_true", help="Skip ruff / black / mypy")
    args = parser.parse_args()

    t_global = time.monotonic()
    report = QAReport()
    os.makedirs(ARTIFACTS_DIR, exist_ok=True)

    print("\n" + "═" * 60)
    print("  QA PIPELINE")
    print("═" * 60 + "\n")

    if args.determinism_only:
        report.add_phase(phase_determinism())
        report.total_duration_s = time.monotonic() - t_global
        write_reports(report)
        return 0 if report.overall_pass else 1

    # ── 1. Lint + type ────────────────────────────────────────
    if not args.skip_lint and not args.criteria:
        report.add_phase(phase_lint())

    # ── 2. Unit tests ─────────────────────────────────────────
    if not args.criteria:
        report.add_phase(phase_unit_tests(report.test_stats))

    if args.fast:
        report.total_duration_s = time.monotonic() - t_global
        write_reports(report)
        return 0 if report.overall_pass else 1

    # ── 3. Acceptance criteria ────────────────────────────────
    for criterion in _selected(args.criteria):
        report.add_criterion(run_criterion(criterion, report.test_stats))

    # ── 4. Determinism ────────────────────────────────────────
    if not args.criteria:
        report.add_phase(phase_determinism())

    # ── 5. Report ─────────────────────────────────────────────
    report.total_duration_s = time.monotonic() - t_global
    write_reports(report)
    return 0 if report.overall_pass else 1


if __name__ == "__main__":
    sys.exit(main())
