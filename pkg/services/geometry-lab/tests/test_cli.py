"""
Unit tests – command line, report emission and exit codes.

Coverage:
  - parse_args: body canonicalisation, grids, bodyless experiments
  - RunConfig canonical JSON round-trip
  - UsageError naming the offending flag, including missing and repeated arguments
  - emit_report: JSON / CSV / both, single-table CSV target, default artifact dir
  - Atomic writes and OutputError on unwritable targets
  - main(): exit codes 0, 1, 2, 3, 4 and 70
"""

import io
import json

import pytest

from common.errors import OutputError, UsageError
from contracts.records import DataTable, EstimateCI, ExperimentReport, Method, SeedSpec

from app import main as main_module
from app.cli import commands, emit
from app.cli.emit import csv_paths, emit_report, json_path, table_to_csv
from app.cli.parser import RunConfig, parse_args
from app.main import main


def _report(verdicts=None, tables=None):
    return ExperimentReport(
        name="demo",
        body="lp:inf:4",
        seed=SeedSpec(root=1),
        verdicts=verdicts if verdicts is not None else {"ok": True},
        tables=tables
        if tables is not None
        else {"grid": DataTable(columns=("a", "b"), rows=[(1, None), (2, True)])},
    )


# ═══════════════════════════════════════════════════════════════════════
#  Parsing
# ═══════════════════════════════════════════════════════════════════════


def test_parse_stats():
    config = parse_args(["stats", "--body", "lp:inf:16", "--samples", "1000", "--seed", "42"])
    assert config.command == "stats"
    assert config.bodies == ("lp:inf:16",)
    assert config.body == "lp:inf:16"
    assert config.samples == 1000 and config.seed == 42
    assert config.format == "json" and config.out is None


def test_body_spec_is_canonicalised():
    assert parse_args(["stats", "--body", "lp:2.0:8"]).body == "lp:2:8"


def test_grids_parse_to_tuples():
    config = parse_args(["small-ball", "--body", "lp:1:8", "--eps", "0.1, 0.5,0.9"])
    assert config.eps == (0.1, 0.5, 0.9)
    config = parse_args(["verify", "transfer", "--n", "8,32"])
    assert config.n == (8, 32)
    assert config.body is None


def test_lower_inclusion_runs_without_body():
    assert parse_args(["verify", "lower-inclusion"]).experiment == "lower-inclusion"


def test_repeated_body_flags():
    config = parse_args(["verify", "dim-lift", "--body", "lp:inf:8", "--body", "lp:1:8"])
    assert config.bodies == ("lp:inf:8", "lp:1:8")


def test_canonical_round_trip():
    config = parse_args(["sections", "--body", "lp:3:10", "--l", "2", "--threads", "4", "--format", "both"])
    text = config.to_canonical()
    assert json.loads(text)["bodies"] == ["lp:3:10"]
    assert RunConfig.from_canonical(text) == config


@pytest.mark.parametrize(
    ("argv", "flag"),
    [
        (["stats"], "--body"),
        (["stats", "--body", "lp:0.5:3"], "--body"),
        (["stats", "--body", "cube:4"], "--body"),
        (["stats", "--body", "lp:inf:4", "--samples", "0"], "--samples"),
        (["stats", "--body", "lp:inf:4", "--samples", "many"], "--samples"),
        (["stats", "--body", "lp:inf:4", "--seed", "-1"], "--seed"),
        (["stats", "--body", "lp:inf:4", "--u", "1"], "--u"),
        (["stats", "--body", "lp:inf:4", "--format", "xml"], "--format"),
        (["stats", "--body", "lp:inf:4", "--bogus"], "--bogus"),
        (["small-ball", "--body", "lp:inf:4", "--eps", "a,b"], "--eps"),
        (["verify", "vrad"], "--body"),
        (["verify", "nope"], "experiment"),
        (["sections", "--body", "lp:inf:4", "--threads", "0"], "--threads"),
        (["verify"], "experiment"),
        ([], "command"),
        (["stats", "--body", "lp:inf:4", "--body", "lp:1:4"], "--body"),
        (["verify", "vrad", "--body", "lp:inf:4", "--body", "lp:1:4"], "--body"),
    ],
)
def test_usage_errors_name_the_flag(argv, flag):
    with pytest.raises(UsageError) as info:
        parse_args(argv)
    assert info.value.flag == flag


def test_dimension_lift_takes_several_bodies():
    config = parse_args(["verify", "dim-lift", "--body", "lp:inf:4", "--body", "lp:1:8"])
    assert config.bodies == ("lp:inf:4", "lp:1:8")


# ═══════════════════════════════════════════════════════════════════════
#  Output paths
# ═══════════════════════════════════════════════════════════════════════


def test_json_only_to_explicit_path(tmp_path):
    target = tmp_path / "r.json"
    config = RunConfig(command="stats", out=str(target))
    assert json_path(_report(), config) == target
    assert csv_paths(_report(), config) == {}


def test_single_table_csv_uses_out_path(tmp_path):
    target = tmp_path / "grid.csv"
    config = RunConfig(command="stats", out=str(target), format="csv")
    assert json_path(_report(), config) is None
    assert csv_paths(_report(), config) == {"grid": target}


def test_both_formats_share_a_stem(tmp_path):
    config = RunConfig(command="stats", out=str(tmp_path / "res"), format="both")
    tables = {"grid": DataTable(columns=("a",)), "other": DataTable(columns=("b",))}
    report = _report(tables=tables)
    assert json_path(report, config) == tmp_path / "res.json"
    assert csv_paths(report, config) == {
        "grid": tmp_path / "res.grid.csv",
        "other": tmp_path / "res.other.csv",
    }


def test_default_stem_under_artifacts_dir(tmp_path, monkeypatch):
    monkeypatch.setattr(emit, "LAB_ARTIFACTS_DIR", str(tmp_path))
    config = RunConfig(command="stats", format="both")
    assert json_path(_report(), config) == tmp_path / "demo.json"
    assert csv_paths(_report(), config) == {"grid": tmp_path / "demo.grid.csv"}
    assert json_path(_report(), RunConfig(command="stats")) is None


def test_csv_cells():
    table = DataTable(columns=("a", "b"), rows=[(1, None), (2.5, True), ("x", False)])
    assert table_to_csv(table) == b"a,b\n1,\n2.5,true\nx,false\n"


# ═══════════════════════════════════════════════════════════════════════
#  emit_report
# ═══════════════════════════════════════════════════════════════════════


def test_emit_writes_json_and_stdout(out_dir):
    target = out_dir / "nested" / "r.json"
    stdout, stderr = io.StringIO(), io.StringIO()
    report = _report()
    written = emit_report(report, RunConfig(command="stats", out=str(target)), stdout=stdout, stderr=stderr)
    assert written == [target]
    assert target.read_bytes() == report.to_json_bytes()
    assert stdout.getvalue().encode("utf-8") == report.to_json_bytes()
    assert "demo" in stderr.getvalue()
    assert not [p for p in target.parent.iterdir() if p.name.startswith(".")]


def test_emit_both_formats(out_dir):
    stdout, stderr = io.StringIO(), io.StringIO()
    config = RunConfig(command="stats", out=str(out_dir / "res"), format="both")
    written = emit_report(_report(), config, stdout=stdout, stderr=stderr)
    assert written == [out_dir / "res.json", out_dir / "res.grid.csv"]
    assert (out_dir / "res.grid.csv").read_text() == "a,b\n1,\n2,true\n"
    parsed = ExperimentReport.from_json_bytes((out_dir / "res.json").read_bytes())
    assert parsed.tables["grid"].rows[1] == (2, True)


def test_emit_names_failed_verdicts(out_dir):
    stderr = io.StringIO()
    report = _report(verdicts={"good": True, "bad": False})
    emit_report(report, RunConfig(command="stats", out=str(out_dir / "f.json")), stdout=io.StringIO(), stderr=stderr)
    assert "verdict failed: bad" in stderr.getvalue()
    assert "verdict failed: good" not in stderr.getvalue()


def test_emit_unwritable_target(tmp_path):
    blocker = tmp_path / "file.txt"
    blocker.write_text("x")
    config = RunConfig(command="stats", out=str(blocker / "r.json"))
    with pytest.raises(OutputError):
        emit_report(_report(), config, stdout=io.StringIO(), stderr=io.StringIO())


# ═══════════════════════════════════════════════════════════════════════
#  main() exit codes
# ═══════════════════════════════════════════════════════════════════════


def test_main_stats_succeeds(out_dir, capsys):
    target = out_dir / "stats.json"
    code = main(["stats", "--body", "lp:inf:8", "--samples", "2000", "--restarts", "2", "--out", str(target)])
    assert code == 0
    report = ExperimentReport.from_json_bytes(target.read_bytes())
    assert set(report.estimates) == {"M", "Med", "b", "k", "d"}
    assert report.estimates["b"].value == 1.0
    assert capsys.readouterr().out.encode("utf-8") == target.read_bytes()


def test_main_usage_error(capsys):
    assert main(["stats"]) == 2
    assert "error[usage_error]: --body" in capsys.readouterr().err


def test_main_non_integer_section_dimension(capsys):
    assert main(["sections", "--body", "lp:1:6", "--l", "2.5", "--subspaces", "1"]) == 2
    assert "--l" in capsys.readouterr().err


def test_main_rejected_grid_is_usage_error(capsys):
    code = main(["verify", "vrad", "--body", "lp:inf:4", "--k", "5", "--samples", "100", "--subspaces", "2"])
    assert code == 2
    assert "k=5" in capsys.readouterr().err


def test_main_lab_error(capsys):
    code = main(["sections", "--body", "lp:inf:40", "--l", "33", "--subspaces", "1", "--restarts", "1"])
    assert code == 3
    assert "error[dimension_mismatch]" in capsys.readouterr().err


def test_main_output_error(tmp_path, capsys):
    blocker = tmp_path / "file.txt"
    blocker.write_text("x")
    code = main(["stats", "--body", "lp:2:4", "--samples", "100", "--out", str(blocker / "r.json")])
    assert code == 4
    assert "error[output_error]" in capsys.readouterr().err


def test_main_failed_verdict(monkeypatch, out_dir, capsys):
    monkeypatch.setattr(main_module, "run_command", lambda config: _report(verdicts={"nested": False}))
    assert main(["stats", "--body", "lp:inf:4", "--out", str(out_dir / "f.json")]) == 1
    assert "verdict failed: nested" in capsys.readouterr().err


def test_main_unexpected_error(monkeypatch, capsys):
    def _boom(config):
        raise RuntimeError("boom")

    monkeypatch.setattr(main_module, "run_command", _boom)
    assert main(["stats", "--body", "lp:inf:4"]) == 70
    assert "error[internal_error]" in capsys.readouterr().err


def test_main_record_validation_error_is_unexpected(monkeypatch, capsys):
    """A malformed record is a bug in the lab, not a usage error."""

    def _bad_record(config, seed):
        return EstimateCI(value=1.0, stderr=1.0, method=Method.ANALYTIC)

    monkeypatch.setitem(commands._COMMANDS, "stats", _bad_record)
    assert main(["stats", "--body", "lp:inf:4"]) == 70
    assert "error[internal_error]" in capsys.readouterr().err
