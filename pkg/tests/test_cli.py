import csv
import io
import json

import pytest

from gridstress.cli import main
from gridstress.metrics import TABLE_COLUMNS, analyze
from gridstress.network import builtin_case, to_json
from gridstress.scenario import (
    SCHEMA,
    Scenario,
    ScenarioConfig,
    load_reports,
    ieee118_scenarios,
    read_summary_csv,
    run,
    summary_csv,
)
from test_switching import dumbbell


def cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_analyze_triangle_csv(capsys):
    code, out, err = cli(capsys, "analyze", "builtin:triangle", "--no-timestamp")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert tuple(rows[0]) == TABLE_COLUMNS
    assert len(rows) == 2 and len(rows[1]) == 9
    row = read_summary_csv(out)[0]
    assert row["loading"] == "100%"
    assert row["V_rank"] == pytest.approx(90.0) and row["C_rank"] == pytest.approx(90.0)
    assert (row["V_degree"], row["C_degree"], row["emergency_violations"], row["contingency_violations"]) == (0, 0, 0, 0)
    assert "90.00%" in err


def test_preventive_unstressed_reports_trigger_not_met(capsys):
    code, out, err = cli(capsys, "preventive", "builtin:triangle")
    assert code == 0
    assert "trigger not met" in err


def test_ieee118_scenarios_rows(capsys):
    code, out, _ = cli(capsys, "analyze", "builtin:case118", "--ieee118-scenarios", "-q")
    assert code == 0
    rows = read_summary_csv(out)
    assert [r["loading"] for r in rows] == [s.label for s in ieee118_scenarios()]
    assert all(r["emergency_violations"] <= r["contingency_violations"] for r in rows)


def test_json_byte_identical(tmp_path, capsys):
    argv = ["preventive", "builtin:four_bus", "--format", "json", "--no-timestamp", "-q"]
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    assert cli(capsys, *argv, "--out", a)[0] == 0
    assert cli(capsys, *argv, "--out", b)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    doc = json.loads(a.read_text())
    assert doc["schema"] == SCHEMA
    assert "created" not in doc and "timing" not in doc
    assert doc["provenance"]["config"]["mode"] == "preventive"
    assert len(doc["provenance"]["input_sha256"]) == 64


def test_json_timestamp_present_by_default(capsys):
    code, out, _ = cli(capsys, "analyze", "builtin:triangle", "--format", "json", "-q")
    doc = json.loads(out)
    assert "created" in doc and "total" in doc["timing"]


def test_json_round_trip_reports(select_bus):
    config = ScenarioConfig("builtin:case118", ieee118_scenarios())
    report = run(config, timestamp=False)
    back = load_reports(report.to_json())
    assert len(back) == 4
    for a, b in zip(report.reports, back):
        assert a.equals(b)
    assert back[2].equals(analyze(select_bus, label="106% (select buses)").report)


def test_csv_round_trip():
    report = run(ScenarioConfig("builtin:mesh30", (Scenario("a", 1.0), Scenario("b", 1.1))), timestamp=False)
    rows = read_summary_csv(summary_csv(report))
    assert rows == report.table()


def test_empty_scenarios_header_only():
    report = run(ScenarioConfig("builtin:triangle", ()), timestamp=False)
    assert summary_csv(report) == ",".join(TABLE_COLUMNS) + "\n"


def test_scenario_flags(capsys):
    code, out, _ = cli(capsys, "analyze", "builtin:case118", "--scenario", "low:0.97",
                       "--scenario", "high:1.1", "-q")
    assert code == 0
    assert [r["loading"] for r in read_summary_csv(out)] == ["low", "high"]
    code, out, _ = cli(capsys, "analyze", "builtin:case118", "--scale", "1.05",
                       "--bus-increase", "40=16,41=105", "--label", "sel", "-q")
    by_flag = read_summary_csv(out)[0]
    code, out, _ = cli(capsys, "analyze", "builtin:case118", "--scale", "1.05",
                       "--bus-scale", f"40={1.05 * 1.16},41={1.05 * 2.05}", "-q")
    assert read_summary_csv(out)[0]["V_rank"] == pytest.approx(by_flag["V_rank"], rel=1e-12)


def test_corrective_rows(capsys):
    code, out, err = cli(capsys, "corrective", "builtin:mesh30", "--contingency", "worst", "-q")
    assert code == 0
    labels = [r["loading"] for r in read_summary_csv(out)]
    assert labels == ["100%", "100% N-1 22", "100% (CTS)"]


def test_corrective_by_bus_pair(capsys):
    code, out, err = cli(capsys, "corrective", "builtin:case118", "--contingency", "8-5")
    assert code == 0
    assert "open branch 6" in err


def test_chart_data_and_matrices(tmp_path, capsys):
    chart = tmp_path / "chart.csv"
    prefix = tmp_path / "m"
    code, _, _ = cli(capsys, "analyze", "builtin:triangle", "--chart-data", chart,
                     "--dump-matrices", prefix, "-q")
    assert code == 0
    rows = list(csv.DictReader(chart.open()))
    assert rows[0].keys() == {"scenario", "metric", "value"}
    assert {r["metric"] for r in rows} >= {"max_v_rank", "v_system", "emergency_violations"}
    assert sorted(p.name for p in tmp_path.glob("m_*")) == ["m_100_lodf.csv", "m_100_ptdf.csv"]


# exit-code contract


@pytest.mark.parametrize("argv", [
    ["analyze"],
    ["bogus", "builtin:triangle"],
    ["analyze", "builtin:triangle", "--bus-scale", "1:2"],
    ["preventive", "builtin:triangle", "--budget", "0"],
    ["corrective", "builtin:triangle"],
    ["corrective", "builtin:case118", "--contingency", "89-92"],
    ["corrective", "builtin:case118", "--contingency", "1-118"],
    ["analyze", "builtin:triangle", "--ieee118-scenarios", "--scale", "1.1"],
    ["analyze", "builtin:triangle", "--scale", "-1"],
])
def test_exit_usage(capsys, argv):
    code, _, err = cli(capsys, *argv)
    assert code == 2
    assert err


def test_exit_parse_error(tmp_path, capsys):
    bad = tmp_path / "bad.m"
    bad.write_text("function mpc = bad\nmpc.baseMVA = 100;\nmpc.bus = [\n\t1\t3\tx;\n];\n")
    code, _, err = cli(capsys, "analyze", bad)
    assert code == 3
    assert "cannot parse case" in err and "line 4" in err


def test_exit_infeasible(capsys):
    code, _, err = cli(capsys, "analyze", "builtin:triangle", "--scale", "3")
    assert code == 4 and "bus 1" in err
    code, _, err = cli(capsys, "corrective", "builtin:case118", "--contingency", "7")
    assert code == 4 and "radial" in err


def test_exit_no_candidate(tmp_path, capsys):
    path = tmp_path / "dumbbell.json"
    path.write_text(to_json(dumbbell()))
    code, _, err = cli(capsys, "preventive", path)
    assert code == 5
    assert "no-candidate" in err


def test_exit_list_depleted(capsys):
    code, out, err = cli(capsys, "preventive", "builtin:ladder12", "--budget", "all")
    assert code == 6
    assert "list-depleted" in err
    assert len(read_summary_csv(out)) == 1


def test_exit_io(tmp_path, capsys):
    code, _, err = cli(capsys, "analyze", "builtin:triangle", "--out", tmp_path / "missing" / "x.csv")
    assert code == 7
    code, _, _ = cli(capsys, "analyze", tmp_path / "nope.m")
    assert code == 7


def test_help_exits_zero(capsys):
    assert cli(capsys, "--help")[0] == 0
