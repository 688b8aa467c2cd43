import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from mtcsched.cli import parse_and_dispatch
from mtcsched.config import ConfigError, ScenarioFile, load_scenario, parse_scenario

EXAMPLE = Path(__file__).resolve().parent.parent / "scenarios" / "default.ini"


def run(argv, capsys):
    code = parse_and_dispatch(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


# -- scenario files ----------------------------------------------------------------

def test_example_scenario_equals_defaults():
    assert load_scenario(EXAMPLE) == ScenarioFile()


def test_dotted_keys_and_decibels():
    cfg = parse_scenario("cell.inner_m = 60\n[underlay]\nsinr_threshold_db = 0\n")
    assert cfg.scenario.inner == 60.0
    assert cfg.underlay.sinr_threshold == 1.0


@pytest.mark.parametrize("text,fragment", [
    ("[underlay]\ndelta = -1\n", "line 2: underlay.delta"),
    ("[scenario]\nseed = 1\nnodes = zero\n", "line 3: scenario.nodes"),
    ("[scenario]\ncolour = red\n", "line 2: scenario.colour: unknown field"),
    ("[radio]\nbandwidth_hz = 0\n", "line 2: radio.bandwidth_hz"),
    ("[grouping]\nxi = -1\n", "line 2: grouping.xi"),
])
def test_invalid_fields_are_named(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_scenario(text)


def test_malformed_line_is_reported():
    with pytest.raises(ConfigError, match="line"):
        parse_scenario("[scenario]\nthis line has no separator\n")


# -- subcommands ---------------------------------------------------------------------

def test_schedule_outputs_one_row_per_scheduled_node(capsys):
    code, out, _ = run(["schedule", "--scenario", str(EXAMPLE), "--policy", "noncoop"], capsys)
    assert code == 0
    table = rows(out)
    assert len(table) == 40
    assert all(int(r["elements"]) >= 1 for r in table)


def test_schedule_json_and_output_file(tmp_path, capsys):
    target = tmp_path / "s.json"
    code, out, _ = run(["schedule", "--scenario", str(EXAMPLE), "--format", "json", "--output", str(target)],
                       capsys)
    assert code == 0 and out == ""
    doc = json.loads(target.read_text())
    assert doc["policy"] and doc["feasible"] is True
    assert len(doc["rows"]) < 40  # groups of three collapse to their representative


def test_group_roles(capsys):
    code, out, _ = run(["group", "--scenario", str(EXAMPLE), "--seed", "4"], capsys)
    assert code == 0
    assert {r["role"] for r in rows(out)} <= {"representative", "member", "solo"}


def test_lte_subcommand(capsys):
    code, out, _ = run(["lte", "--scenario", str(EXAMPLE)], capsys)
    assert code == 0
    table = rows(out)
    assert all(0 <= int(r["tbs_index"]) <= 26 for r in table)
    assert sum(int(r["prbp"]) for r in table) <= 60 * 2


def test_lte_infeasible_pool_exits_2(capsys):
    code, _, _ = run(["lte", "--scenario", str(EXAMPLE), "--prbp-per-min", "1"], capsys)
    assert code == 2


def test_interference_grid(capsys):
    code, out, _ = run(["interference", "--M", "0..12", "--dcb", "150,250", "--gth", "2", "--trials", "2000"],
                       capsys)
    assert code == 0
    table = rows(out)
    series = {r["series"] for r in table}
    assert series == {"dcb=150m,gth=2dB", "dcb=250m,gth=2dB"}
    assert {int(r["x"]) for r in table} == set(range(13))


def test_reproduce_lifetime_preset(capsys):
    code, out, _ = run(["reproduce", "--figure", "lifetime", "--seed", "7", "--trials", "2"], capsys)
    assert code == 0
    assert {"era", "coop(xi=0.5)", "coop(xi=2)"} <= {r["series"] for r in rows(out)}


def test_reproduce_writes_summary(tmp_path, capsys):
    summary = tmp_path / "summary.json"
    code, out, _ = run(["reproduce", "--figure", "motivation", "--trials", "2", "--summary", str(summary)], capsys)
    assert code == 0
    assert json.loads(summary.read_text())["experiment"] == "motivation"
    assert out.startswith("series,axis,x,statistic,value\n")


# -- failures -------------------------------------------------------------------------

def test_bad_field_exits_1_and_names_it(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[underlay]\ndelta = -1\n")
    code, _, err = run(["interference", "--scenario", str(bad), "--trials", "10"], capsys)
    assert code == 1
    assert "underlay.delta" in err


def test_missing_scenario_file(capsys):
    code, _, err = run(["schedule", "--scenario", "/nonexistent/x.ini"], capsys)
    assert code == 1
    assert "x.ini" in err


def test_scenario_required_for_schedule(capsys):
    code, _, err = run(["schedule"], capsys)
    assert code == 1
    assert "--scenario" in err


def test_unknown_flag_rejected(capsys):
    code, _, _ = run(["interference", "--bogus"], capsys)
    assert code == 1


@pytest.mark.parametrize("argv", [["interference", "--M", "a..b"], ["interference", "--trials", "0"],
                                  ["reproduce", "--figure", "outage", "--trials", "0"],
                                  ["interference", "--M", "-1"]])
def test_bad_values_exit_1(argv, capsys):
    assert run(argv, capsys)[0] == 1


def test_console_entry_point_runs():
    res = subprocess.run([sys.executable, "-m", "mtcsched", "interference", "--M", "0", "--trials", "100"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert res.stdout.startswith("series,axis,x,statistic,value")
