import io as stdio
import json
import shutil
from importlib import resources
from pathlib import Path

import pandas as pd
import pytest

from capdisc import io
from capdisc.cli import main

FIXTURE = Path(str(resources.files("capdisc") / "data" / "fixture"))


def run_cli(*argv):
    out, err = stdio.StringIO(), stdio.StringIO()
    code = main(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def error_record(err):
    return json.loads(err.strip().splitlines()[-1])


@pytest.fixture()
def data(tmp_path):
    dst = tmp_path / "data"
    shutil.copytree(FIXTURE, dst)
    return dst


# --------------------------------------------------------------------------- schemas


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_schema_row_error_reports_file_line(tmp_path):
    p = write(tmp_path / "s.csv", "year,month,ticketing_carrier,origin,dest,seats,flights\n"
                                  "2010,1,AA,A,B,100,4\n"
                                  "2010,13,AA,A,B,100,4\n")
    with pytest.raises(io.SchemaError) as info:
        io.read_table(p, io.SEGMENTS)
    assert (info.value.line, info.value.column) == (3, "month")
    p = write(tmp_path / "t.csv", "year,month,ticketing_carrier,origin,dest,seats,flights\n"
                                  "2010,1,AA,A,B,1.5,4\n")
    with pytest.raises(io.SchemaError) as info:
        io.read_table(p, io.SEGMENTS)
    assert (info.value.line, info.value.column) == (2, "seats")


def test_schema_header_errors(tmp_path):
    p = write(tmp_path / "s.csv", "year,month,ticketing_carrier,origin,dest,seats\n2010,1,AA,A,B,1\n")
    with pytest.raises(io.SchemaError) as info:
        io.read_table(p, io.SEGMENTS)
    assert (info.value.line, info.value.column) == (1, "flights")
    p = write(tmp_path / "u.csv", "year,month,ticketing_carrier,origin,dest,seats,flights,extra\n")
    with pytest.raises(io.SchemaError) as info:
        io.read_table(p, io.SEGMENTS)
    assert info.value.column == "extra"
    with pytest.raises(io.SchemaError):
        io.read_table(write(tmp_path / "e.csv", ""), io.SEGMENTS)
    with pytest.raises(io.SchemaError):
        io.read_table(tmp_path / "missing.csv", io.SEGMENTS)


def test_optional_column_and_empty_cell(tmp_path):
    p = write(tmp_path / "s.csv", "year,month,ticketing_carrier,origin,dest,seats,flights,passengers\n"
                                  "2010,1,AA,A,B,100,4,80\n2010,1,AA,A,C,100,4,\n")
    with pytest.raises(io.SchemaError) as info:
        io.read_table(p, io.SEGMENTS)
    assert (info.value.line, info.value.column) == (3, "passengers")


def test_transcript_directory_consistency(data):
    recs = io.read_transcripts(data / "transcripts", data / "status.csv")
    status = io.read_table(data / "status.csv", io.STATUS)
    assert len(recs) == len(status)
    victim = sorted((data / "transcripts").glob("*.txt"))[0]
    victim.rename(data / "transcripts" / "ZZ_2001Q1.txt")
    with pytest.raises(io.SchemaError):
        io.read_transcripts(data / "transcripts", data / "status.csv")


def test_write_table_is_exact_and_unix(tmp_path):
    df = pd.DataFrame({"x": [0.1, 1 / 3, 1e-300], "s": ["a", "b", "c"]})
    io.write_table(df, tmp_path / "o.csv")
    raw = (tmp_path / "o.csv").read_bytes()
    assert b"\r\n" not in raw
    back = pd.read_csv(tmp_path / "o.csv")
    assert back["x"].tolist() == df["x"].tolist()


def test_key_value_config(tmp_path):
    p = write(tmp_path / "c.txt", "# comment\nseed = 3  # trailing\nmax-iter = 5\nseed = 4\n")
    assert io.read_key_value(p) == {"seed": "4", "max_iter": "5"}
    with pytest.raises(ValueError):
        io.read_key_value(write(tmp_path / "bad.txt", "seed 3\n"))


# --------------------------------------------------------------------------- command line


def test_simulate_is_reproducible(tmp_path):
    for d in ("a", "b"):
        code, out, _ = run_cli("simulate", "--seed", "7", "--out", str(tmp_path / d))
        assert code == 0 and "seed 7" in out
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert files
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f


def test_estimate_writes_table(data, tmp_path):
    code, out, _ = run_cli("estimate", "--config", str(data / "config.txt"), "--treatment", "main",
                           "--out", str(tmp_path / "o"))
    assert code == 0
    for label in ("Capacity Discipline", "Talk Eligible", "Monopoly", "Clusters"):
        assert label in out
    est = pd.read_csv(tmp_path / "o" / "estimates.csv")
    assert est["term"].iloc[0] == "CapacityDiscipline"


def test_diagnostics_lead_row(data, tmp_path):
    code, out, _ = run_cli("diagnostics", "--config", str(data / "config.txt"), "--lead",
                           "--out", str(tmp_path / "o"))
    assert code == 0 and "Capacity Discipline (lead)" in out
    diag = pd.read_csv(tmp_path / "o" / "diagnostics.csv")
    assert {"lead_coef", "lead_se", "lead_pvalue"} <= set(diag["statistic"])
    assert "twfe_share_negative" not in set(diag["statistic"])


def test_schema_error_exit_code(data, tmp_path):
    seg = data / "segments.csv"
    lines = seg.read_text().splitlines()
    lines[4] = lines[4].replace(",", ",x", 1)
    seg.write_text("\n".join(lines) + "\n")
    code, _, err = run_cli("build-panel", "--config", str(data / "config.txt"), "--out", str(tmp_path / "o"))
    rec = error_record(err)
    assert code == 2 and rec["error"] == "schema" and rec["line"] == 5


def test_numerical_error_exit_code(data, tmp_path):
    code, _, err = run_cli("estimate", "--config", str(data / "config.txt"), "--tol", "1e-15",
                           "--max-iter", "1", "--fe", "carrier-market-structure", "--out", str(tmp_path / "o"))
    assert code == 3 and error_record(err)["error"] == "numerical"


@pytest.mark.parametrize("argv", [
    ["estimate", "--treatment", "bogus"],
    ["estimate", "--alignment", "sideways"],
    ["estimate", "--B", "1"],
    ["estimate", "--seed", "x"],
    ["estimate", "--d-lo", "0.9", "--d-hi", "0.1"],
    ["estimate", "--legacy", "AA,WN", "--lcc", "WN"],
    ["estimate", "--segments", "/nonexistent/segments.csv"],
    ["estimate"],
    ["estimate", "--no-such-flag"],
    [],
])
def test_configuration_error_exit_code(argv, tmp_path):
    code, _, err = run_cli(*argv, "--out", str(tmp_path)) if argv else run_cli()
    assert code == 4
    if err:
        assert error_record(err)["exit_code"] == 4


def test_config_file_errors(tmp_path):
    bad = write(tmp_path / "c.txt", "segmnts = x.csv\n")
    code, _, err = run_cli("estimate", "--config", str(bad))
    assert code == 4 and "segmnts" in error_record(err)["message"]
    code, _, _ = run_cli("estimate", "--config", str(tmp_path / "none.txt"))
    assert code == 4


def test_command_line_overrides_config(data, tmp_path):
    base = tmp_path / "base"
    assert run_cli("build-panel", "--config", str(data / "config.txt"), "--out", str(base))[0] == 0
    code, _, _ = run_cli("build-panel", "--config", str(data / "config.txt"), "--min-flights", "25",
                         "--out", str(tmp_path / "o"))
    assert code == 0
    assert len(pd.read_csv(tmp_path / "o" / "panel.csv")) < len(pd.read_csv(base / "panel.csv"))


def test_empty_panel_is_a_data_error(data, tmp_path):
    code, _, err = run_cli("build-panel", "--config", str(data / "config.txt"), "--min-flights", "100000",
                           "--out", str(tmp_path / "o"))
    assert code == 2 and error_record(err)["error"] == "data"


def test_help_exits_cleanly():
    code, _, _ = run_cli("--help")
    assert code == 0
