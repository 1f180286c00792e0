import json
from importlib import resources

import pytest

from allmempro_sim.cli import main

DEMO = resources.files("allmempro_sim").joinpath("scenarios", "demo1_isolation.scn")


@pytest.fixture
def demo(tmp_path):
    path = tmp_path / "demo.scn"
    path.write_text(DEMO.read_text())
    return path


def test_run_passes_and_prints_metrics(demo, capsys):
    assert main(["run", str(demo)]) == 0
    out = capsys.readouterr().out
    assert f"OK: {demo}" in out
    assert "ept_violations=7" in out and "modeled_ticks=350000" in out


def test_run_writes_trace_and_json_metrics(demo, tmp_path, capsys):
    trace, metrics = tmp_path / "t.log", tmp_path / "m.json"
    assert main(["run", str(demo), "--trace", str(trace), "--metrics", str(metrics), "--json"]) == 0
    assert "illegal access FFFFF8016F651228 ==>> FFFFA400AC479FD8" in trace.read_text()
    data = json.loads(metrics.read_text())
    assert data["mtf_traps"] == data["ept_violations"] == 7
    assert "modeled_ticks" not in capsys.readouterr().out


def test_set_overrides_config(demo, capsys):
    assert main(["run", str(demo), "--set", "mediated=1"]) == 0
    assert "modeled_ticks=7" in capsys.readouterr().out


def test_bad_set_is_a_usage_error(demo, capsys):
    assert main(["run", str(demo), "--set", "nope=1"]) == 2
    with pytest.raises(SystemExit):
        main(["run", str(demo), "--set", "novalue"])


def test_failing_expectation_exits_one(tmp_path, capsys):
    path = tmp_path / "f.scn"
    path.write_text("load a.sys FFFF800000000000 10000\nread a.sys auto 5000 1 expect=01\n")
    assert main(["run", str(path)]) == 1
    assert "FAIL line 2" in capsys.readouterr().out


def test_continue_on_error(tmp_path, capsys):
    path = tmp_path / "e.scn"
    path.write_text("unload x.sys\nload a.sys FFFF800000000000 10000\nwrite a.sys auto 5000 01 expect=01\n")
    assert main(["run", str(path)]) == 1
    assert main(["run", str(path), "--continue-on-error"]) == 1
    assert "PASS line 3" in capsys.readouterr().out


def test_check_and_parse_errors(demo, tmp_path, capsys):
    assert main(["check", str(demo)]) == 0
    assert "commands ok" in capsys.readouterr().out
    bad = tmp_path / "bad.scn"
    bad.write_text("load a.sys\n")
    assert main(["check", str(bad)]) == 2
    assert f"{bad}:1:" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.scn")]) == 2
