import io
import json

import pytest

from hldde.asymptotics import select_engine
from hldde.cli import (
    EXIT_CONFIG, EXIT_FAIL, EXIT_IO, EXIT_PASS, SCENARIO_DIR, bundled_scenarios, load_scenario,
    main, report_markdown, run_scenario,
)
from hldde.errors import ConfigError


def run(argv):
    out = io.StringIO()
    code = main(argv, out=out)
    return code, out.getvalue()


def scenario(name):
    return str(SCENARIO_DIR / f"{name}.json")


def test_bundled_scenarios_load():
    names = [sc.name for sc in bundled_scenarios()]
    assert len(names) == 11
    assert names == sorted(names)


def test_auto_routing_matches_manual_engine():
    for sc in bundled_scenarios():
        for case in sc.cases:
            manual = case.params.get("engine")
            if manual is None and sc.engine != "auto":
                manual = sc.engine
            if manual is None and "engines" in case.params:
                manual = case.params["engines"][0]
            if manual is not None:
                assert select_engine(case.equation) == manual, (sc.name, case.label)


def test_verify_auto_equals_manual_report():
    sc = load_scenario(scenario("thm31_case2"))
    auto = run_scenario(sc, engine="auto")
    manual = run_scenario(sc, engine="sv")
    assert auto.passed and manual.passed
    assert report_markdown(auto) == report_markdown(manual)


def test_verify_bundled_scenario_passes(tmp_path):
    code, text = run(["verify", "--config", scenario("thm31_case2"), "--out", str(tmp_path)])
    assert code == EXIT_PASS
    assert text.startswith("PASS thm31_case2")


def test_classify_counterexample(tmp_path):
    code, text = run(["classify", "--config", scenario("counterexample")])
    assert code == EXIT_PASS
    assert "class D" in text
    assert "[NotRV]" in text


def test_impossible_tolerance_fails_with_report(tmp_path):
    code, text = run(["suite", "--config", scenario("thm31_case2"), "--tol", "1e-9",
                      "--out", str(tmp_path)])
    assert code == EXIT_FAIL
    assert "FAIL thm31_case2" in text
    assert "failing:" in text
    report = (tmp_path / "thm31_case2.md").read_text()
    assert "result: FAIL" in report
    assert "| false |" in report
    assert (tmp_path / "suite.md").exists()


def test_malformed_json_is_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "name": "x",\n  "check": \n}\n')
    code, _ = run(["verify", "--config", str(bad)])
    assert code == EXIT_CONFIG
    err = capsys.readouterr().err
    assert err.startswith("config error:")
    assert "bad.json:4:1" in err


def test_unknown_field_is_config_error(tmp_path, capsys):
    doc = json.loads((SCENARIO_DIR / "thm31_case2.json").read_text())
    doc["equation"]["r"]["powr"] = 2
    path = tmp_path / "typo.json"
    path.write_text(json.dumps(doc))
    code, _ = run(["verify", "--config", str(path)])
    assert code == EXIT_CONFIG
    assert "powr" in capsys.readouterr().err


def test_missing_config_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "absent.json")


def test_unwritable_output_is_io_error(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, _ = run(["classify", "--config", scenario("counterexample"), "--out", str(blocker)])
    assert code == EXIT_IO
    assert capsys.readouterr().err.startswith("i/o error:")


def test_trajectory_csv_schema(tmp_path):
    code, _ = run(["solve", "--config", scenario("counterexample"), "--out", str(tmp_path)])
    assert code == EXIT_PASS
    lines = (tmp_path / "counterexample_trajectory.csv").read_text().splitlines()
    assert lines[0] == "t,y,y_prime,quasi"
    t, y, yp, q = (float(x) for x in lines[-1].split(","))
    assert t == 4.0
    assert yp == q  # alpha = 2 and r = 1


def test_solve_writes_csv_to_stream():
    code, text = run(["solve", "--config", scenario("counterexample")])
    assert code == EXIT_PASS
    assert "\nt,y,y_prime,quasi\n" in text


def test_markdown_has_one_row_per_hypothesis_check(tmp_path):
    sc = load_scenario(scenario("thm31_case2"))
    rep = run_scenario(sc)
    text = report_markdown(rep)
    (hyp,) = rep.hypotheses.values()
    section = text.split("## Hypotheses")[1].split("##")[0]
    rows = [ln for ln in section.splitlines() if ln.startswith("| ") and not ln.startswith("| check")]
    assert len(rows) == len(hyp.checks)
    for c, row in zip(hyp.checks, rows):
        assert row.startswith(f"| {c.name} |")


def test_jsonl_has_one_object_per_trace_point(tmp_path):
    code, _ = run(["verify", "--config", scenario("thm31_case2"), "--out", str(tmp_path),
                   "--format", "jsonl"])
    assert code == EXIT_PASS
    objs = [json.loads(ln) for ln in (tmp_path / "thm31_case2.jsonl").read_text().splitlines()]
    assert all(set(o) == {"scenario", "trace", "t", "value"} for o in objs)
    ratio = [o for o in objs if o["trace"] == "ratio:thm31_case2"]
    rep = run_scenario(load_scenario(scenario("thm31_case2")))
    fit = rep.fits["thm31_case2"]
    assert len(ratio) == len(fit.ts)
    assert [o["t"] for o in ratio] == [float(t) for t in fit.ts]


@pytest.mark.parametrize("fmt", ["markdown", "csv", "jsonl"])
def test_artifacts_are_deterministic(tmp_path, fmt):
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        code, _ = run(["suite", "--config", scenario("rv_proportional"), "--out", str(d),
                       "--format", fmt])
        assert code == EXIT_PASS
    names = sorted(p.name for p in dirs[0].iterdir())
    assert names == sorted(p.name for p in dirs[1].iterdir())
    assert "rv_proportional_trajectory.csv" in names
    for name in names:
        assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes(), name


def test_suite_on_directory(tmp_path):
    for name in ("reciprocal_transform", "bertrand_table"):
        (tmp_path / f"{name}.json").write_text((SCENARIO_DIR / f"{name}.json").read_text())
    code, text = run(["suite", "--config", str(tmp_path)])
    assert code == EXIT_PASS
    lines = text.splitlines()
    assert lines[0].startswith("PASS bertrand_table")
    assert lines[1].startswith("PASS reciprocal_transform")


def test_karamata_default_suite():
    code, text = run(["karamata"])
    assert code == EXIT_PASS
    assert text.startswith("PASS karamata")
