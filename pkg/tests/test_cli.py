import json

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from relstate import cli, scenario


def _run(args):
    return CliRunner().invoke(cli.main, args)


def test_separable_limit_fixture(tmp_path):
    res = _run(["run", "separable_limit", "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    assert res.output.startswith("PASS relstate/separable")
    report = json.loads((tmp_path / "relstate_separable_limit.json").read_text())
    assert report["metrics"]["max_deviation"] <= 1e-12 and report["passed"]


def test_fubini_study_ricci_fixture(tmp_path):
    res = _run(["run", "fixtures/fubini_study_ricci", "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    assert "convergence_ratio=" in res.output
    report = json.loads((tmp_path / "geometry_fubini_study_ricci.json").read_text())
    assert 3 <= report["metrics"]["convergence_ratio"] <= 5


@pytest.mark.parametrize("body, field", [
    ("engine: relstate\nseed: 1\nrelstate:\n  task: separable\n  n_states: -3\n", "relstate.n_states"),
    ("engine: relstate\nseed: 1\nrelstate:\n  task: separable\n  n_sates: 3\n", "relstate.n_sates"),
    ("engine: geometry\nrelstate:\n  task: separable\n", "seed"),
    ("engine: relstate\nseed: 1\nrelstate:\n  task: separable\ngeometry:\n  task: kahler\n", "engine"),
])
def test_malformed_scenario_names_field(tmp_path, body, field):
    path = tmp_path / "bad.yaml"
    path.write_text(body)
    res = _run(["run", str(path), "--out", str(tmp_path)])
    assert res.exit_code == 1
    assert f"field '{field}'" in res.output


def test_malformed_scenario_reports_line(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("engine: relstate\nseed: 1\nrelstate:\n  task: separable\n  max_n: zero\n")
    res = _run(["validate", str(path)])
    assert res.exit_code == 1 and f"{path}:5" in res.output


def test_yaml_syntax_error_exit_1(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("engine: [relstate\n")
    assert _run(["run", str(path)]).exit_code == 1


def test_engine_error_names_error_class(tmp_path):
    path = tmp_path / "cond.yaml"
    path.write_text(yaml.safe_dump({
        "engine": "relstate", "seed": 0,
        "relstate": {"task": "conditional", "coefficients": [1, 0], "x_basis": [[1, 0], [0, 1]],
                     "t_basis": [[1, 0], [1, 0]], "condition": [1, 1]}}))
    res = _run(["run", str(path), "--out", str(tmp_path)])
    assert res.exit_code == 1 and "error: DegenerateBasis:" in res.output


def test_tolerance_failure_exit_2(tmp_path):
    res = _run(["run", "separable_limit", "--out", str(tmp_path), "--set", "tolerances.max_deviation=1e-30",
                "--set", "relstate.n_states=20"])
    assert res.exit_code == 2 and res.output.startswith("FAIL")


def test_unknown_tolerance_metric_exit_1(tmp_path):
    res = _run(["run", "separable_limit", "--out", str(tmp_path), "--set", "tolerances.speed=1"])
    assert res.exit_code == 1 and "tolerances.speed" in res.output


def test_csv_is_byte_identical_across_runs(tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / str(k)
        assert _run(["run", "metric_partial_trace", "--out", str(d), "--set", "relstate.n_states=40"]).exit_code == 0
        outs.append(((d / "relstate_metric_partial_trace.csv").read_bytes(),
                     (d / "relstate_metric_partial_trace.json").read_bytes()))
    assert outs[0] == outs[1]


def test_overrides_beat_file_and_are_recorded(tmp_path):
    res = _run(["run", "separable_limit", "--out", str(tmp_path), "--label", "small",
                "--set", "relstate.n_states=7", "--set", "seed=99"])
    assert res.exit_code == 0
    resolved = yaml.safe_load((tmp_path / "relstate_small.resolved.yaml").read_text())
    assert resolved["relstate"]["n_states"] == 7 and resolved["seed"] == 99
    rows = (tmp_path / "relstate_small.csv").read_text().strip().splitlines()
    assert len(rows) == 1 + 7


def test_label_defaults_to_timestamp(tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text("engine: geometry\nseed: 0\ngeometry:\n  task: ricci_norm\n  n: 16\n")
    assert _run(["run", str(path), "--out", str(tmp_path)]).exit_code == 0
    names = sorted(p.name for p in tmp_path.glob("geometry_*.csv"))
    assert len(names) == 1 and names[0][len("geometry_"):-4].replace("T", "").isdigit()


def test_complex_values_split_into_columns():
    text = cli.rows_to_csv([{"a": 1 + 2j, "b": 0.1}, {"a": -1j, "c": True}])
    assert text.splitlines() == ["a_re,a_im,b,c", "1.0,2.0,0.1,", "-0.0,-1.0,,true"]
    assert float(text.splitlines()[1].split(",")[2]) == 0.1


def test_list_fixtures_and_validate():
    res = _run(["list-fixtures"])
    assert res.exit_code == 0
    names = [line.split()[0] for line in res.output.splitlines()]
    for name in ("separable_limit", "fubini_study_ricci", "schrodinger_limit", "ideal_clock"):
        assert name in names
    for name in names:
        assert _run(["validate", name]).exit_code == 0


def test_every_fixture_has_a_description():
    assert all(desc for desc in scenario.list_fixtures().values())


def test_missing_file_exit_1():
    assert _run(["run", "no_such_fixture"]).exit_code == 1


def test_override_parsing():
    data = scenario.apply_overrides({"a": {"b": 1}}, ["a.b=[1, 2]", "c.d=x", "e=1e-3"])
    assert data == {"a": {"b": [1, 2]}, "c": {"d": "x"}, "e": 1e-3}
    with pytest.raises(scenario.ScenarioError):
        scenario.apply_overrides({}, ["novalue"])
    with pytest.raises(scenario.ScenarioError):
        scenario.apply_overrides({"a": 1}, ["a.b=2"])


def test_thread_cap_env(monkeypatch):
    from relstate import _kernels

    monkeypatch.setenv("RELSTATE_THREADS", "1")
    assert _kernels.worker_count() == 1
    assert _kernels.apply_thread_cap() == 1


def test_complex_scenario_values_are_pairs(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({
        "engine": "relstate", "seed": 0,
        "relstate": {"task": "conditional", "coefficients": [[0.8, 0], [0, 0.6]], "x_basis": [[1, 0], [0, 1]],
                     "t_basis": [[1, 0], [0, 1]], "condition": [[0, 1], 1], "mode": "raw"}}))
    res = _run(["run", str(path), "--out", str(tmp_path), "--label", "c"])
    assert res.exit_code == 0, res.output
    lines = (tmp_path / "relstate_c.csv").read_text().splitlines()
    assert lines[0] == "index,amplitude_re,amplitude_im,probability"
    amp = [complex(float(r.split(",")[1]), float(r.split(",")[2])) for r in lines[1:]]
    np.testing.assert_allclose(amp, [0.8 / np.conj(1j), 0.6j])


@pytest.mark.parametrize("level, n_lines", [(0, 0), (1, 1), (2, 1 + 1 + 3)])
def test_verbosity_levels(tmp_path, level, n_lines):
    res = _run(["run", "flat_ricci", "--out", str(tmp_path), "--set", f"output.verbosity={level}"])
    assert res.exit_code == 0
    assert len(res.output.splitlines()) == n_lines


def test_output_formats_subset(tmp_path):
    res = _run(["run", "flat_ricci", "--out", str(tmp_path), "--set", "output.formats=[json]"])
    assert res.exit_code == 0
    assert sorted(p.suffix for p in tmp_path.iterdir()) == [".json", ".yaml"]
