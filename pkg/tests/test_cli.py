import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from periodic_effort import measure
from periodic_effort.analytic import closed_form_solution
from periodic_effort.cli import dumps, main
from periodic_effort.profiles import build_grid, preset


def _run(*args):
    return subprocess.run([sys.executable, "-m", "periodic_effort", *args],
                          capture_output=True, text=True)


def _report(path):
    return json.loads((path / "report.json").read_text())


def test_solve_fig1_matches_optimal_value(tmp_path):
    cp = _run("solve", "--preset", "fig1", "--eta-bar", "20", "--K", "2000",
              "--output-dir", str(tmp_path))
    assert cp.returncode == 0, cp.stderr
    doc = _report(tmp_path)
    p = preset("fig1", 20.0)
    phi_min = closed_form_solution(p, build_grid(p, 200)).phi_min
    assert doc["phi"] == pytest.approx(phi_min, rel=1e-5)
    assert doc["eta_bar_m"] == pytest.approx(16.37, abs=0.05)
    assert doc["converged"] is True
    with open(tmp_path / "run.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "alpha", "eta", "S", "psi", "h"]
    assert len(rows) == 2002
    assert b"\r" not in (tmp_path / "run.csv").read_bytes()


def test_analyze_sawtooth_reports_atom_mass(tmp_path):
    assert main(["analyze", "--preset", "fig2_sawtooth", "--output-dir", str(tmp_path)]) == 0
    doc = _report(tmp_path)
    assert doc["d_minus"][0]["t"] == 0.5
    assert doc["d_minus"][0]["mass"] == pytest.approx(0.5493, abs=1e-4)


def test_analyze_infinite_threshold_is_null(tmp_path):
    assert main(["analyze", "--preset", "fig4_square", "--output-dir", str(tmp_path)]) == 0
    text = (tmp_path / "report.json").read_text()
    assert "Infinity" not in text and "NaN" not in text
    assert json.loads(text)["eta_bar_m"] is None


def test_certify_uniform_profile(tmp_path):
    p = preset("fig1", 1.0)
    csv_path = tmp_path / "uniform.csv"
    csv_path.write_text(measure.uniform(build_grid(p, 400), 1.0).to_csv())
    out = tmp_path / "out"
    cp = _run("certify", "--preset", "fig1", "--eta-bar", "1", "--profile", str(csv_path),
              "--output-dir", str(out))
    assert cp.returncode == 0, cp.stderr
    doc = _report(out)
    assert doc["certificate_residual"] > 1e-3
    assert doc["phi"] > 0


def test_certify_solver_output_passes(tmp_path):
    assert main(["solve", "--preset", "fig2_sawtooth", "--eta-bar", "0.1", "--K", "300",
                 "--output-dir", str(tmp_path / "s")]) == 0
    assert main(["certify", "--preset", "fig2_sawtooth", "--eta-bar", "0.1",
                 "--profile", str(tmp_path / "s" / "run.csv"),
                 "--output-dir", str(tmp_path / "c")]) == 0
    doc = _report(tmp_path / "c")
    assert doc["certificate_residual"] < 1e-8
    assert doc["atoms"] == [{"t": 0.5, "mass": pytest.approx(0.1)}]


def test_certify_rejects_wrong_mass(tmp_path, capsys):
    p = preset("fig1", 1.0)
    path = tmp_path / "u.csv"
    path.write_text(measure.uniform(build_grid(p, 100), 1.0).to_csv())
    assert main(["certify", "--preset", "fig1", "--eta-bar", "2", "--profile", str(path)]) == 1
    assert "mass" in capsys.readouterr().err


def test_non_converged_exit_code(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"solver": {"max_iterations": 2}}))
    status = main(["solve", "--preset", "fig1", "--eta-bar", "2", "--K", "200",
                   "--config", str(cfg), "--output-dir", str(tmp_path / "o")])
    assert status == 2
    assert _report(tmp_path / "o")["converged"] is False


@pytest.mark.parametrize("args", [
    ["solve", "--preset", "fig9", "--eta-bar", "1"],
    ["solve", "--preset", "fig1", "--eta-bar", "0"],
    ["solve", "--preset", "fig1", "--eta-bar", "-2"],
    ["solve", "--eta-bar", "1"],
    ["sweep", "--preset", "fig1"],
    ["sweep", "--preset", "fig1", "--eta-list", "2,1"],
    ["sweep", "--preset", "fig1", "--eta-list", "1,x"],
    ["certify", "--preset", "fig1", "--eta-bar", "1"],
])
def test_config_errors_exit_1(args, tmp_path):
    assert main([*args, "--output-dir", str(tmp_path)]) == 1


@pytest.mark.parametrize("doc", [
    "{not json",
    json.dumps({"eta_bar": 1.0, "eta_list": [1.0, 2.0]}),
    json.dumps({"grid": 100}),
    json.dumps({"solver": {"armijo_c": 3.0}}),
    json.dumps([1, 2]),
])
def test_bad_config_files_exit_1(doc, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(doc)
    assert main(["solve", "--preset", "fig1", "--config", str(cfg),
                 "--output-dir", str(tmp_path)]) == 1


def test_config_file_supplies_everything(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "problem": preset("fig4_square").to_dict(),
        "grid_size": 200,
        "eta_bar": 4.0,
        "solver": {"tolerance": 1e-7},
        "output_dir": str(tmp_path / "from_config"),
    }))
    assert main(["solve", "--config", str(cfg)]) == 0
    doc = _report(tmp_path / "from_config")
    assert doc["eta_bar"] == 4.0
    assert doc["atoms"][0]["t"] == 0.75


def test_problem_json_file(tmp_path):
    prob = tmp_path / "p.json"
    prob.write_text(json.dumps({"period": 2.0, "delta": 0.5, "eta_bar": 1.0,
                                "c": [{"t": 0.0, "kind": "cos", "coeffs": [1.0, -0.5]}]}))
    assert main(["solve", "--problem", str(prob), "--K", "100",
                 "--output-dir", str(tmp_path / "o")]) == 0
    with open(tmp_path / "o" / "run.csv", newline="") as fh:
        last = list(csv.DictReader(fh))[-1]
    assert float(last["t"]) == 2.0
    assert float(last["alpha"]) == pytest.approx(2.0)


def test_env_var_overrides_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("PEO_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["analyze", "--preset", "fig1", "--output-dir", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "env" / "report.json").exists()
    assert not (tmp_path / "flag").exists()


def test_outputs_are_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert main(["solve", "--preset", "fig2_sawtooth", "--eta-bar", "1", "--K", "300",
                     "--output-dir", str(tmp_path / d)]) == 0
    for name in ("run.csv", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_floats_round_trip_exactly(tmp_path):
    assert main(["solve", "--preset", "fig1", "--eta-bar", "3", "--K", "100",
                 "--output-dir", str(tmp_path)]) == 0
    with open(tmp_path / "run.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows[:5]:
        for v in r.values():
            assert repr(float(v)) == v


def test_dumps_is_sorted_and_nan_free():
    text = dumps({"b": np.float64(np.inf), "a": [np.int64(2), np.nan, True]})
    assert text == '{\n  "a": [\n    2,\n    null,\n    true\n  ],\n  "b": null\n}\n'


def test_sweep_writes_table(tmp_path):
    assert main(["sweep", "--preset", "fig2_sawtooth", "--eta-list", "0.1,1,6", "--K", "300",
                 "--output-dir", str(tmp_path)]) == 0
    with open(tmp_path / "sweep.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["eta_bar", "phi", "support_measure", "converged",
                             "dominance_violation", "atom_mass_t=0.5"]
    assert [float(r["eta_bar"]) for r in rows] == [0.1, 1.0, 6.0]
    assert float(rows[0]["atom_mass_t=0.5"]) == pytest.approx(0.1)
    assert float(rows[2]["atom_mass_t=0.5"]) == pytest.approx(0.5493, abs=1e-2)
    for i in range(3):
        assert (tmp_path / f"eta_{i:02d}" / "run.csv").exists()
    assert len(_report(tmp_path)["runs"]) == 3


def test_reproduce_figure(tmp_path):
    assert main(["reproduce-figure", "--figure", "fig4", "--K", "200",
                 "--output-dir", str(tmp_path)]) == 0
    out = tmp_path / "fig4"
    assert (out / "sweep.csv").exists()
    for i in range(3):
        assert (out / f"eta_{i:02d}" / "run.csv").exists()
        assert (out / f"eta_{i:02d}" / "uniform.csv").exists()
    doc = _report(out)
    assert doc["analysis"]["d_plus"] == [0.25]
    assert [r["eta_bar"] for r in doc["runs"]] == [1.0, 4.0, 10.0]


def test_usage_errors_exit_1():
    cp = _run("reproduce-figure", "--figure", "fig5")
    assert cp.returncode == 1
    assert "invalid choice" in cp.stderr
