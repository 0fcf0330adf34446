import json

import numpy as np
import pytest

from dbar_bie.cli import main
from dbar_bie.experiments import (ExperimentConfig, run, fitted_slope, strictly_decreasing,
                                  sphere_exp_integral, Report, check)
from dbar_bie.geometry import ConfigurationError, make_boundary_grid


def _strip_timings(d):
    if isinstance(d, dict):
        return {k: _strip_timings(v) for k, v in d.items() if k != "timings"}
    if isinstance(d, list):
        return [_strip_timings(v) for v in d]
    return d


def test_config_validation():
    with pytest.raises(ConfigurationError, match="strictly increasing"):
        ExperimentConfig("solve", grids=[6, 4])
    with pytest.raises(ConfigurationError, match="unknown command"):
        ExperimentConfig("fly")
    with pytest.raises(ConfigurationError, match="at least 3"):
        ExperimentConfig("convergence-study", grids=[4, 6])
    with pytest.raises(ConfigurationError, match="schema"):
        ExperimentConfig.from_dict({"command": "solve", "gridz": [4]})


def test_usage_errors_exit_2(tmp_path, capsys):
    assert main(["solve", "--grid", "6,4", "--out", str(tmp_path)]) == 2
    assert main(["solve", "--field", "nope", "--out", str(tmp_path)]) == 2
    bad = tmp_path / "c.json"
    bad.write_text("[1, 2]")
    assert main(["solve", "--config", str(bad)]) == 2
    assert "schema" in capsys.readouterr().err


def test_dump_kernels_report_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["dump-kernels", "--out", str(a), "-q"]) == 0
    assert main(["dump-kernels", "--out", str(b), "-q"]) == 0
    ra = json.loads((a / "dump-kernels.json").read_text())
    rb = json.loads((b / "dump-kernels.json").read_text())
    assert ra["schema_version"] == "1.0" and ra["passed"]
    ra["config"].pop("out"), rb["config"].pop("out")
    ra.pop("artifacts"), rb.pop("artifacts")
    assert _strip_timings(ra) == _strip_timings(rb)
    assert (a / "kernels.csv").read_text() == (b / "kernels.csv").read_text()


def test_solve_with_zero_field(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"grids": [4], "fields": ["bc:poly"], "seed": 3}))
    code = main(["solve", "--config", str(cfg), "--field", "zero", "--out", str(tmp_path)])
    rep = json.loads((tmp_path / "solve.json").read_text())
    assert code == 0 and rep["config"]["fields"] == ["zero"] and rep["config"]["seed"] == 3
    psi = np.loadtxt(tmp_path / "densities_zero_P4.csv", delimiter=",", skiprows=1)
    assert not np.any(psi[:, 5:])


def test_verify_identities_reports_the_false_factor(tmp_path):
    code = main(["verify-identities", "--out", str(tmp_path), "-q"])
    rep = json.loads((tmp_path / "verify-identities.json").read_text())
    failed = [c["name"] for c in rep["checks"] if not c["passed"]]
    assert code == 1
    assert failed == ["|<Nz.(z-w)>|^2+|<Lz.(z-w)>|^2=2|z-w|^2"]
    assert rep["criteria"]["3"]["passed"]


def test_kmh_check_runs(tmp_path):
    rep = run("kmh-check", {"grids": [6, 8], "out": str(tmp_path)})
    assert rep.passed
    assert rep.data["minimal_C"][0] == pytest.approx(rep.data["minimal_C"][1], rel=1e-10)


def test_report_json_handles_special_values():
    r = Report("solve", {})
    r.checks.append(check("x", np.inf, 1.0))
    r.data["z"] = 1 + 2j
    d = json.loads(r.to_json())
    assert d["checks"][0]["value"] == "inf" and d["data"]["z"] == [1.0, 2.0]
    assert not r.passed


def test_helpers():
    assert fitted_slope([1, 2, 4], [1, 0.25, 1 / 16]) == pytest.approx(-2)
    assert strictly_decreasing([3, 2, 1]) and not strictly_decreasing([3, 3, 1])
    g = make_boundary_grid(12)
    v = g.integrate(np.exp(2.0 * g.nodes[:, 0].real))
    assert v == pytest.approx(sphere_exp_integral(2.0), rel=1e-12)
