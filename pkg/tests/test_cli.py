import csv
import json

import numpy as np
import pytest

from epholonomy.cli import (
    EXIT_CHECK_FAILED,
    EXIT_INVALID_CONFIG,
    EXIT_NUMERICAL_ABORT,
    EXIT_PASS,
    TRACE_COLUMNS,
    ConfigError,
    RunSummary,
    ScenarioConfig,
    main,
    read_config_file,
    report_flatness,
    run_scenario,
    sweep,
)
from epholonomy.model import I_HOL


def run(tmp_path, *args, name="run"):
    out = tmp_path / name
    code = main(["run", "--out", str(out), "--no-timing", *args])
    return code, out


@pytest.mark.parametrize(
    "scenario, extra, label",
    [
        ("no-ep", ["--r", "0.5"], "identity"),
        ("ep-minus", ["--rho", "1.0"], "I"),
        ("ep-plus", ["--rho", "1.0"], "I^3"),
        ("both-eps", [], "I^2"),
        ("winding", ["--winding", "4"], "identity"),
        ("winding", ["--winding", "-3"], "I"),
        ("gate-cycle", [], "identity"),
    ],
)
def test_loop_scenarios_pass(tmp_path, scenario, extra, label):
    code, out = run(tmp_path, "--scenario", scenario, "--steps", "2000", *extra)
    assert code == EXIT_PASS
    summary = RunSummary.from_json((out / "summary.json").read_text())
    assert summary.label == label
    assert summary.passed
    with open(out / "trace.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == TRACE_COLUMNS
    assert len(rows) > 10


def test_ep_minus_holonomy_in_summary(tmp_path):
    code, out = run(tmp_path, "--scenario", "ep-minus", "--steps", "2000")
    data = json.loads((out / "summary.json").read_text())
    assert set(data) == {"scenario", "params", "holonomy", "classification", "max_lambda_dev",
                         "est_error", "wall_time_s", "checks"}
    hol = np.array(data["holonomy"]["re"]) + 1j * np.array(data["holonomy"]["im"])
    assert np.linalg.norm(hol - I_HOL) < 1e-6
    assert data["max_lambda_dev"] < 1e-7
    assert {"name", "pass", "value", "tol"} == set(data["checks"][0])


def test_gate_cycle_checks(tmp_path):
    summary = run_scenario(ScenarioConfig("gate-cycle", steps=2000), write=False)
    gates = [c for c in summary.checks if c.name.startswith("gate_step")]
    assert len(gates) == 4 and all(c.passed and c.value < 1e-5 for c in gates)


def test_trace_full_precision(tmp_path):
    code, out = run(tmp_path, "--scenario", "ep-minus", "--steps", "1000", "--trace-stride", "100")
    with open(out / "trace.csv") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 1 + 11
    mantissa = rows[1][4].split("e")[0].lstrip("-").replace(".", "")
    assert len(mantissa) == 17


def test_flatness_scan(tmp_path):
    code, out = run(tmp_path, "--scenario", "flatness-scan", "--grid", "21", "--t", "1.0")
    assert code == EXIT_PASS
    with open(out / "flatness.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][-1] == "distance_to_nearest_EP"
    assert len(rows) == 1 + 21 * 21


def test_flatness_vacuous_scan(tmp_path):
    fname = tmp_path / "flat.csv"
    rows = report_flatness((0.9999, 1.0001, -1e-4, 1e-4), grid=2, fname=fname)
    assert np.all(np.isnan(rows[:, 2:5]))
    body = fname.read_text().splitlines()[1:]
    assert all(line.split(",")[2:5] == ["skip"] * 3 for line in body)
    with pytest.raises(ConfigError):
        report_flatness(grid=1)


def test_k_check(tmp_path):
    code, out = run(tmp_path, "--scenario", "k-check")
    assert code == EXIT_PASS
    assert len((out / "k_check.csv").read_text().splitlines()) == 1 + 2000


def test_exit_codes(tmp_path):
    assert run(tmp_path, "--scenario", "ep-minus", "--rho", "2.5")[0] == EXIT_INVALID_CONFIG
    assert run(tmp_path, "--scenario", "ep-minus", "--steps", "10")[0] == EXIT_INVALID_CONFIG
    assert run(tmp_path, "--scenario", "no-ep", "--r", "1.2")[0] == EXIT_INVALID_CONFIG
    assert main(["run", "--out", str(tmp_path / "x")]) == EXIT_INVALID_CONFIG
    assert run(tmp_path, "--scenario", "ep-minus", "--rho", "1.9995", "--steps", "1000")[0] == EXIT_NUMERICAL_ABORT
    # an impossible tolerance makes the holonomy check fail
    assert run(tmp_path, "--scenario", "ep-minus", "--steps", "1000", "--tol", "1e-30")[0] == EXIT_CHECK_FAILED


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# ep loop\nscenario = ep-minus\nrho = 0.5\nsteps = 1000\nt = 0\n")
    assert read_config_file(cfg) == {"scenario": "ep-minus", "rho": 0.5, "steps": 1000, "time_slice": 0.0}
    code, out = run(tmp_path, "--config", str(cfg), "--rho", "1.5")
    assert code == EXIT_PASS
    params = json.loads((out / "summary.json").read_text())["params"]
    assert params["rho"] == 1.5 and params["steps"] == 1000
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    assert main(["run", "--config", str(bad)]) == EXIT_INVALID_CONFIG


def test_summary_round_trip():
    s = run_scenario(ScenarioConfig("ep-plus", steps=1000), write=False)
    back = RunSummary.from_json(s.to_json())
    assert back.to_json() == s.to_json()
    assert np.array_equal(back.holonomy, s.holonomy)


def test_byte_identical_reruns(tmp_path):
    _, a = run(tmp_path, "--scenario", "no-ep", "--steps", "1000", name="a")
    _, b = run(tmp_path, "--scenario", "no-ep", "--steps", "1000", name="b")
    for f in ("summary.json", "trace.csv"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_config_key_is_stable():
    a = ScenarioConfig("ep-minus", rho=0.5, output_dir="x")
    b = ScenarioConfig("ep-minus", rho=0.5, output_dir="y")
    assert a.key() == b.key() != ScenarioConfig("ep-minus", rho=0.6).key()


def test_sweep_radius(tmp_path):
    code = main(["sweep", "--scenario", "ep-minus", "--steps", "2000", "--no-timing",
                 "--vary", "rho=0.2,0.5,1.0,1.5,1.9", "--out", str(tmp_path)])
    assert code == EXIT_PASS
    index = json.loads((tmp_path / "index.json").read_text())
    assert len(index) == 5
    for key, entry in index.items():
        assert entry["summary"]["classification"]["label"] == "I"
        assert (tmp_path / key / "summary.json").exists()


def test_sweep_records_errors_and_continues(tmp_path):
    cfgs = [ScenarioConfig("ep-minus", rho=1.9995, steps=1000), ScenarioConfig("ep-minus", steps=1000)]
    index = sweep(cfgs, tmp_path)
    first, second = index.values()
    assert first["exit_code"] == EXIT_NUMERICAL_ABORT and "PathThroughEP" in first["error"]
    assert second["exit_code"] == EXIT_PASS


def test_sweep_order_independent(tmp_path):
    cfgs = [ScenarioConfig("ep-minus", rho=r, steps=1000, record_time=False) for r in (0.5, 1.0)]
    sweep(cfgs, tmp_path / "fwd")
    sweep(cfgs[::-1], tmp_path / "rev", workers=2)
    for c in cfgs:
        for f in ("summary.json", "trace.csv"):
            assert (tmp_path / "fwd" / c.key() / f).read_bytes() == (tmp_path / "rev" / c.key() / f).read_bytes()


def test_sweep_time_slices_recorded(tmp_path):
    cfgs = [ScenarioConfig("ep-minus", time_slice=t, steps=1000) for t in (0.0, 0.5, 1.0)]
    index = sweep(cfgs, tmp_path)
    labels = [e["summary"]["classification"]["label"] for e in index.values()]
    assert labels[0] == "I"
    assert all(e["exit_code"] == EXIT_PASS for e in index.values())


def test_sweep_steps_est_error_shrinks(tmp_path):
    cfgs = [ScenarioConfig("ep-minus", rho=1.9, steps=n) for n in (1000, 2000)]
    errs = [e["summary"]["est_error"] for e in sweep(cfgs, tmp_path).values()]
    assert errs[1] < errs[0]


def test_empty_sweep_rejected(tmp_path):
    with pytest.raises(ConfigError):
        sweep([], tmp_path)
    assert main(["sweep", "--scenario", "ep-minus", "--vary", "nope=1", "--out", str(tmp_path)]) == EXIT_INVALID_CONFIG
