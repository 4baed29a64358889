import csv
import json
from pathlib import Path

import pytest
import yaml

from consensus_pd.algorithm import CSV_COLUMNS
from consensus_pd.harness import ConfigError, ExperimentConfig, main

DESK = Path(__file__).resolve().parents[1] / "demos" / "configs" / "desk.yaml"

FAST_VALIDATE = {"conservation_steps": 2000, "random_states": 50, "sandwich_samples": 500,
                 "monitor_steps": 200, "distance_states": 5, "reduction_steps": 100}


def write_config(tmp_path, name="cfg.yaml", **overrides):
    raw = yaml.safe_load(DESK.read_text())
    raw.update(overrides)
    path = tmp_path / name
    path.write_text(yaml.safe_dump(raw))
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def test_config_round_trip_is_stable():
    cfg = ExperimentConfig.load(DESK)
    again = ExperimentConfig.loads(cfg.dumps())
    assert again == cfg
    assert again.dumps() == cfg.dumps()


def test_center_shorthand_expands_to_quadratic():
    cfg = ExperimentConfig.load(DESK)
    a1 = cfg.agents[1]
    assert (a1["a"], a1["b"], a1["p"], a1["q"]) == (2.0, -2.0, [], [])


def test_unknown_key_and_yaml_error_are_located(tmp_path):
    with pytest.raises(ConfigError, match="unknown keys"):
        ExperimentConfig.from_dict({**yaml.safe_load(DESK.read_text()), "gama": 0.1})
    with pytest.raises(ConfigError, match="line 3, column 5"):
        ExperimentConfig.loads("gamma: 0.1\nnetwork: {preset: path\nseed: 3\n")


def test_solve_converges_and_writes_outputs(tmp_path):
    assert main(["solve", "--config", str(DESK), "--out", str(tmp_path)]) == 0
    summary = read_json(tmp_path / "summary.json")
    assert summary["schema"] == 1
    assert summary["stop_reason"] == "converged"
    assert summary["final_dist"] <= 1e-6
    with open(tmp_path / "trajectory.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) - 1 == summary["iterations"] + 1
    assert [int(r[0]) for r in rows[1:]] == list(range(len(rows) - 1))
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".")]


def test_solve_is_byte_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["solve", "--config", str(DESK), "--out", str(a)]) == 0
    assert main(["solve", "--config", str(DESK), "--out", str(b)]) == 0
    for name in ("trajectory.csv", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_negative_initial_multiplier_exits_1(tmp_path, capsys):
    path = write_config(tmp_path, init={"x0": [0.0, 0.0, 0.0], "lam0": [-1.0]})
    assert main(["solve", "--config", str(path), "--out", str(tmp_path)]) == 1
    assert "nonnegative orthant" in capsys.readouterr().err


def test_disconnected_network_exits_1_naming_assumption(tmp_path, capsys):
    path = write_config(tmp_path, network={"edges": [[0, 1, 0.2]]})
    assert main(["certify", "--config", str(path), "--out", str(tmp_path)]) == 1
    assert "Assumption 3" in capsys.readouterr().err


def test_infeasible_problem_names_assumption_1(tmp_path, capsys):
    problem = {"agents": [{"center": 0.0, "p": [1.0], "q": [-1.0]},
                          {"center": 0.0, "p": [-1.0], "q": [2.0]}]}
    path = write_config(tmp_path, problem=problem, init={}, network={"preset": "path", "weight": 0.2},
                        box={"x": [-1.0, 1.0], "z": [0.0, 0.0], "lam": [0.0, 1.0]})
    assert main(["certify", "--config", str(path), "--out", str(tmp_path)]) == 1
    assert "Assumption 1" in capsys.readouterr().err


def test_missing_config_file_exits_1(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "nope.yaml")]) == 1


def test_certify_emits_full_ledger(tmp_path):
    assert main(["certify", "--config", str(DESK), "--out", str(tmp_path)]) == 0
    doc = read_json(tmp_path / "certificate.json")
    ledger = doc["ledger"]
    for i in range(1, 21):
        assert ledger[f"gammabar{i}"] > 0
    assert 0 < ledger["gammabar0"] == min(ledger[f"gammabar{i}"] for i in range(1, 21))
    assert ledger["delta2"] == 0.0
    assert "alpha5" not in ledger and "alpha6" not in ledger
    assert doc["omitted"] == ["alpha5", "alpha6"]
    for key in ("kappa0", "kappa1", "kappa", "q0", "mu_f", "h", "eps", "M", "beta", "delta1",
                "c_l", "c_u", *[f"k{i}" for i in range(8)]):
        assert key in ledger
    assert len(doc["rates"]) == 3
    for rate in doc["rates"]:
        assert {"omega", "eta2", "T", "mu", "c"} <= set(rate)
        assert rate["mu"] >= (11 / 12) ** 0.5 - 1e-9


def test_certify_reports_refused_stepsize(tmp_path):
    assert main(["certify", "--config", str(DESK), "--gamma", "0.05", "--out", str(tmp_path)]) == 0
    rates = read_json(tmp_path / "certificate.json")["rates"]
    assert len(rates) == 1 and "refused" in rates[0]


def test_certify_deterministic_under_seed(tmp_path):
    for d in ("a", "b"):
        assert main(["certify", "--config", str(DESK), "--seed", "3", "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a/certificate.json").read_bytes() == (tmp_path / "b/certificate.json").read_bytes()


def test_validate_passes_and_fault_injection_fails(tmp_path, capsys):
    path = write_config(tmp_path, validate=FAST_VALIDATE)
    assert main(["validate", "--config", str(path), "--out", str(tmp_path / "ok")]) == 0
    report = read_json(tmp_path / "ok/validation.json")
    assert report["failed"] == []
    names = {c["name"] for c in report["checks"]}
    assert {"conservation", "fixed_point", "commutation", "reconstruction", "P_sandwich",
            "Vopt_sandwich", "descent", "envelope", "distance_formula"} <= names
    capsys.readouterr()
    assert main(["validate", "--config", str(path), "--out", str(tmp_path / "bad"), "--corrupt-z-update"]) == 4
    assert "FAILED invariant: conservation" in capsys.readouterr().err
    assert "conservation" in read_json(tmp_path / "bad/validation.json")["failed"]


def single_agent_config(tmp_path, **extra):
    return write_config(tmp_path, problem={"agents": [{"center": 2.0, "p": [1.0], "q": [-1.0]}]},
                        network={"edges": []}, init={"x0": [0.0]},
                        box={"x": [-1.0, 1.0], "z": [0.0, 0.0], "lam": [0.0, 1.0]}, **extra)


def test_single_agent_validate_runs_reduction(tmp_path):
    path = single_agent_config(tmp_path, validate=FAST_VALIDATE)
    assert main(["validate", "--config", str(path), "--out", str(tmp_path)]) == 0
    checks = {c["name"]: c for c in read_json(tmp_path / "validation.json")["checks"]}
    red = checks["centralized_reduction"]
    assert red["passed"] and "skipped" not in red["detail"]


def test_single_agent_compare_trajectories_identical(tmp_path):
    path = single_agent_config(tmp_path)
    assert main(["compare", "--config", str(path), "--out", str(tmp_path)]) == 0
    with open(tmp_path / "compare.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert all(r["x_m"] == r["theta"] for r in rows)
    assert all(r["dist_distributed"] == r["dist_centralized"] for r in rows)


def test_compare_desk_both_converge(tmp_path):
    assert main(["compare", "--config", str(DESK), "--out", str(tmp_path)]) == 0
    summary = read_json(tmp_path / "compare_summary.json")
    assert summary["stop_reason"] == "converged"
    with open(tmp_path / "compare.csv") as fh:
        last = list(csv.DictReader(fh))[-1]
    assert float(last["x_m"]) == pytest.approx(0.5, abs=1e-7)
    assert float(last["theta"]) == pytest.approx(0.5, abs=1e-7)


def test_huge_stepsize_is_reported_as_failure(tmp_path):
    code = main(["solve", "--config", str(DESK), "--gamma", "10", "--out", str(tmp_path)])
    assert code in (2, 3)
    assert read_json(tmp_path / "summary.json")["stop_reason"] in ("max_iter", "numeric_failure")


def test_max_iter_exit_code(tmp_path):
    path = write_config(tmp_path, max_iter=10)
    assert main(["solve", "--config", str(path), "--out", str(tmp_path)]) == 2


def test_auto_gamma_recorded(tmp_path):
    path = write_config(tmp_path, max_iter=20)
    assert main(["solve", "--config", str(path), "--gamma", "auto", "--out", str(tmp_path)]) == 2
    summary = read_json(tmp_path / "summary.json")
    assert summary["gamma_source"] == "auto"
    assert summary["gamma"] == pytest.approx(summary["certificate"]["gammabar0"] / 2, rel=1e-15)


def test_batch_mode_runs_configs_in_separate_directories(tmp_path, capsys):
    a = write_config(tmp_path, "one.yaml")
    b = write_config(tmp_path, "two.yaml", max_iter=5)
    code = main(["solve", "--batch", f"{a},{b}", "--out", str(tmp_path / "out")])
    assert code == 2
    assert read_json(tmp_path / "out/one/summary.json")["stop_reason"] == "converged"
    assert read_json(tmp_path / "out/two/summary.json")["stop_reason"] == "max_iter"


def test_cli_rejects_bad_arguments():
    with pytest.raises(SystemExit):
        main(["solve", "--config", str(DESK), "--gamma", "-1"])
    with pytest.raises(SystemExit):
        main(["solve", "--config", str(DESK), "--seed", "-3"])
