"""Config schema, the run orchestrator, and the command-line surface.

The orchestrator tests run real (tiny) experiments: a cheap grid, a few
hundred paths.  The one identity worth paying for is that a summary is a
pure function of (config, seed, command) with execution details stripped,
which is what makes reruns and thread sweeps byte-comparable.
"""

from __future__ import annotations

import json

import numpy as np
import pytest

from robustctl.cli import main
from robustctl.config import (DEFAULTS, describe_errors, load_config,
                              resolve_config, validate_config)
from robustctl.errors import ConfigError
from robustctl.reports import summary_to_json
from robustctl.runner import COMMANDS, Checks, _finish, run_experiment, write_result

CHEAP_PENNIES = {
    "problem": {"id": "pennies"},
    "grid": {"h": 0.2},
    "simulate": {"n_paths": 200, "n_steps": 32},
    "strategies": {"decision_counts": [2, 4]},
    "adversaries": {"n_random": 1, "random_segments": 4},
    "hamiltonian": {"n_queries": 100},
}


def cheap_constant(**overrides) -> dict:
    cfg = {"problem": {"id": "constant"},
           "simulate": {"n_paths": 64},
           "hamiltonian": {"n_queries": 50}}
    cfg.update(overrides)
    return cfg


# ------------------------------------------------------------------ schema ---- #


def test_resolution_is_idempotent():
    resolved = resolve_config({"problem": {"id": "constant"}})
    assert resolved["simulate"]["n_paths"] == 4000
    assert resolved["tolerances"]["value_abs"] == 0.03
    assert resolve_config(resolved) == resolved


def test_unknown_top_level_key_is_named():
    with pytest.raises(ConfigError, match="strategys"):
        resolve_config({"problem": {"id": "constant"}, "strategys": {}})


def test_unknown_nested_key_is_named():
    with pytest.raises(ConfigError, match="n_path"):
        resolve_config({"problem": {"id": "constant"},
                        "simulate": {"n_path": 10}})


def test_error_descriptions_carry_json_paths():
    msgs = describe_errors({"problem": {"id": 3}, "seed": -1})
    paths = [m.split(":")[0] for m in msgs]
    assert "$.problem.id" in paths
    assert "$.seed" in paths


def test_semantic_checks_collect_everything():
    bad = {"problem": {"id": "not_a_benchmark"},
           "grid": {"lo": 1.0, "hi": -1.0},
           "dpp": {"rules": [{"kind": "first_exit"}]}}
    with pytest.raises(ConfigError) as err:
        validate_config(bad)
    text = str(err.value)
    assert "not_a_benchmark" in text and "available" in text
    assert "lo must be strictly below hi" in text
    assert "first_exit needs a 'level'" in text


def test_load_config_unwraps_a_summary(tmp_path):
    inner = {"problem": {"id": "constant"}, "seed": 7}
    path = tmp_path / "summary.json"
    path.write_text(json.dumps({"config": inner, "checks": [], "exit_code": 0}))
    assert load_config(str(path)) == inner

    missing = tmp_path / "nope.json"
    with pytest.raises(ConfigError, match="not found"):
        load_config(str(missing))

    bad = tmp_path / "bad.json"
    bad.write_text("{\"problem\": ")
    with pytest.raises(ConfigError, match="line 1"):
        load_config(str(bad))

    listy = tmp_path / "list.json"
    listy.write_text("[1, 2]")
    with pytest.raises(ConfigError, match="JSON object"):
        load_config(str(listy))


# ------------------------------------------------------------------ runner ---- #


def test_validate_command_runs_only_the_gate():
    result = run_experiment(cheap_constant(), command="validate")
    assert result.exit_code == 0
    assert result.summary["stages"] == []
    assert result.summary["assumptions"]["lipschitz_pass"]
    assert result.summary["assumptions"]["growth_pass"]
    ids = [c["id"] for c in result.summary["checks"]]
    assert ids == ["assumptions.pass"]


def test_false_regularity_declaration_aborts_the_run():
    result = run_experiment({"problem": {"id": "growth_violator"}}, command="run")
    assert result.exit_code == 1
    assert result.summary["failed_checks"] == ["assumptions.pass"]
    assert result.summary["aborted_stages"]  # stages were planned, none ran
    assert "pde" not in result.summary


def test_unknown_command_is_rejected():
    with pytest.raises(ConfigError, match="unknown command"):
        run_experiment(cheap_constant(), command="banana")
    assert "run" in COMMANDS and COMMANDS["validate"] == ()


def test_constant_benchmark_passes_every_check():
    result = run_experiment(cheap_constant(), command="run", seed=3)
    assert result.exit_code == 0
    assert result.summary["failed_checks"] == []
    assert result.summary["config"]["seed"] == 3
    assert result.summary["stages"] == ["solve", "value", "filtration",
                                        "hamiltonian"]
    assert result.summary["value"]["best_mean"] == pytest.approx(1.0)
    assert result.summary["filtration"]["delta"] == 0.0
    for name in ("assumptions", "fields", "estimates", "hamiltonian"):
        assert name in result.tables


def test_execution_keys_are_stripped_from_the_summary():
    result = run_experiment(cheap_constant(output_dir="/tmp/somewhere"),
                            command="validate", threads=7)
    assert result.summary["config"]["threads"] == DEFAULTS["threads"]
    assert result.summary["config"]["output_dir"] == DEFAULTS["output_dir"]


def test_thread_count_never_changes_the_summary():
    one = run_experiment(CHEAP_PENNIES, command="run", seed=11, threads=1)
    six = run_experiment(CHEAP_PENNIES, command="run", seed=11, threads=6)
    assert summary_to_json(one.summary) == summary_to_json(six.summary)
    assert one.exit_code == six.exit_code == 0


def test_summary_reruns_byte_identically(tmp_path):
    first = run_experiment(CHEAP_PENNIES, command="run", seed=5)
    out = tmp_path / "out"
    paths = write_result(first, str(out))
    summary_path = out / "summary.json"
    assert str(summary_path) in paths
    rerun_cfg = load_config(str(summary_path))
    second = run_experiment(rerun_cfg, command="run")
    assert summary_to_json(second.summary) == summary_path.read_bytes().decode()


def test_oversized_grid_dt_is_a_config_error():
    cfg = {"problem": {"id": "heat"}, "grid": {"h": 0.5, "dt": 0.2},
           "equations": ["lower"]}
    with pytest.raises(ConfigError, match="grid.dt rejected"):
        run_experiment(cfg, command="solve-pde")


def test_strict_mode_promotes_warnings_to_failure():
    checks = Checks()
    checks.add("demo", "stage", True, value=0.0, tolerance=1.0, detail="ok")
    lax = _finish({"config": {}}, {}, checks, ["something odd"], strict=False)
    assert lax.exit_code == 0
    checks2 = Checks()
    checks2.add("demo", "stage", True, value=0.0, tolerance=1.0, detail="ok")
    hard = _finish({"config": {}}, {}, checks2, ["something odd"], strict=True)
    assert hard.exit_code == 1
    assert hard.summary["failed_checks"] == []


# --------------------------------------------------------------------- CLI ---- #


def write_cfg(tmp_path, cfg: dict) -> str:
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_cli_validate_passes_and_writes_files(tmp_path, capsys):
    cfg = write_cfg(tmp_path, cheap_constant())
    code = main(["validate", "--config", cfg, "--out", str(tmp_path / "out")])
    out = capsys.readouterr().out
    assert code == 0
    assert "[PASS] assumptions.pass" in out
    assert "wrote" in out
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["exit_code"] == 0
    assert (tmp_path / "out" / "assumptions.csv").exists()


def test_cli_reports_gate_failure_with_exit_one(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"problem": {"id": "growth_violator"}})
    code = main(["validate", "--config", cfg, "--out", str(tmp_path / "out")])
    assert code == 1
    assert "[FAIL] assumptions.pass" in capsys.readouterr().out


def test_cli_maps_config_problems_to_exit_two(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"problem": {"id": "constant"}, "strategys": {}})
    code = main(["run", "--config", cfg, "--out", str(tmp_path / "out")])
    assert code == 2
    assert "config error:" in capsys.readouterr().err

    code = main(["run", "--config", str(tmp_path / "missing.json")])
    assert code == 2


@pytest.mark.filterwarnings("ignore:overflow")
def test_cli_maps_runtime_failures_to_exit_three(tmp_path, capsys):
    # the gate is disabled, so the unstable dynamics only explode mid-stage
    cfg = write_cfg(tmp_path, {
        "problem": {"id": "growth_violator"},
        "assumptions": {"enabled": False},
        "simulate": {"start_state": [10.0], "n_paths": 8},
    })
    code = main(["simulate", "--config", cfg, "--out", str(tmp_path / "out")])
    assert code == 3
    assert "runtime error:" in capsys.readouterr().err


def test_cli_threads_env_is_validated(tmp_path, capsys, monkeypatch):
    cfg = write_cfg(tmp_path, cheap_constant())
    monkeypatch.setenv("ROBUSTCTL_THREADS", "lots")
    code = main(["validate", "--config", cfg, "--out", str(tmp_path / "out")])
    assert code == 2
    assert "ROBUSTCTL_THREADS" in capsys.readouterr().err
    monkeypatch.setenv("ROBUSTCTL_THREADS", "2")
    assert main(["validate", "--config", cfg,
                 "--out", str(tmp_path / "out")]) == 0


def test_cli_seed_flag_overrides_the_config(tmp_path):
    cfg = write_cfg(tmp_path, cheap_constant(seed=1))
    out = tmp_path / "out"
    assert main(["validate", "--config", cfg, "--seed", "9",
                 "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["seed"] == 9
