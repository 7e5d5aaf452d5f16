import json
from pathlib import Path
from typing import Any

import pytest

from rlbox.cli import EXIT_NOT_CONVERGED, EXIT_USAGE, RunConfig, RunResult, build_parser, make_config, run, run_once
from rlbox.environments import ENV_NAMES
from rlbox.errors import UnknownNameError

PAPER_TRACE = {"steps": [["s6", "right", -1], ["s7", "right", 5]], "final": "s8"}
CORNER_PATHS = [
    {"steps": [["s3", "down", -1], ["s6", "left", -1], ["s5", "left", -1], ["s4", "down", 3]], "final": "s7"},
    {"steps": [["s3", "down", -1], ["s6", "left", -1], ["s5", "down", -1], ["s8", "left", 3]], "final": "s7"},
    {"steps": [["s3", "down", -1], ["s6", "down", -1], ["s9", "left", -1], ["s8", "left", 3]], "final": "s7"},
]


def _run_json(capsys: pytest.CaptureFixture[str], *argv: str) -> dict[str, Any]:
    assert run(list(argv)) == 0
    return json.loads(capsys.readouterr().out)


def _write(tmp_path: Path, name: str, data: Any) -> str:
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


class TestCommands:
    def test_dp_eval_grid2x2(self, capsys: pytest.CaptureFixture[str]):
        output = _run_json(capsys, "dp", "eval", "--env", "grid2x2", "--gamma", "1.0", "--policy", "uniform")

        assert output["result"]["values"] == pytest.approx({"s1": 0.0, "s2": 1.0, "s3": 1.0, "s4": 0.0}, abs=1e-12)
        assert output["converged"]
        assert output["config"]["command"] == "dp eval"
        assert output["config"]["seed"] == 0

    def test_dp_eval_iterative(self, capsys: pytest.CaptureFixture[str]):
        output = _run_json(capsys, "dp", "eval", "--env", "grid2x2", "--solver", "iterative", "--tol", "1e-12")

        assert output["result"]["values"]["s2"] == pytest.approx(1.0, abs=1e-9)
        assert output["metrics"]["sweeps"] > 1

    def test_dp_pi_from_table1(self, capsys: pytest.CaptureFixture[str]):
        output = _run_json(capsys, "dp", "pi", "--env", "grid1d9", "--policy", "table1")

        assert output["result"]["values"]["s9"] == pytest.approx(2.0)
        assert output["result"]["policy"]["s9"] == {"left": 1.0, "right": 0.0}

    def test_dp_vi_history_holds_deltas(self, capsys: pytest.CaptureFixture[str]):
        output = _run_json(capsys, "dp", "vi", "--env", "grid1d9")

        assert output["history"][-1] == 0.0
        assert output["metrics"]["sweeps"] == len(output["history"])

    def test_mc_replay(self, capsys: pytest.CaptureFixture[str], tmp_path: Path):
        path = _write(tmp_path, "paths.json", CORNER_PATHS)

        output = _run_json(capsys, "mc", "--env", "grid3x3", "--gamma", "1", "--trajectory", path)

        assert output["result"]["values"]["s6"] == pytest.approx(1.0)
        assert output["result"]["values"]["s5"] == pytest.approx(2.0)
        assert output["result"]["values"]["s3"] == pytest.approx(0.0)

    def test_td_eval_replay(self, capsys: pytest.CaptureFixture[str], tmp_path: Path):
        path = _write(tmp_path, "step.json", {"steps": [["s3", "down", -1]], "final": "s6"})

        output = _run_json(capsys, "td", "eval", "--env", "grid3x3", "--gamma", "0.9", "--trajectory", path)

        assert output["result"]["values"]["s3"] == pytest.approx(-0.1)

    def test_td_qlearn(self, capsys: pytest.CaptureFixture[str]):
        output = _run_json(capsys, "td", "qlearn", "--env", "grid1d9", "--episodes", "50", "--gamma", "0.9")

        assert len(output["history"]) == 50
        assert set(output["result"]["q"]) == {"s1", "s2", "s3", "s4", "s6", "s7", "s8", "s9"}
        assert sum(output["result"]["greedy_policy"]["s4"].values()) == 1.0
        assert len(output["result"]["episode_returns"]) == 50
        assert "mean_return" in output["metrics"]

    def test_pg_ac_paper_trace(self, capsys: pytest.CaptureFixture[str], tmp_path: Path):
        path = _write(tmp_path, "trace.json", PAPER_TRACE)

        output = _run_json(capsys, "pg", "ac", "--mode", "paper-trace", "--trajectory", path, "--alpha", "0.1")
        result = output["result"]

        assert result["critic"]["s6"] == pytest.approx(-0.1, abs=1e-12)
        assert result["critic"]["s7"] == pytest.approx(0.5, abs=1e-12)
        assert result["theta"]["s6"] == pytest.approx(0.09, abs=1e-12)
        assert result["theta"]["s7"] == -0.5
        assert result["parameters"]["θ6"] == "s7"
        assert result["policy_probs"]["s6"]["right"] == pytest.approx(0.41, abs=1e-12)
        assert [r["advantage"] for r in result["trace"]] == pytest.approx([-0.45, 4.5], abs=1e-12)

    def test_pg_reinforce_short_run(self, capsys: pytest.CaptureFixture[str]):
        output = _run_json(capsys, "pg", "reinforce", "--episodes", "30")

        assert output["config"]["env"] == "grid1d8_two_terminal"
        assert output["config"]["max_step"] == 0.05
        assert len(output["history"]) == 30
        assert output["result"]["trace"] == []

    def test_quantum_train_short_run(self, capsys: pytest.CaptureFixture[str]):
        output = _run_json(capsys, "quantum", "train", "--episodes", "20", "--seed", "4")
        result = output["result"]

        assert len(result["fidelity_history"]) == 20
        assert result["bloch_initial"] == [0.0, 0.0, 1.0]
        assert result["bloch_target"] == [0.0, 0.0, -1.0]
        assert 0.0 <= result["final_fidelity"] <= 1.0

    def test_env_export(self, capsys: pytest.CaptureFixture[str]):
        output = _run_json(capsys, "env", "export", "--env", "grid2x2")
        result = output["result"]

        assert result["name"] == "grid2x2"
        assert result["terminals"] == ["s4"]
        assert result["transitions"]["s2"]["down"] == [["s4", 3.0, 1.0]]
        assert result["optimal_values"]["s1"] == 2.0


class TestExitCodes:
    def test_help(self, capsys: pytest.CaptureFixture[str]):
        assert run(["--help"]) == 0
        assert "usage" in capsys.readouterr().out

    def test_unknown_environment(self, capsys: pytest.CaptureFixture[str]):
        assert run(["dp", "vi", "--env", "nosuch"]) == EXIT_USAGE

        err = capsys.readouterr().err
        for name in ENV_NAMES:
            assert name in err

    @pytest.mark.parametrize(
        "argv",
        [
            ["dp", "nosuch"],
            ["dp", "vi", "--bogus"],
            ["dp", "eval", "--solver", "magic"],
            ["mc", "--mode", "sometimes"],
            ["dp", "vi", "--gamma", "1.5"],
            ["dp", "eval", "--policy", "missing.json"],
        ],
    )
    def test_usage_errors(self, argv: list[str]):
        assert run(argv) == EXIT_USAGE

    def test_improper_policy_is_a_usage_error(self, capsys: pytest.CaptureFixture[str]):
        assert run(["dp", "eval", "--env", "grid1d9", "--policy", "table1"]) == EXIT_USAGE
        assert "improper" in capsys.readouterr().err

    def test_strict_non_convergence(self, capsys: pytest.CaptureFixture[str]):
        assert run(["dp", "vi", "--env", "grid3x3", "--max-sweeps", "1", "--strict"]) == EXIT_NOT_CONVERGED
        assert json.loads(capsys.readouterr().out)["converged"] is False

    def test_non_convergence_without_strict(self):
        assert run(["dp", "vi", "--env", "grid3x3", "--max-sweeps", "1"]) == 0


class TestConfiguration:
    def test_precedence(self, tmp_path: Path):
        path = _write(tmp_path, "config.json", {"gamma": 0.5, "alpha": 0.3, "episodes": 7})
        args = build_parser().parse_args(
            ["td", "sarsa", "--config", path, "--alpha", "0.4", "--set", "episodes=9", "--set", "env.terminal_reward=3"]
        )

        config = make_config(args)

        assert config.gamma == 0.5
        assert config.alpha == 0.4
        assert config.episodes == 9
        assert config.epsilon == 0.1
        assert config.env_overrides == {"terminal_reward": 3}

    def test_env_override_reaches_the_environment(self, capsys: pytest.CaptureFixture[str]):
        output = _run_json(capsys, "dp", "vi", "--env", "grid1d9", "--set", "env.terminal_reward=3")
        assert output["result"]["values"]["s4"] == pytest.approx(3.0)

    def test_environment_parameter_without_prefix(self, capsys: pytest.CaptureFixture[str]):
        output = _run_json(capsys, "dp", "vi", "--env", "grid1d9", "--set", "terminal_reward=3")
        assert output["result"]["values"]["s4"] == pytest.approx(3.0)

    def test_run_keys_win_over_environment_parameters(self):
        args = build_parser().parse_args(["dp", "vi", "--env", "grid1d9", "--set", "gamma=0.5", "--set", "step_reward=-2"])

        config = make_config(args)

        assert config.gamma == 0.5
        assert config.env_overrides == {"step_reward": -2}

    def test_unknown_config_key(self, tmp_path: Path):
        path = _write(tmp_path, "config.json", {"temperature": 2})
        assert run(["dp", "vi", "--config", path]) == EXIT_USAGE

    def test_from_dict_rejects_unknown_keys(self):
        with pytest.raises(UnknownNameError, match="temperature"):
            RunConfig.from_dict({"command": "dp vi", "temperature": 2})

    def test_out_file(self, tmp_path: Path):
        out = tmp_path / "result.json"

        assert run(["dp", "vi", "--env", "grid2x2", "--out", str(out)]) == 0

        assert json.loads(out.read_text())["result"]["values"]["s1"] == pytest.approx(2.0)


class TestRuns:
    def test_repeat_summarizes_metrics(self, capsys: pytest.CaptureFixture[str]):
        output = _run_json(capsys, "td", "qlearn", "--episodes", "20", "--repeat", "3", "--seed", "10")

        assert [r["config"]["seed"] for r in output["runs"]] == [10, 11, 12]
        summary = output["summary"]["mean_return"]
        assert summary["min"] <= summary["mean"] <= summary["max"]
        assert set(summary) == {"mean", "std", "min", "max"}

    def test_csv_history(self, capsys: pytest.CaptureFixture[str]):
        assert run(["dp", "vi", "--env", "grid1d9", "--format", "csv"]) == 0

        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "run,episode,value"
        assert lines[1].startswith("0,0,")
        assert lines[-1] == f"0,{len(lines) - 2},0.0"

    def test_same_seed_same_result(self):
        config = RunConfig(command="td sarsa", env="grid1d9_stochastic", episodes=50, seed=5)

        first, second = run_once(config), run_once(config)

        assert first.result == second.result
        assert first.history == second.history

    def test_result_survives_json(self):
        result = run_once(RunConfig(command="dp pi", env="grid2x2"))

        restored = RunResult.from_dict(json.loads(json.dumps(result.to_dict())))

        assert restored == result

    def test_unknown_command(self):
        with pytest.raises(UnknownNameError):
            run_once(RunConfig(command="dp magic"))
