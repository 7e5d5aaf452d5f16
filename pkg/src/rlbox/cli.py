"""Experiment runner: `rlbox <group> [<variant>] [flags]`."""

import argparse
import csv
import io
import json
import logging
import sys
import time
from pathlib import Path
from types import MappingProxyType
from typing import IO, Any, Callable, Mapping, NamedTuple, Sequence

import numpy as np
from attrs import asdict, define, evolve, field, fields_dict, frozen, validators

from .codec import model_to_dict, policy_from_dict, policy_to_dict, trajectories_from_json
from .dp import analytic_policy_evaluation, iterative_policy_evaluation, policy_iteration, value_iteration
from .environments import ENV_NAMES, POLICY_NAMES, EnvSpec, builtin_policy, environments, make_env
from .errors import PreconditionError, UnknownNameError
from .mc import VisitMode, mc_evaluate, mc_replay
from .mdp import TabularPolicy, Trajectory
from .pg import (
    REINFORCE_MAX_STEP,
    CriticTable,
    ThetaMode,
    ThetaPolicy,
    UpdateSchedule,
    actor_critic,
    episode_returns,
    reinforce,
    theta_policy_probs,
)
from .quantum import GaussianActor, QubitState, apply, bloch, rx, train_qubit_controller
from .td import AlphaSchedule, LearningConfig, q_learning, sarsa, td0_evaluate, td0_replay
from .wiring import Injected, RunBox

logger = logging.getLogger(__name__)

DEFAULT_SEED = 0
DEFAULT_ENV = "grid1d9"

EXIT_USAGE = 2
EXIT_NOT_CONVERGED = 3

_optional_unit = validators.optional([validators.ge(0.0), validators.le(1.0)])
_optional_positive = validators.optional(validators.gt(0.0))
_optional_count = validators.optional(validators.ge(1))


@frozen(kw_only=True)
class RunConfig:
    """Everything one run needs. `None` means "use the algorithm's or environment's default"."""

    command: str
    env: str | None = None
    env_overrides: dict[str, Any] = field(factory=dict)
    seed: int = DEFAULT_SEED
    gamma: float | None = field(default=None, validator=_optional_unit)
    alpha: float | None = field(default=None, validator=_optional_positive)
    beta: float | None = field(default=None, validator=_optional_positive)
    epsilon: float | None = field(default=None, validator=_optional_unit)
    epsilon_decay: float | None = field(default=None, validator=_optional_positive)
    alpha_schedule: str | None = None
    q_init: float | None = None
    tol: float | None = field(default=None, validator=_optional_positive)
    max_sweeps: int | None = field(default=None, validator=_optional_count)
    solver: str | None = None
    policy: str | None = None
    policy_file: str | None = None
    episodes: int | None = field(default=None, validator=_optional_count)
    max_steps: int | None = field(default=None, validator=_optional_count)
    mode: str | None = None
    trajectory: str | None = None
    max_step: float | None = field(default=None, validator=_optional_positive)
    sigma0: float | None = field(default=None, validator=_optional_positive)
    mu0: float | None = None
    starts: list[str] | None = None
    output_path: str | None = None
    format: str = field(default="json", validator=validators.in_(("json", "csv")))
    strict: bool = False
    repeat: int = field(default=1, validator=validators.ge(1))

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        known = fields_dict(cls)
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise UnknownNameError("configuration key", unknown[0], known)
        return cls(**data)


@define
class RunResult:
    config: dict[str, Any]
    result: dict[str, Any]
    history: list[float] = field(factory=list)
    metrics: dict[str, float] = field(factory=dict)
    converged: bool = True
    wall_time: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunResult":
        return cls(
            config=dict(data["config"]),
            result=dict(data["result"]),
            history=[float(x) for x in data.get("history", [])],
            metrics={k: float(v) for k, v in data.get("metrics", {}).items()},
            converged=bool(data.get("converged", True)),
            wall_time=float(data.get("wall_time", 0.0)),
        )


class HandlerOutput(NamedTuple):
    result: dict[str, Any]
    history: Sequence[float] = ()
    metrics: Mapping[str, float] = MappingProxyType({})
    converged: bool = True


Handler = Callable[..., HandlerOutput]


class Command(NamedTuple):
    handler: Handler
    defaults: dict[str, Any]
    help: str


class CommandTable(dict[tuple[str, str | None], Command]):
    """Handlers keyed by (group, variant); single-command groups such as `mc` have no variant."""

    def names(self) -> list[str]:
        return [" ".join(filter(None, key)) for key in self]

    def find(self, name: str) -> Command:
        group, _, variant = name.partition(" ")
        try:
            return self[group, variant or None]
        except KeyError:
            raise UnknownNameError("command", name, self.names()) from None


commands = CommandTable()


def command(group: str, variant: str | None = None, help: str = "", **defaults: Any):
    """Registers a handler for `rlbox group [variant]` with its parameter defaults."""

    def decorator(handler: Handler) -> Handler:
        commands[group, variant] = Command(handler, defaults, help)
        return handler

    return decorator


def _gamma_value(gamma: float | None, env: EnvSpec) -> float:
    return env.gamma if gamma is None else gamma


# dp


@command("dp", "eval", help="evaluate a policy", policy="uniform", solver="analytic", tol=1e-10, max_sweeps=10_000)
def run_dp_eval(
    env: Injected[EnvSpec], policy: Injected[TabularPolicy], gamma: Injected[float], config: Injected[RunConfig]
) -> HandlerOutput:
    if config.solver == "analytic":
        values = analytic_policy_evaluation(env.model, policy, gamma)
        return HandlerOutput({"values": values.as_dict()})
    if config.solver == "iterative":
        evaluation = iterative_policy_evaluation(env.model, policy, gamma, config.tol or 1e-10, config.max_sweeps or 10_000)
        return HandlerOutput(
            {"values": evaluation.values.as_dict()}, metrics={"sweeps": evaluation.sweeps}, converged=evaluation.converged
        )
    raise UnknownNameError("solver", str(config.solver), ("analytic", "iterative"))


@command("dp", "pi", help="policy iteration", tol=1e-10)
def run_dp_pi(env: Injected[EnvSpec], gamma: Injected[float], config: Injected[RunConfig]) -> HandlerOutput:
    policy0 = _load_policy(env, config) if config.policy or config.policy_file else None
    result = policy_iteration(env.model, gamma, config.tol or 1e-10, policy0)
    return HandlerOutput(
        {"values": result.values.as_dict(), "policy": policy_to_dict(result.policy)},
        metrics={"iterations": result.iterations},
    )


@command("dp", "vi", help="value iteration", tol=1e-10, max_sweeps=10_000)
def run_dp_vi(env: Injected[EnvSpec], gamma: Injected[float], config: Injected[RunConfig]) -> HandlerOutput:
    result = value_iteration(env.model, gamma, config.tol or 1e-10, config.max_sweeps or 10_000)
    return HandlerOutput(
        {"values": result.values.as_dict(), "policy": policy_to_dict(result.policy)},
        history=list(result.deltas),
        metrics={"sweeps": result.sweeps},
        converged=result.converged,
    )


# mc


@command("mc", help="Monte Carlo evaluation", policy="uniform", episodes=10_000, mode="first", max_steps=1000)
def run_mc(
    env: Injected[EnvSpec],
    policy: Injected[TabularPolicy],
    gamma: Injected[float],
    rng: Injected[np.random.Generator],
    trajectories: Injected[list[Trajectory]],
    config: Injected[RunConfig],
) -> HandlerOutput:
    mode = _enum(VisitMode, config.mode or "first", "visit mode")
    if trajectories:
        estimate = mc_replay(trajectories, gamma, mode)
    else:
        estimate = mc_evaluate(
            env, policy, gamma, config.episodes or 1, mode, config.starts, config.max_steps or 1000, rng
        )
    return HandlerOutput(
        {"values": estimate.values.as_dict(), "counts": estimate.counts, "visited": sorted(estimate.visited)},
        metrics={"visited": len(estimate.visited)},
    )


# td


def _learning_config(config: RunConfig, gamma: float) -> LearningConfig:
    return LearningConfig(
        alpha=config.alpha if config.alpha is not None else 0.1,
        gamma=gamma,
        epsilon=config.epsilon if config.epsilon is not None else 0.1,
        episodes=config.episodes or 1000,
        max_steps=config.max_steps or 1000,
        seed=config.seed,
        epsilon_decay=config.epsilon_decay,
        alpha_schedule=_enum(AlphaSchedule, config.alpha_schedule or "constant", "alpha schedule"),
        q_init=config.q_init or 0.0,
    )


def _return_metrics(history: Sequence[float]) -> dict[str, float]:
    if not history:
        return {}
    return {"mean_return": float(np.mean(history)), "mean_return_last_100": float(np.mean(history[-100:]))}


@command("td", "eval", help="TD(0) evaluation", policy="uniform", alpha=0.1, episodes=1000)
def run_td_eval(
    env: Injected[EnvSpec],
    policy: Injected[TabularPolicy],
    gamma: Injected[float],
    rng: Injected[np.random.Generator],
    trajectories: Injected[list[Trajectory]],
    config: Injected[RunConfig],
) -> HandlerOutput:
    learning = _learning_config(config, gamma)
    if trajectories:
        return HandlerOutput({"values": td0_replay(env, trajectories, learning).as_dict()})
    evaluation = td0_evaluate(env, policy, learning, config.starts, rng)
    return HandlerOutput(
        {"values": evaluation.values.as_dict(), "episode_returns": evaluation.episode_returns},
        history=evaluation.episode_returns,
        metrics=_return_metrics(evaluation.episode_returns),
    )


def _run_control(
    learner: Callable[..., Any], env: EnvSpec, gamma: float, rng: np.random.Generator, config: RunConfig
) -> HandlerOutput:
    result = learner(env, _learning_config(config, gamma), config.starts, rng)
    return HandlerOutput(
        {
            "q": result.q.as_dict(),
            "greedy_policy": policy_to_dict(result.policy),
            "episode_returns": result.episode_returns,
        },
        history=result.episode_returns,
        metrics=_return_metrics(result.episode_returns),
    )


@command("td", "sarsa", help="SARSA control", alpha=0.1, epsilon=0.1, episodes=5000)
def run_td_sarsa(
    env: Injected[EnvSpec], gamma: Injected[float], rng: Injected[np.random.Generator], config: Injected[RunConfig]
) -> HandlerOutput:
    return _run_control(sarsa, env, gamma, rng, config)


@command("td", "qlearn", help="Q-learning control", alpha=0.1, epsilon=0.1, episodes=5000)
def run_td_qlearn(
    env: Injected[EnvSpec], gamma: Injected[float], rng: Injected[np.random.Generator], config: Injected[RunConfig]
) -> HandlerOutput:
    return _run_control(q_learning, env, gamma, rng, config)


# pg


def _theta_output(env: EnvSpec, policy: ThetaPolicy) -> dict[str, Any]:
    return {
        "theta": dict(policy.theta),
        "parameters": {policy.parameter_name(s): s for s in policy.theta},
        "policy_probs": {s: theta_policy_probs(policy, s) for s in policy.theta},
    }


_PG_DEFAULTS: dict[str, Any] = {"env": "grid1d8_two_terminal", "alpha": 0.01, "episodes": 5000, "max_steps": 100}


@command("pg", "reinforce", help="REINFORCE", max_step=REINFORCE_MAX_STEP, **_PG_DEFAULTS)
def run_pg_reinforce(
    env: Injected[EnvSpec], gamma: Injected[float], rng: Injected[np.random.Generator], config: Injected[RunConfig]
) -> HandlerOutput:
    policy0 = ThetaPolicy.initial(env.model, ThetaMode.Training)
    result = reinforce(
        env, policy0, config.alpha or 0.01, gamma, config.episodes or 1, rng, config.starts, config.max_steps or 100,
        config.max_step,
    )
    output = _theta_output(env, result.policy) | {"critic": None, "trace": []}
    return HandlerOutput(output, history=result.history, metrics=_return_metrics(result.history))


@command("pg", "ac", help="tabular actor-critic", beta=0.1, mode="online", **_PG_DEFAULTS)
def run_pg_ac(
    env: Injected[EnvSpec],
    gamma: Injected[float],
    rng: Injected[np.random.Generator],
    trajectories: Injected[list[Trajectory]],
    config: Injected[RunConfig],
) -> HandlerOutput:
    schedule = _enum(UpdateSchedule, (config.mode or "online").replace("-", "_"), "actor-critic mode")
    theta_mode = ThetaMode.PaperTrace if schedule == UpdateSchedule.PaperTrace else ThetaMode.Training
    policy0 = ThetaPolicy.initial(env.model, theta_mode)
    critic0 = CriticTable.zeros(env.model, config.beta or 0.1)
    result = actor_critic(
        env,
        policy0,
        critic0,
        config.alpha or 0.01,
        gamma,
        episodes=config.episodes or 1,
        rng=rng,
        mode=schedule,
        trajectories=trajectories or None,
        starts=config.starts,
        max_steps=config.max_steps or 100,
        max_step=config.max_step,
    )
    history = episode_returns(result.trace, gamma)
    output = _theta_output(env, result.policy) | {
        "critic": dict(result.critic.values),
        "trace": [record._asdict() for record in result.trace] if trajectories else [],
    }
    return HandlerOutput(output, history=history, metrics=_return_metrics(history))


# quantum


@command("quantum", "train", help="learn a qubit X rotation", episodes=2000, alpha=0.05, beta=0.1, sigma0=1.0, mu0=0.0)
def run_quantum_train(rng: Injected[np.random.Generator], config: Injected[RunConfig]) -> HandlerOutput:
    initial, target = QubitState.zero(), QubitState.one()
    actor0 = GaussianActor.create(
        config.sigma0 or 1.0, mu=config.mu0 or 0.0, alpha=config.alpha or 0.05, beta=config.beta or 0.1
    )
    result = train_qubit_controller(initial, target, actor0, config.episodes or 1, rng)
    output = {
        "mu": result.actor.mu,
        "sigma": result.actor.sigma,
        "final_fidelity": result.final_fidelity,
        "fidelity_history": result.fidelity_history,
        "bloch_initial": bloch(initial),
        "bloch_final": bloch(apply(rx(result.actor.mu), initial)),
        "bloch_target": bloch(target),
    }
    return HandlerOutput(output, history=result.fidelity_history, metrics={"final_fidelity": result.final_fidelity})


# env


@command("env", "export", help="print an environment's transition model")
def run_env_export(env: Injected[EnvSpec]) -> HandlerOutput:
    output = model_to_dict(env.model) | {
        "name": env.name,
        "start_states": [s.label for s in env.start_states],
        "optimal_values": env.optimal_values.as_dict() if env.optimal_values is not None else None,
    }
    return HandlerOutput(output)


def _enum(enum_type: Any, value: str, kind: str) -> Any:
    try:
        return enum_type(value)
    except ValueError:
        raise UnknownNameError(kind, value, [m.value for m in enum_type]) from None


# providers


def _make_env(config: RunConfig) -> EnvSpec:
    return make_env(config.env or DEFAULT_ENV, config.env_overrides)


def _load_json(path: str) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except OSError as e:
        raise PreconditionError(f"cannot read {path}: {e.strerror}") from e
    except json.JSONDecodeError as e:
        raise PreconditionError(f"{path} is not valid JSON: {e}") from e


def _load_policy(env: EnvSpec, config: RunConfig) -> TabularPolicy:
    if config.policy_file:
        return policy_from_dict(_load_json(config.policy_file))
    name = config.policy or "uniform"
    if name not in POLICY_NAMES and Path(name).is_file():
        return policy_from_dict(_load_json(name))
    return builtin_policy(env, name)


def _load_trajectories(env: EnvSpec, config: RunConfig) -> list[Trajectory]:
    return trajectories_from_json(env.model, _load_json(config.trajectory)) if config.trajectory else []


class OutputSink:
    """Destination of the run output: a file opened on demand, or standard output (never closed)."""

    def __init__(self, path: str | None):
        self.path = path
        self._file: IO[str] | None = None

    def write(self, text: str):
        if self.path is None:
            sys.stdout.write(text)
            return
        if self._file is None:
            self._file = open(self.path, "w", newline="")
        self._file.write(text)

    def close(self):
        if self._file is not None:
            self._file.close()
            self._file = None


def _wire(box: RunBox, config: RunConfig):
    box.bind(RunConfig, lambda: config)
    box.bind(EnvSpec, _make_env, config=RunConfig)
    box.bind(np.random.Generator, lambda config: np.random.default_rng(config.seed), config=RunConfig)
    box.bind(TabularPolicy, _load_policy, env=EnvSpec, config=RunConfig)
    box.bind(None, _load_trajectories, name="trajectories", env=EnvSpec, config=RunConfig)
    box.bind(float, lambda env, config: _gamma_value(config.gamma, env), name="gamma", env=EnvSpec, config=RunConfig)


def run_once(config: RunConfig) -> RunResult:
    """Runs one configuration in its own run box."""
    cmd = commands.find(config.command)
    started = time.perf_counter()
    with RunBox() as box:
        _wire(box, config)
        output = box.call(cmd.handler)
    wall_time = time.perf_counter() - started
    logger.info("%s finished in %.3fs", config.command, wall_time)
    return RunResult(
        config=config.to_dict(),
        result=_jsonable(output.result),
        history=[float(x) for x in output.history],
        metrics={k: float(v) for k, v in output.metrics.items()},
        converged=output.converged,
        wall_time=wall_time,
    )


def summarize(results: Sequence[RunResult]) -> dict[str, dict[str, float]]:
    """mean/std/min/max of every metric reported by all runs."""
    names = set.intersection(*(set(r.metrics) for r in results)) if results else set()
    summary: dict[str, dict[str, float]] = {}
    for name in sorted(names):
        values = np.array([r.metrics[name] for r in results])
        summary[name] = {
            "mean": float(values.mean()),
            "std": float(values.std()),
            "min": float(values.min()),
            "max": float(values.max()),
        }
    return summary


def _jsonable(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}  # type: ignore[union-attr]
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]  # type: ignore[union-attr]
    if isinstance(value, np.generic):
        return value.item()
    return value


def _history_csv(results: Sequence[RunResult]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["run", "episode", "value"])
    for run, result in enumerate(results):
        for episode, value in enumerate(result.history):
            writer.writerow([run, episode, repr(value)])
    return buffer.getvalue()


def render(config: RunConfig, results: Sequence[RunResult]) -> str:
    if config.format == "csv":
        return _history_csv(results)
    if len(results) == 1 and config.repeat == 1:
        payload: Any = results[0].to_dict()
    else:
        payload = {"runs": [r.to_dict() for r in results], "summary": summarize(results)}
    return json.dumps(payload, indent=2) + "\n"


def _emit(sink: Injected[OutputSink], text: str):
    sink.write(text)


# argument parsing


def _parse_set(pairs: Sequence[str]) -> dict[str, Any]:
    res: dict[str, Any] = {}
    for pair in pairs:
        key, sep, raw = pair.partition("=")
        if not sep or not key:
            raise PreconditionError(f"--set expects key=value, got {pair!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        res[key.strip().replace("-", "_")] = value
    return res


def _common_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    group = parser.add_argument_group("run")
    group.add_argument("--env", help=f"environment: {', '.join(ENV_NAMES)}")
    group.add_argument("--seed", type=int)
    group.add_argument("--out", dest="output_path", help="output file (standard output by default)")
    group.add_argument("--format", choices=("json", "csv"))
    group.add_argument("--set", dest="set_pairs", action="append", default=[], metavar="KEY=VALUE")
    group.add_argument("--strict", action="store_true", default=None, help="exit 3 when a solver does not converge")
    group.add_argument("--repeat", type=int, help="independent runs with seeds seed..seed+N-1")
    group.add_argument("--config", dest="config_file", help="JSON file with parameter values")
    group.add_argument("-v", "--verbose", action="count", default=0)
    algo = parser.add_argument_group("algorithm")
    algo.add_argument("--gamma", type=float)
    algo.add_argument("--tol", type=float)
    algo.add_argument("--max-sweeps", type=int)
    algo.add_argument("--solver", help="analytic or iterative")
    algo.add_argument("--policy", help=f"{', '.join(POLICY_NAMES)} or a JSON file")
    algo.add_argument("--policy-file")
    algo.add_argument("--episodes", type=int)
    algo.add_argument("--alpha", type=float)
    algo.add_argument("--beta", type=float)
    algo.add_argument("--epsilon", type=float)
    algo.add_argument("--epsilon-decay", type=float)
    algo.add_argument("--alpha-schedule", help="constant, visits or power")
    algo.add_argument("--q-init", type=float)
    algo.add_argument("--max-steps", type=int)
    algo.add_argument("--mode", help="first|every (mc), online|paper-trace (pg ac)")
    algo.add_argument("--trajectory", help="JSON file with episodes to replay")
    algo.add_argument("--max-step", type=float, help="bound on a single policy-gradient step")
    algo.add_argument("--sigma0", type=float)
    algo.add_argument("--mu0", type=float)
    algo.add_argument("--starts", nargs="+", help="start states of sampled episodes")
    return parser


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="rlbox", description="Tabular reinforcement learning experiments.")
    groups = parser.add_subparsers(dest="group", required=True, metavar="COMMAND")
    variants: dict[str, list[tuple[str, str]]] = {}
    for (group, variant), cmd in commands.items():
        variants.setdefault(group, []).append((variant or "", cmd.help))
    for group, entries in variants.items():
        if len(entries) == 1 and not entries[0][0]:
            groups.add_parser(group, parents=[common], help=entries[0][1])
            continue
        group_parser = groups.add_parser(group, help=", ".join(v for v, _ in entries))
        sub = group_parser.add_subparsers(dest="variant", required=True, metavar="VARIANT")
        for variant, help_text in entries:
            sub.add_parser(variant, parents=[common], help=help_text)
    return parser


_NOT_PARAMETERS = {"group", "variant", "set_pairs", "config_file", "verbose"}


def make_config(args: argparse.Namespace) -> RunConfig:
    name = " ".join(filter(None, [args.group, getattr(args, "variant", None)]))
    merged: dict[str, Any] = dict(commands.find(name).defaults)
    if args.config_file:
        file_values = _load_json(args.config_file)
        if not isinstance(file_values, Mapping):
            raise PreconditionError(f"{args.config_file} must contain a JSON object")
        merged |= {str(k).replace("-", "_"): v for k, v in file_values.items()}  # type: ignore[union-attr]
    merged |= {k: v for k, v in vars(args).items() if k not in _NOT_PARAMETERS and v is not None}
    env_overrides = dict(merged.pop("env_overrides", {}))
    settings = _parse_set(args.set_pairs)
    run_keys = fields_dict(RunConfig)
    env_keys = environments.parameters(str(settings.get("env", merged.get("env", DEFAULT_ENV))))
    for key, value in settings.items():
        if key.startswith("env."):
            env_overrides[key.removeprefix("env.")] = value
        elif key not in run_keys and key in env_keys:
            env_overrides[key] = value
        else:
            merged[key] = value
    merged["env_overrides"] = env_overrides
    merged["command"] = name
    return RunConfig.from_dict(merged)


def configure_logging(verbosity: int):
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def run(argv: Sequence[str] | None = None) -> int:
    """Parses `argv`, runs the command (once per seed with `--repeat`) and writes the output. Returns the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    configure_logging(args.verbose)
    try:
        config = make_config(args)
        results = [run_once(config if i == 0 else evolve(config, seed=config.seed + i)) for i in range(config.repeat)]
        with RunBox() as box:
            box.bind(RunConfig, lambda: config)
            box.bind(OutputSink, lambda config: OutputSink(config.output_path), config=RunConfig)
            box.call(_emit, text=render(config, results))
    except ValueError as e:
        print(f"rlbox: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    if config.strict and not all(r.converged for r in results):
        print("rlbox: error: the solver did not converge", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return 0


def main():
    sys.exit(run())
