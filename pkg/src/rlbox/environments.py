"""The grid worlds, built as `TransitionModel`s, and a sampling `step`."""

import logging
from typing import Any, Mapping, Sequence

import numpy as np
from attrs import field, frozen

from .dp import ValueTable, greedy_policy, q_from_v
from .errors import PreconditionError, UnknownNameError
from .mdp import ActionKey, StateId, StateKey, TabularPolicy, TransitionModel, sample_outcome
from .registry import Registry

logger = logging.getLogger(__name__)

Entries = dict[tuple[str, str], list[tuple[str, float, float]]]


def _start_states_valid(instance: "EnvSpec", attribute: Any, value: tuple[StateId, ...]):
    terminal = [s.label for s in value if instance.model.is_terminal(s)]
    if terminal:
        raise PreconditionError(f"start states must be non-terminal, got {terminal}")


@frozen
class EnvSpec:
    name: str
    model: TransitionModel
    start_states: tuple[StateId, ...] = field(converter=tuple, validator=_start_states_valid)
    optimal_values: ValueTable | None
    terminal_reward: float
    step_reward: float = -1.0

    @property
    def gamma(self) -> float:
        return self.model.gamma_default


def _moves(
    rows: Mapping[str, Mapping[str, Sequence[tuple[str, float]]]],
    terminals: set[str],
    step_reward: float,
    terminal_reward: float,
) -> Entries:
    """Attaches rewards to (next_state, probability) listings: entering a terminal pays `terminal_reward`."""
    return {
        (s, a): [(nxt, terminal_reward if nxt in terminals else step_reward, p) for nxt, p in outcomes]
        for s, row in rows.items()
        for a, outcomes in row.items()
    }


def _shortest_path_values(
    distances: Mapping[str, int], step_reward: float, terminal_reward: float, gamma: float
) -> ValueTable | None:
    """
    Optimal values of a deterministic grid where every move costs `step_reward` and entering a terminal pays
    `terminal_reward`. Shortest paths are optimal only when each extra step loses value; otherwise None.
    """
    if step_reward >= 0.0 or (gamma < 1.0 and (1.0 - gamma) * terminal_reward <= step_reward):
        return None
    values: dict[str, float] = {}
    for s, d in distances.items():
        if d == 0:
            values[s] = 0.0
        elif gamma == 1.0:
            values[s] = (d - 1) * step_reward + terminal_reward
        else:
            values[s] = step_reward * (1.0 - gamma ** (d - 1)) / (1.0 - gamma) + gamma ** (d - 1) * terminal_reward
    return ValueTable(values)


def _line_rows(n: int, terminals: set[str]) -> dict[str, dict[str, list[tuple[str, float]]]]:
    rows: dict[str, dict[str, list[tuple[str, float]]]] = {}
    for k in range(1, n + 1):
        s = f"s{k}"
        if s in terminals:
            continue
        rows[s] = {"left": [(f"s{max(k - 1, 1)}", 1.0)], "right": [(f"s{min(k + 1, n)}", 1.0)]}
    return rows


def _env(
    name: str,
    states: Sequence[str],
    actions: Sequence[str],
    entries: Entries,
    terminals: set[str],
    gamma: float,
    terminal_reward: float,
    step_reward: float,
    optimal_values: ValueTable | None,
) -> EnvSpec:
    model = TransitionModel.build(states, actions, entries, terminals, gamma)
    return EnvSpec(
        name=name,
        model=model,
        start_states=model.nonterminal_states,
        optimal_values=optimal_values,
        terminal_reward=terminal_reward,
        step_reward=step_reward,
    )


def make_grid1d9(terminal_reward: float = 5.0, step_reward: float = -1.0, gamma: float = 1.0) -> EnvSpec:
    states = [f"s{k}" for k in range(1, 10)]
    terminals = {"s5"}
    entries = _moves(_line_rows(9, terminals), terminals, step_reward, terminal_reward)
    distances = {f"s{k}": abs(k - 5) for k in range(1, 10)}
    optimal = _shortest_path_values(distances, step_reward, terminal_reward, gamma)
    return _env("grid1d9", states, ["left", "right"], entries, terminals, gamma, terminal_reward, step_reward, optimal)


_STOCHASTIC_ROWS: dict[str, dict[str, list[tuple[str, float]]]] = {
    "s1": {"right": [("s2", 0.7), ("s1", 0.3)], "left": [("s1", 1.0)]},
    "s2": {"right": [("s3", 0.8), ("s1", 0.2)], "left": [("s1", 1.0)]},
    "s3": {"right": [("s4", 0.9), ("s2", 0.1)], "left": [("s2", 1.0)]},
    "s4": {"right": [("s5", 1.0)], "left": [("s3", 1.0)]},
    "s6": {"right": [("s7", 0.6), ("s5", 0.4)], "left": [("s5", 1.0)]},
    "s7": {"right": [("s8", 0.7), ("s6", 0.3)], "left": [("s6", 1.0)]},
    "s8": {"right": [("s9", 0.8), ("s7", 0.2)], "left": [("s7", 1.0)]},
    "s9": {"right": [("s9", 1.0)], "left": [("s8", 1.0)]},
}


def make_grid1d9_stochastic(terminal_reward: float = 5.0, step_reward: float = -1.0, gamma: float = 1.0) -> EnvSpec:
    states = [f"s{k}" for k in range(1, 10)]
    terminals = {"s5"}
    entries = _moves(_STOCHASTIC_ROWS, terminals, step_reward, terminal_reward)
    return _env(
        "grid1d9_stochastic", states, ["left", "right"], entries, terminals, gamma, terminal_reward, step_reward, None
    )


def make_grid2x2(terminal_reward: float = 3.0, step_reward: float = -1.0, gamma: float = 1.0) -> EnvSpec:
    # s1 s2
    # s3 s4
    terminals = {"s4"}
    rows = {
        "s1": {"right": [("s2", 1.0)], "down": [("s3", 1.0)]},
        "s2": {"left": [("s1", 1.0)], "down": [("s4", 1.0)]},
        "s3": {"right": [("s4", 1.0)], "up": [("s1", 1.0)]},
    }
    entries = _moves(rows, terminals, step_reward, terminal_reward)
    optimal = _shortest_path_values({"s1": 2, "s2": 1, "s3": 1, "s4": 0}, step_reward, terminal_reward, gamma)
    return _env(
        "grid2x2", ["s1", "s2", "s3", "s4"], ["left", "right", "up", "down"], entries, terminals, gamma,
        terminal_reward, step_reward, optimal,
    )


_GRID_MOVES = {"left": (0, -1), "right": (0, 1), "up": (-1, 0), "down": (1, 0)}


def make_grid3x3(terminal_reward: float = 3.0, step_reward: float = -1.0, gamma: float = 1.0) -> EnvSpec:
    # s1 s2 s3
    # s4 s5 s6
    # s7 s8 s9
    terminals = {"s7"}
    rows: dict[str, dict[str, list[tuple[str, float]]]] = {}
    for r in range(3):
        for c in range(3):
            s = f"s{3 * r + c + 1}"
            if s in terminals:
                continue
            rows[s] = {}
            for action, (dr, dc) in _GRID_MOVES.items():
                nr, nc = r + dr, c + dc
                if not (0 <= nr < 3 and 0 <= nc < 3):
                    nr, nc = r, c
                rows[s][action] = [(f"s{3 * nr + nc + 1}", 1.0)]
    entries = _moves(rows, terminals, step_reward, terminal_reward)
    distances = {f"s{3 * r + c + 1}": abs(r - 2) + c for r in range(3) for c in range(3)}
    optimal = _shortest_path_values(distances, step_reward, terminal_reward, gamma)
    states = [f"s{k}" for k in range(1, 10)]
    return _env(
        "grid3x3", states, list(_GRID_MOVES), entries, terminals, gamma, terminal_reward, step_reward, optimal
    )


def make_grid1d8_two_terminal(terminal_reward: float = 5.0, step_reward: float = -1.0, gamma: float = 0.9) -> EnvSpec:
    states = [f"s{k}" for k in range(1, 9)]
    terminals = {"s4", "s8"}
    entries = _moves(_line_rows(8, terminals), terminals, step_reward, terminal_reward)
    distances = {f"s{k}": min(abs(k - 4), abs(k - 8)) for k in range(1, 9)}
    optimal = _shortest_path_values(distances, step_reward, terminal_reward, gamma)
    return _env(
        "grid1d8_two_terminal", states, ["left", "right"], entries, terminals, gamma, terminal_reward, step_reward, optimal
    )


environments = Registry[EnvSpec]("environment")
environments.bind("grid1d9", make_grid1d9)
environments.bind("grid1d9_stochastic", make_grid1d9_stochastic)
environments.bind("grid2x2", make_grid2x2)
environments.bind("grid3x3", make_grid3x3)
environments.bind("grid1d8_two_terminal", make_grid1d8_two_terminal)

ENV_NAMES = tuple(environments.names())


def make_env(name: str, overrides: Mapping[str, Any] | None = None) -> EnvSpec:
    """
    Builds a registered environment.

    Args:
        name: One of `ENV_NAMES`.
        overrides: Factory parameters to change, e.g. ``{"terminal_reward": 3}``.

    Raises:
        UnknownNameError: unknown environment or override name.
    """
    env = environments.provide(name, **dict(overrides or {}))
    logger.debug("Created environment %s with %d states", name, len(env.model.states))
    return env


def step(env: EnvSpec, state: StateKey, action: ActionKey, rng: np.random.Generator) -> tuple[StateId, float, bool]:
    """Samples (s', r) for (state, action); `done` is true iff s' is terminal."""
    model = env.model
    s = model.state(state)
    if model.is_terminal(s):
        raise PreconditionError(f"cannot step from terminal state {s.label}")
    a = model.action(action)
    if a not in model.actions_at(s):
        raise PreconditionError(f"action {a.label} is not defined at {s.label}")
    outcome = sample_outcome(model, s, a, rng)
    next_state = model.state(outcome.next_state)
    return next_state, outcome.reward, model.is_terminal(next_state)


POLICY_NAMES = ("uniform", "table1", "improved")


def builtin_policy(env: EnvSpec, name: str) -> TabularPolicy:
    """
    Named policies: `uniform` over the actions of every state, `table1` moving right everywhere, and
    `improved`, greedy with respect to the environment's optimal values.
    """
    model = env.model
    if name == "uniform":
        return TabularPolicy.uniform(model)
    if name == "table1":
        missing = [s.label for s in model.nonterminal_states if "right" not in {a.label for a in model.actions_at(s)}]
        if missing:
            raise PreconditionError(f"policy table1 needs a right move in every state; {env.name} lacks it at {missing}")
        return TabularPolicy.deterministic(model, {s.label: "right" for s in model.nonterminal_states})
    if name == "improved":
        if env.optimal_values is None:
            raise PreconditionError(f"environment {env.name} has no optimal value table to improve against")
        return greedy_policy(q_from_v(model, env.optimal_values))
    raise UnknownNameError("policy", name, POLICY_NAMES)
