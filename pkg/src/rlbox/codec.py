"""
Model layout::

    {
        "states": ["s1", "s2", "s3"],          # optional, defaults to the order of "transitions"
        "actions": ["left", "right"],          # optional, defaults to the canonical action order
        "terminals": ["s3"],
        "gamma": 1.0,
        "step_reward": -1, "terminal_reward": 5,   # only needed for rows without explicit rewards
        "transitions": {
            "s1": {"left": "s1", "right": [["s2", 0.7], ["s1", 0.3]]},
            "s2": {"left": [["s1", -1, 1.0]], "right": [["s3", 5, 1.0]]},
            "s3": {}
        }
    }

A row is either a next-state label (deterministic move), a list of ``[next, probability]`` pairs or a list
of ``[next, reward, probability]`` triples.
"""

from typing import Any, Iterable, Mapping

from .errors import ModelError
from .mdp import ACTION_ORDER, Outcome, TabularPolicy, TransitionModel, Trajectory


def model_to_dict(model: TransitionModel) -> dict[str, Any]:
    transitions: dict[str, dict[str, list[list[Any]]]] = {}
    for s in model.states:
        transitions[s.label] = {
            a.label: [[o.next_state, o.reward, o.probability] for o in model.outcomes(s, a)] for a in model.actions_at(s)
        }
    return {
        "states": [s.label for s in model.states],
        "actions": [a.label for a in model.actions],
        "terminals": [s.label for s in model.states if model.is_terminal(s)],
        "gamma": model.gamma_default,
        "transitions": transitions,
    }


def model_from_dict(data: Mapping[str, Any]) -> TransitionModel:
    try:
        transitions: Mapping[str, Mapping[str, Any]] = data["transitions"]
    except KeyError:
        raise ModelError("model description has no 'transitions'") from None
    states = list(data.get("states", transitions.keys()))
    terminals = set(data.get("terminals", ()))
    step_reward = data.get("step_reward")
    terminal_reward = data.get("terminal_reward")
    used_actions = {a for row in transitions.values() for a in row}
    default_actions = [a for a in ACTION_ORDER if a in used_actions] + sorted(used_actions - set(ACTION_ORDER))
    actions = list(data.get("actions", default_actions))

    def reward_for(s: str, a: str, next_state: str) -> float:
        reward = terminal_reward if next_state in terminals else step_reward
        if reward is None:
            raise ModelError(f"row ({s}, {a}) has no rewards and the model defines no reward rule")
        return float(reward)

    entries: dict[tuple[str, str], list[Outcome]] = {}
    for s, row in transitions.items():
        for a, spec in row.items():
            entries[s, a] = list(_parse_row(s, a, spec, reward_for))
    return TransitionModel.build(states, actions, entries, terminals, float(data.get("gamma", 1.0)))


def _parse_row(s: str, a: str, spec: Any, reward_for: Any) -> Iterable[Outcome]:
    if isinstance(spec, str):
        yield Outcome(spec, reward_for(s, a, spec), 1.0)
        return
    for item in spec:
        if len(item) == 2:
            next_state, probability = item
            yield Outcome(str(next_state), reward_for(s, a, next_state), float(probability))
        elif len(item) == 3:
            next_state, reward, probability = item
            yield Outcome(str(next_state), float(reward), float(probability))
        else:
            raise ModelError(f"row ({s}, {a}) has a malformed outcome {item!r}")


def policy_to_dict(policy: TabularPolicy) -> dict[str, dict[str, float]]:
    return {s: dict(row) for s, row in policy.probs.items()}


def policy_from_dict(data: Mapping[str, Any]) -> TabularPolicy:
    """Accepts state -> {action: probability} and the shorthand state -> action for deterministic rows."""
    probs: dict[str, dict[str, float]] = {}
    for s, row in data.items():
        if isinstance(row, str):
            probs[s] = {row: 1.0}
        elif isinstance(row, Mapping):
            probs[s] = {str(a): float(p) for a, p in row.items()}  # type: ignore[union-attr]
        else:
            raise ModelError(f"policy row for {s} must be an action label or a mapping, got {row!r}")
    return TabularPolicy(probs)


def trajectory_to_dict(trajectory: Trajectory) -> dict[str, Any]:
    return {"steps": [list(t) for t in trajectory.as_tuples()], "final": trajectory.final_state.label}


def trajectory_from_dict(model: TransitionModel, data: Mapping[str, Any]) -> Trajectory:
    try:
        steps = [(str(s), str(a), float(r)) for s, a, r in data["steps"]]
        final = str(data["final"])
    except (KeyError, TypeError, ValueError) as e:
        raise ModelError(f"malformed trajectory description: {e}") from e
    return Trajectory.from_labels(model, steps, final)


def trajectories_from_json(model: TransitionModel, data: Any) -> list[Trajectory]:
    """A single trajectory object or a list of them."""
    if isinstance(data, Mapping):
        return [trajectory_from_dict(model, data)]  # type: ignore[arg-type]
    return [trajectory_from_dict(model, item) for item in data]
