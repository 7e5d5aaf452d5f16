import math
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

import numpy as np
from attrs import field, frozen

from .errors import ModelError, PreconditionError

PROBABILITY_TOLERANCE = 1e-12

ACTION_ORDER = ("left", "right", "up", "down")
"""Fixed action order; ties between equally good actions go to the earliest one."""


@frozen(order=True)
class StateId:
    index: int
    label: str

    def __str__(self) -> str:
        return self.label


@frozen(order=True)
class ActionId:
    index: int
    label: str

    def __str__(self) -> str:
        return self.label


StateKey = StateId | str
ActionKey = ActionId | str


def label_of(key: StateKey | ActionKey) -> str:
    return key if isinstance(key, str) else key.label


class Outcome(NamedTuple):
    next_state: str
    reward: float
    probability: float


def _freeze_entries(entries: Mapping[tuple[str, str], Iterable[Outcome]]) -> Mapping[tuple[str, str], tuple[Outcome, ...]]:
    frozen_entries = {
        (s, a): tuple(Outcome(str(o[0]), float(o[1]), float(o[2])) for o in outcomes)
        for (s, a), outcomes in entries.items()
    }
    return MappingProxyType(frozen_entries)


@frozen(eq=False)
class TransitionModel:
    """
    State-reward transition probabilities p(s', r | s, a) over a finite set of labelled states and actions.

    Construction validates the model and rejects it instead of renormalizing:
    every non-terminal state needs at least one action, every defined (s, a) row must sum to 1 within
    1e-12 with non-negative probabilities and finite rewards, and terminal states have no rows.

    Use `TransitionModel.build` to create one from plain labels.
    """

    states: tuple[StateId, ...]
    actions: tuple[ActionId, ...]
    entries: Mapping[tuple[str, str], tuple[Outcome, ...]] = field(converter=_freeze_entries)
    terminals: frozenset[str] = field(converter=frozenset)
    gamma_default: float = 1.0
    _state_index: Mapping[str, StateId] = field(init=False)
    _action_index: Mapping[str, ActionId] = field(init=False)
    _actions_at: Mapping[str, tuple[ActionId, ...]] = field(init=False)

    def __attrs_post_init__(self):
        object.__setattr__(self, "_state_index", MappingProxyType({s.label: s for s in self.states}))
        object.__setattr__(self, "_action_index", MappingProxyType({a.label: a for a in self.actions}))
        per_state: dict[str, list[ActionId]] = {s.label: [] for s in self.states}
        for s_label, a_label in self.entries:
            if s_label not in self._state_index:
                raise ModelError(f"transition row for unknown state {s_label!r}")
            if a_label not in self._action_index:
                raise ModelError(f"transition row ({s_label}, {a_label}) uses an unknown action")
            per_state[s_label].append(self._action_index[a_label])
        object.__setattr__(
            self, "_actions_at", MappingProxyType({s: tuple(sorted(actions)) for s, actions in per_state.items()})
        )
        self._validate()

    @classmethod
    def build(
        cls,
        states: Sequence[str],
        actions: Sequence[str],
        entries: Mapping[tuple[str, str], Iterable[tuple[str, float, float]]],
        terminals: Iterable[str],
        gamma_default: float = 1.0,
    ) -> "TransitionModel":
        """Creates a model from labels; `entries` maps (state, action) to (next_state, reward, probability) triples."""
        return cls(
            states=tuple(StateId(i, s) for i, s in enumerate(states)),
            actions=tuple(ActionId(i, a) for i, a in enumerate(actions)),
            entries={k: [Outcome(*o) for o in v] for k, v in entries.items()},
            terminals=frozenset(terminals),
            gamma_default=gamma_default,
        )

    def _validate(self):
        labels = [s.label for s in self.states]
        if len(set(labels)) != len(labels):
            raise ModelError(f"state labels are not unique: {labels}")
        if [s.index for s in self.states] != list(range(len(self.states))):
            raise ModelError("state indices must enumerate the state list")
        if not 0.0 <= self.gamma_default <= 1.0:
            raise ModelError(f"gamma_default must lie in [0, 1], got {self.gamma_default}")
        unknown_terminals = self.terminals - set(labels)
        if unknown_terminals:
            raise ModelError(f"unknown terminal states: {sorted(unknown_terminals)}")
        for s in self.states:
            actions = self._actions_at[s.label]
            if s.label in self.terminals:
                if actions:
                    raise ModelError(f"terminal state {s.label} has outgoing transitions")
            elif not actions:
                raise ModelError(f"non-terminal state {s.label} has no actions")
        for (s_label, a_label), outcomes in self.entries.items():
            if not outcomes:
                raise ModelError(f"transition row ({s_label}, {a_label}) is empty")
            for o in outcomes:
                if o.next_state not in self._state_index:
                    raise ModelError(f"transition ({s_label}, {a_label}) leads to unknown state {o.next_state!r}")
                if o.probability < 0.0:
                    raise ModelError(f"transition ({s_label}, {a_label}) -> {o.next_state} has negative probability")
                if not math.isfinite(o.reward):
                    raise ModelError(f"transition ({s_label}, {a_label}) -> {o.next_state} has a non-finite reward")
            total = math.fsum(o.probability for o in outcomes)
            if abs(total - 1.0) > PROBABILITY_TOLERANCE:
                raise ModelError(f"probabilities of ({s_label}, {a_label}) sum to {total!r}, not 1")

    def state(self, key: StateKey) -> StateId:
        try:
            return self._state_index[label_of(key)]
        except KeyError:
            raise ModelError(f"unknown state {label_of(key)!r}") from None

    def action(self, key: ActionKey) -> ActionId:
        try:
            return self._action_index[label_of(key)]
        except KeyError:
            raise ModelError(f"unknown action {label_of(key)!r}") from None

    def is_terminal(self, key: StateKey) -> bool:
        return label_of(key) in self.terminals

    @property
    def nonterminal_states(self) -> tuple[StateId, ...]:
        return tuple(s for s in self.states if s.label not in self.terminals)

    def actions_at(self, key: StateKey) -> tuple[ActionId, ...]:
        return self._actions_at[self.state(key).label]

    def outcomes(self, state: StateKey, action: ActionKey) -> tuple[Outcome, ...]:
        try:
            return self.entries[label_of(state), label_of(action)]
        except KeyError:
            raise ModelError(f"no transition defined for ({label_of(state)}, {label_of(action)})") from None

    def state_transition_probs(self, state: StateKey, action: ActionKey) -> dict[str, float]:
        """p(s'|s,a): the reward dimension summed out."""
        probs: dict[str, float] = {}
        for o in self.outcomes(state, action):
            probs[o.next_state] = probs.get(o.next_state, 0.0) + o.probability
        return probs

    def expected_reward(self, state: StateKey, action: ActionKey) -> float:
        return math.fsum(o.probability * o.reward for o in self.outcomes(state, action))

    def is_deterministic(self) -> bool:
        return all(len(outcomes) == 1 for outcomes in self.entries.values())


def _freeze_probs(probs: Mapping[str, Mapping[str, float]]) -> Mapping[str, Mapping[str, float]]:
    return MappingProxyType({s: MappingProxyType({a: float(p) for a, p in row.items()}) for s, row in probs.items()})


@frozen(eq=False)
class TabularPolicy:
    """
    π(a|s) as a table: state label -> action label -> probability.

    The table is stored as given; `validate_policy` reports rows that are not proper distributions. States
    without a row behave as the empty distribution.
    """

    probs: Mapping[str, Mapping[str, float]] = field(converter=_freeze_probs)

    def distribution(self, state: StateKey) -> Mapping[str, float]:
        return self.probs.get(label_of(state), MappingProxyType({}))

    def prob(self, state: StateKey, action: ActionKey) -> float:
        return self.distribution(state).get(label_of(action), 0.0)

    def choices(self) -> dict[str, str]:
        """The most likely action of every non-empty row (first one on ties)."""
        res: dict[str, str] = {}
        for s, row in self.probs.items():
            if row:
                res[s] = max(row, key=lambda a: row[a])
        return res

    @classmethod
    def deterministic(cls, model: TransitionModel, choices: Mapping[str, str]) -> "TabularPolicy":
        """Probability 1 on the chosen action, 0 on the state's other actions, empty rows for terminals."""
        probs: dict[str, dict[str, float]] = {}
        for s in model.states:
            if model.is_terminal(s):
                probs[s.label] = {}
                continue
            chosen = choices[s.label]
            probs[s.label] = {a.label: 1.0 if a.label == chosen else 0.0 for a in model.actions_at(s)}
        return cls(probs)

    @classmethod
    def uniform(cls, model: TransitionModel) -> "TabularPolicy":
        probs: dict[str, dict[str, float]] = {}
        for s in model.states:
            actions = model.actions_at(s)
            probs[s.label] = {a.label: 1.0 / len(actions) for a in actions}
        return cls(probs)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TabularPolicy):
            return NotImplemented
        return {s: dict(r) for s, r in self.probs.items()} == {s: dict(r) for s, r in other.probs.items()}

    __hash__ = None  # type: ignore[assignment]


class PolicyIssue(NamedTuple):
    state: str
    reason: str


@frozen
class PolicyReport:
    issues: tuple[PolicyIssue, ...] = ()

    @property
    def states(self) -> list[str]:
        return list(dict.fromkeys(issue.state for issue in self.issues))

    def __bool__(self) -> bool:
        return bool(self.issues)

    def __str__(self) -> str:
        return "; ".join(f"{i.state}: {i.reason}" for i in self.issues) or "valid"


def validate_policy(policy: TabularPolicy, model: TransitionModel) -> PolicyReport:
    """Lists every state whose distribution is not a valid π(·|s) for `model`. An empty report means valid."""
    issues: list[PolicyIssue] = []
    for s in model.states:
        row = policy.distribution(s)
        if model.is_terminal(s):
            if any(p != 0.0 for p in row.values()):
                issues.append(PolicyIssue(s.label, "terminal state must have an empty distribution"))
            continue
        if not row:
            issues.append(PolicyIssue(s.label, "missing distribution"))
            continue
        defined = {a.label for a in model.actions_at(s)}
        for a, p in row.items():
            if p < 0.0:
                issues.append(PolicyIssue(s.label, f"negative probability for {a}"))
            if p > 0.0 and a not in defined:
                issues.append(PolicyIssue(s.label, f"action {a} is not defined at this state"))
        total = math.fsum(row.values())
        if abs(total - 1.0) > PROBABILITY_TOLERANCE:
            issues.append(PolicyIssue(s.label, f"probabilities sum to {total!r}"))
    unknown = sorted(set(policy.probs) - {s.label for s in model.states})
    issues.extend(PolicyIssue(s, "unknown state") for s in unknown)
    return PolicyReport(tuple(issues))


class Step(NamedTuple):
    state: StateId
    action: ActionId
    reward: float


@frozen
class Trajectory:
    """
    One episode: `steps[t]` is (s_t, a_t, r_{t+1}). `final_state` is the successor of the last step, a
    terminal state when `terminated` is true.
    """

    steps: tuple[Step, ...]
    start_state: StateId
    terminated: bool
    final_state: StateId

    @property
    def rewards(self) -> list[float]:
        return [step.reward for step in self.steps]

    def transitions(self) -> Iterator[tuple[StateId, ActionId, float, StateId]]:
        """Yields (s, a, r, s') for every step."""
        for t, step in enumerate(self.steps):
            next_state = self.steps[t + 1].state if t + 1 < len(self.steps) else self.final_state
            yield step.state, step.action, step.reward, next_state

    def as_tuples(self) -> list[tuple[str, str, float]]:
        return [(s.state.label, s.action.label, s.reward) for s in self.steps]

    def __len__(self) -> int:
        return len(self.steps)

    @classmethod
    def from_labels(
        cls, model: TransitionModel, steps: Iterable[tuple[str, str, float]], final: str
    ) -> "Trajectory":
        """Builds a replayable trajectory from (state, action, reward) labels and the successor of the last step."""
        records = tuple(Step(model.state(s), model.action(a), float(r)) for s, a, r in steps)
        if not records:
            raise PreconditionError("a trajectory needs at least one step")
        final_state = model.state(final)
        return cls(records, records[0].state, model.is_terminal(final_state), final_state)


def returns_to_go(rewards: Sequence[float], gamma: float) -> list[float]:
    """G_t for every t, computed backward in one pass with G_t = r_{t+1} + γ·G_{t+1}."""
    check_gamma(gamma)
    returns = [0.0] * len(rewards)
    g = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        g = rewards[t] + gamma * g
        returns[t] = g
    return returns


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    """Σ_k γ^k · rewards[k]; 0 for an empty sequence."""
    returns = returns_to_go(rewards, gamma)
    return returns[0] if returns else 0.0


def sample_index(rng: np.random.Generator, weights: Sequence[float]) -> int:
    """Draws an index with probability proportional to `weights` (which sum to 1)."""
    u = rng.random()
    acc = 0.0
    last = 0
    for i, w in enumerate(weights):
        if w <= 0.0:
            continue
        acc += w
        last = i
        if u < acc:
            return i
    return last


def sample_action(policy: TabularPolicy, model: TransitionModel, state: StateId, rng: np.random.Generator) -> ActionId:
    row = policy.distribution(state)
    if not row or math.fsum(row.values()) <= 0.0:
        raise ModelError(f"policy has no distribution for state {state.label}")
    labels = list(row)
    return model.action(labels[sample_index(rng, [row[a] for a in labels])])


def sample_outcome(model: TransitionModel, state: StateId, action: ActionId, rng: np.random.Generator) -> Outcome:
    outcomes = model.outcomes(state, action)
    return outcomes[sample_index(rng, [o.probability for o in outcomes])]


def rollout(
    model: TransitionModel,
    policy: TabularPolicy,
    start: StateKey,
    max_steps: int,
    rng: np.random.Generator,
) -> Trajectory:
    """
    Samples one episode: a ~ π(·|s), then (s', r) ~ p(·,·|s,a), until a terminal state or `max_steps`.

    Raises:
        PreconditionError: `start` is terminal or `max_steps` < 1.
        ModelError: a visited state has no policy row, or the chosen action has no transition row.
    """
    start_state = model.state(start)
    if model.is_terminal(start_state):
        raise PreconditionError(f"rollout cannot start in terminal state {start_state.label}")
    if max_steps < 1:
        raise PreconditionError(f"max_steps must be at least 1, got {max_steps}")
    steps: list[Step] = []
    state = start_state
    terminated = False
    for _ in range(max_steps):
        action = sample_action(policy, model, state, rng)
        outcome = sample_outcome(model, state, action, rng)
        steps.append(Step(state, action, outcome.reward))
        state = model.state(outcome.next_state)
        if model.is_terminal(state):
            terminated = True
            break
    return Trajectory(tuple(steps), start_state, terminated, state)


def check_gamma(gamma: float):
    if not 0.0 <= gamma <= 1.0:
        raise PreconditionError(f"gamma must lie in [0, 1], got {gamma}")
