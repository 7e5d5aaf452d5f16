"""
θ-parameterized policies on two-direction grids: π(left|s) = 0.5 + θ_s and π(right|s) = 0.5 − θ_s.
A state next to a wall keeps a fixed row pointing away from it.
"""

import logging
import math
from enum import Enum
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

import numpy as np
from attrs import Factory, evolve, field, frozen, validators

from .environments import EnvSpec, step
from .errors import PreconditionError, SingularGradientError
from .mdp import (
    StateId,
    StateKey,
    TabularPolicy,
    TransitionModel,
    Trajectory,
    check_gamma,
    discounted_return,
    label_of,
    returns_to_go,
    sample_index,
)

logger = logging.getLogger(__name__)

CLIP_MARGIN = 1e-3
REINFORCE_MAX_STEP = 0.05

LEFT = "left"
RIGHT = "right"


class ThetaMode(Enum):
    """Clip regime: `Training` keeps both actions possible, `PaperTrace` clips to exactly ±0.5."""

    Training = "training"
    PaperTrace = "paper_trace"

    @property
    def bounds(self) -> tuple[float, float]:
        if self == ThetaMode.Training:
            return -0.5 + CLIP_MARGIN, 0.5 - CLIP_MARGIN
        return -0.5, 0.5


def _freeze_theta(theta: Mapping[str, float]) -> Mapping[str, float]:
    return MappingProxyType({label_of(s): float(v) for s, v in theta.items()})


def _freeze_fixed(fixed: Mapping[str, Mapping[str, float]]) -> Mapping[str, Mapping[str, float]]:
    return MappingProxyType({s: MappingProxyType(dict(row)) for s, row in fixed.items()})


def _theta_in_bounds(instance: "ThetaPolicy", attribute: object, theta: Mapping[str, float]):
    bad = {s: v for s, v in theta.items() if not instance.clip_lo <= v <= instance.clip_hi}
    if bad:
        raise PreconditionError(f"theta outside [{instance.clip_lo}, {instance.clip_hi}]: {bad}")


def _clip_lo_default(self: "ThetaPolicy") -> float:
    return self.mode.bounds[0]


def _clip_hi_default(self: "ThetaPolicy") -> float:
    return self.mode.bounds[1]


@frozen(eq=False)
class ThetaPolicy:
    """
    θ per non-terminal state, in model order. Wall states keep θ = 0 and use their row from `fixed`.

    Use `ThetaPolicy.initial` to create the θ = 0 policy of a model.
    """

    theta: Mapping[str, float] = field(converter=_freeze_theta)
    mode: ThetaMode = ThetaMode.Training
    fixed: Mapping[str, Mapping[str, float]] = field(factory=dict, converter=_freeze_fixed)
    clip_lo: float = field(default=Factory(_clip_lo_default, takes_self=True))
    clip_hi: float = field(default=Factory(_clip_hi_default, takes_self=True))

    def __attrs_post_init__(self):
        _theta_in_bounds(self, None, self.theta)

    @classmethod
    def initial(cls, model: TransitionModel, mode: ThetaMode = ThetaMode.Training) -> "ThetaPolicy":
        """
        θ = 0 everywhere. A state whose left (right) move keeps it in place gets the fixed row
        {left: 0, right: 1} ({left: 1, right: 0}).

        Raises:
            PreconditionError: a non-terminal state lacks the left or right move.
        """
        theta: dict[str, float] = {}
        fixed: dict[str, dict[str, float]] = {}
        for s in model.nonterminal_states:
            actions = {a.label for a in model.actions_at(s)}
            if actions != {LEFT, RIGHT}:
                raise PreconditionError(f"state {s.label} must offer exactly left and right, got {sorted(actions)}")
            theta[s.label] = 0.0
            left_wall = model.state_transition_probs(s, LEFT).get(s.label, 0.0) == 1.0
            right_wall = model.state_transition_probs(s, RIGHT).get(s.label, 0.0) == 1.0
            if left_wall and not right_wall:
                fixed[s.label] = {LEFT: 0.0, RIGHT: 1.0}
            elif right_wall and not left_wall:
                fixed[s.label] = {LEFT: 1.0, RIGHT: 0.0}
        return cls(theta, mode, fixed)

    def __getitem__(self, state: StateKey) -> float:
        return self.theta[label_of(state)]

    def is_fixed(self, state: StateKey) -> bool:
        return label_of(state) in self.fixed

    def parameter_name(self, state: StateKey) -> str:
        """Positional parameter name: the k-th non-terminal state owns θk (s7 of the two-terminal grid is θ6)."""
        label = label_of(state)
        try:
            return f"θ{list(self.theta).index(label) + 1}"
        except ValueError:
            raise PreconditionError(f"state {label} has no parameter") from None

    def with_theta(self, updates: Mapping[str, float]) -> "ThetaPolicy":
        return evolve(self, theta={**self.theta, **updates})

    def clip(self, value: float) -> float:
        return min(max(value, self.clip_lo), self.clip_hi)

    def as_tabular(self, model: TransitionModel) -> TabularPolicy:
        probs: dict[str, dict[str, float]] = {s.label: {} for s in model.states if model.is_terminal(s)}
        for s in self.theta:
            probs[s] = theta_policy_probs(self, s)
        return TabularPolicy(probs)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ThetaPolicy):
            return NotImplemented
        return (
            dict(self.theta) == dict(other.theta)
            and self.mode == other.mode
            and {s: dict(r) for s, r in self.fixed.items()} == {s: dict(r) for s, r in other.fixed.items()}
            and (self.clip_lo, self.clip_hi) == (other.clip_lo, other.clip_hi)
        )

    __hash__ = None  # type: ignore[assignment]


def theta_policy_probs(policy: ThetaPolicy, state: StateKey) -> dict[str, float]:
    label = label_of(state)
    if label in policy.fixed:
        return dict(policy.fixed[label])
    try:
        theta = policy.theta[label]
    except KeyError:
        raise PreconditionError(f"state {label} is terminal or unknown to the policy") from None
    return {LEFT: 0.5 + theta, RIGHT: 0.5 - theta}


def log_policy_grad(policy: ThetaPolicy, state: StateKey, action: str) -> float:
    """
    ∂/∂θ_s log π(action|s): +1/(0.5+θ) for left, −1/(0.5−θ) for right, 0 for a fixed wall row.

    Raises:
        SingularGradientError: the action has probability 0.
    """
    label = label_of(state)
    return _log_grad(theta_policy_probs(policy, label), label in policy.fixed, label, action)


def _log_grad(probs: Mapping[str, float], fixed: bool, state: str, action: str) -> float:
    if probs.get(action, 0.0) <= 0.0:
        raise SingularGradientError(f"log-gradient of {action} at {state} is undefined: the action has probability 0")
    if fixed:
        return 0.0
    return 1.0 / probs[LEFT] if action == LEFT else -1.0 / probs[RIGHT]


@frozen
class CriticTable:
    """Tabular state values v(s; w) with step size `beta`. States without an entry, terminals included, are worth 0."""

    values: Mapping[str, float] = field(converter=_freeze_theta)
    beta: float = field(default=0.1, validator=validators.gt(0.0))

    def __getitem__(self, state: StateKey) -> float:
        return self.values.get(label_of(state), 0.0)

    @classmethod
    def zeros(cls, model: TransitionModel, beta: float = 0.1) -> "CriticTable":
        return cls({s.label: 0.0 for s in model.nonterminal_states}, beta)


class StepRecord(NamedTuple):
    state: str
    action: str
    reward: float
    delta: float
    advantage: float
    theta_before: float
    theta_after: float
    v_before: float
    v_after: float
    episode: int = 0


class _Updater:
    """Applies capped, clipped θ updates to a working copy of a policy's parameters."""

    def __init__(self, policy: ThetaPolicy, alpha: float, max_step: float | None):
        if alpha <= 0.0:
            raise PreconditionError(f"alpha must be positive, got {alpha}")
        if max_step is not None and max_step <= 0.0:
            raise PreconditionError(f"max_step must be positive, got {max_step}")
        self.template = policy
        self.theta = dict(policy.theta)
        self.alpha = alpha
        self.max_step = max_step
        self.updates = 0
        self.capped = 0

    @property
    def policy(self) -> ThetaPolicy:
        return self.template.with_theta(self.theta)

    def probs(self, state: str) -> dict[str, float]:
        if state in self.template.fixed:
            return dict(self.template.fixed[state])
        theta = self.theta[state]
        return {LEFT: 0.5 + theta, RIGHT: 0.5 - theta}

    def grad(self, state: str, action: str) -> float:
        return _log_grad(self.probs(state), state in self.template.fixed, state, action)

    def apply(self, state: str, action: str, signal: float) -> tuple[float, float]:
        """θ_s ← clip(θ_s + α·signal·∇ log π(a|s)); returns θ before and after."""
        before = self.theta[state]
        increment = self.alpha * signal * self.grad(state, action)
        self.updates += 1
        if self.max_step is not None and abs(increment) > self.max_step:
            increment = math.copysign(self.max_step, increment)
            self.capped += 1
        after = before if increment == 0.0 else self.template.clip(before + increment)
        self.theta[state] = after
        return before, after

    def report(self, name: str, level: int = logging.WARNING):
        if self.capped:
            logger.log(level, "%s: step cap limited %d of %d updates", name, self.capped, self.updates)


def reinforce_update(
    policy: ThetaPolicy, trajectory: Trajectory, alpha: float, gamma: float, max_step: float | None = None
) -> ThetaPolicy:
    """
    One episode of REINFORCE: θ_{s_t} ← clip(θ_{s_t} + α·G_t·∇ log π(a_t|s_t)) for every step t in order.

    Args:
        policy: Current parameters.
        trajectory: The episode, generated by `policy` or supplied by hand.
        alpha: Step size, positive.
        gamma: Discount factor of the returns G_t.
        max_step: Optional bound on |α·G_t·∇ log π| applied before clipping θ.
    """
    check_gamma(gamma)
    updater = _Updater(policy, alpha, max_step)
    _reinforce_episode(updater, trajectory, gamma)
    updater.report("REINFORCE")
    return updater.policy


def _reinforce_episode(updater: _Updater, trajectory: Trajectory, gamma: float):
    for step_, g in zip(trajectory.steps, returns_to_go(trajectory.rewards, gamma)):
        updater.apply(step_.state.label, step_.action.label, g)


def _starts(env: EnvSpec, starts: Sequence[StateKey] | None) -> list[StateId]:
    return list(env.start_states) if starts is None else [env.model.state(s) for s in starts]


def _sample(
    env: EnvSpec, updater: _Updater, start: StateId, max_steps: int, rng: np.random.Generator
) -> Iterator[tuple[str, str, float, str, bool]]:
    """Yields (s, a, r, s', done), drawing each action from the parameters current at that step."""
    state = start
    for _ in range(max_steps):
        probs = updater.probs(state.label)
        actions = list(probs)
        action = actions[sample_index(rng, [probs[a] for a in actions])]
        next_state, reward, done = step(env, state, action, rng)
        yield state.label, action, reward, next_state.label, done
        if done:
            return
        state = next_state


class ReinforceResult(NamedTuple):
    policy: ThetaPolicy
    history: list[float]


def reinforce(
    env: EnvSpec,
    policy0: ThetaPolicy,
    alpha: float,
    gamma: float,
    episodes: int,
    rng: np.random.Generator,
    starts: Sequence[StateKey] | None = None,
    max_steps: int = 100,
    max_step: float | None = REINFORCE_MAX_STEP,
) -> ReinforceResult:
    """
    Monte Carlo policy gradient without a baseline.

    Each episode is sampled in full from the current parameters, then `reinforce_update` is applied to it.
    `history` holds the discounted return G_0 of every episode.

    Each update is capped at `max_step` (0.05 unless given); None applies the uncapped rule.
    """
    check_gamma(gamma)
    if episodes < 1:
        raise PreconditionError(f"episodes must be at least 1, got {episodes}")
    start_states = _starts(env, starts)
    model = env.model
    updater = _Updater(policy0, alpha, max_step)
    history: list[float] = []
    for episode in range(episodes):
        start = start_states[int(rng.integers(len(start_states)))]
        transitions = list(_sample(env, updater, start, max_steps, rng))
        trajectory = Trajectory.from_labels(model, [(s, a, r) for s, a, r, _, _ in transitions], transitions[-1][3])
        _reinforce_episode(updater, trajectory, gamma)
        history.append(discounted_return(trajectory.rewards, gamma))
        if (episode + 1) % 1000 == 0:
            logger.debug("REINFORCE: episode %d, mean return of the last 1000 %.4f", episode + 1, np.mean(history[-1000:]))
    updater.report("REINFORCE", logging.INFO)
    return ReinforceResult(updater.policy, history)


class UpdateSchedule(Enum):
    """
    `Online` updates the critic and then the actor after every transition, using the TD error as advantage.
    `PaperTrace` works per episode: a first pass applies every critic update, a second pass recomputes the
    advantages from the updated critic and applies the actor updates.
    """

    Online = "online"
    PaperTrace = "paper_trace"


class ActorCriticResult(NamedTuple):
    policy: ThetaPolicy
    critic: CriticTable
    trace: list[StepRecord]


def _advantage(values: Mapping[str, float], state: str, reward: float, next_state: str, done: bool, gamma: float) -> float:
    bootstrap = 0.0 if done else values.get(next_state, 0.0)
    return reward + gamma * bootstrap - values.get(state, 0.0)


def _episodes(
    env: EnvSpec,
    updater: _Updater,
    episodes: int,
    trajectories: Sequence[Trajectory] | None,
    starts: Sequence[StateKey] | None,
    max_steps: int,
    rng: np.random.Generator | None,
) -> Iterator[Iterable[tuple[str, str, float, str, bool]]]:
    model = env.model
    if trajectories is not None:
        for trajectory in trajectories:
            yield [(s.label, a.label, r, nxt.label, model.is_terminal(nxt)) for s, a, r, nxt in trajectory.transitions()]
        return
    if rng is None:
        raise PreconditionError("a random generator is required when no trajectories are supplied")
    start_states = _starts(env, starts)
    for _ in range(episodes):
        start = start_states[int(rng.integers(len(start_states)))]
        yield _sample(env, updater, start, max_steps, rng)


def actor_critic(
    env: EnvSpec,
    policy0: ThetaPolicy,
    critic0: CriticTable,
    alpha: float,
    gamma: float,
    episodes: int = 1,
    rng: np.random.Generator | None = None,
    mode: UpdateSchedule = UpdateSchedule.Online,
    beta: float | None = None,
    trajectories: Sequence[Trajectory] | None = None,
    starts: Sequence[StateKey] | None = None,
    max_steps: int = 100,
    max_step: float | None = None,
) -> ActorCriticResult:
    """
    Tabular actor-critic.

    Args:
        env: Environment to sample from (and to resolve terminal states of supplied trajectories).
        policy0: Initial actor parameters.
        critic0: Initial critic; its `beta` is the critic step size unless `beta` is given.
        alpha: Actor step size.
        gamma: Discount factor.
        episodes: Number of sampled episodes; ignored when `trajectories` is given.
        rng: Random generator, needed only for sampling. Replaying `trajectories` consumes no randomness.
        mode: Update schedule.
        beta: Critic step size override.
        trajectories: Episodes to replay instead of sampling.
        starts: Start states for sampled episodes.
        max_steps: Episode length cap for sampled episodes.
        max_step: Optional bound on the magnitude of one θ increment.

    Returns:
        Final actor, final critic and one `StepRecord` per processed transition.
    """
    check_gamma(gamma)
    beta = critic0.beta if beta is None else beta
    if beta <= 0.0:
        raise PreconditionError(f"beta must be positive, got {beta}")
    updater = _Updater(policy0, alpha, max_step)
    values = dict(critic0.values)
    trace: list[StepRecord] = []
    source = _episodes(env, updater, episodes, trajectories, starts, max_steps, rng)
    for episode, transitions in enumerate(source):
        if mode == UpdateSchedule.Online:
            for s, a, r, nxt, done in transitions:
                v_before = values.get(s, 0.0)
                delta = _advantage(values, s, r, nxt, done, gamma)
                values[s] = v_before + beta * delta
                theta_before, theta_after = updater.apply(s, a, delta)
                trace.append(StepRecord(s, a, r, delta, delta, theta_before, theta_after, v_before, values[s], episode))
        else:
            critic_pass: list[tuple[str, str, float, str, bool, float, float, float]] = []
            for s, a, r, nxt, done in transitions:
                v_before = values.get(s, 0.0)
                delta = _advantage(values, s, r, nxt, done, gamma)
                values[s] = v_before + beta * delta
                critic_pass.append((s, a, r, nxt, done, delta, v_before, values[s]))
            for s, a, r, nxt, done, delta, v_before, v_after in critic_pass:
                advantage = _advantage(values, s, r, nxt, done, gamma)
                theta_before, theta_after = updater.apply(s, a, advantage)
                trace.append(StepRecord(s, a, r, delta, advantage, theta_before, theta_after, v_before, v_after, episode))
        if (episode + 1) % 1000 == 0:
            logger.debug("Actor-critic: episode %d", episode + 1)
    updater.report("Actor-critic")
    return ActorCriticResult(updater.policy, CriticTable(values, beta), trace)


def episode_returns(trace: Sequence[StepRecord], gamma: float) -> list[float]:
    """Discounted return of every episode recorded in an actor-critic trace."""
    rewards: dict[int, list[float]] = {}
    for record in trace:
        rewards.setdefault(record.episode, []).append(record.reward)
    return [discounted_return(rewards[e], gamma) for e in sorted(rewards)]
