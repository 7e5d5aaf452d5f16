import logging
import math
from enum import Enum
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from attrs import field, frozen, validators

from .dp import QTable, ValueTable, greedy_policy
from .environments import EnvSpec, step
from .mdp import StateId, StateKey, TabularPolicy, TransitionModel, Trajectory, discounted_return, sample_action

logger = logging.getLogger(__name__)


class AlphaSchedule(Enum):
    """
    Step size per update of an entry visited N times: the configured constant, 1/N (a plain sample average
    of the targets), or N^-alpha_power.

    With γ=1 and states that revisit each other the error under 1/N decays only polynomially; PowerVisits
    converges within a few hundred thousand visits.
    """

    Constant = "constant"
    InverseVisits = "visits"
    PowerVisits = "power"


_unit = [validators.ge(0.0), validators.le(1.0)]


@frozen(kw_only=True)
class LearningConfig:
    alpha: float = field(default=0.1, validator=[validators.gt(0.0), validators.le(1.0)])
    gamma: float = field(default=1.0, validator=_unit)
    epsilon: float = field(default=0.1, validator=_unit)
    episodes: int = field(default=1000, validator=validators.ge(0))
    max_steps: int = field(default=1000, validator=validators.ge(1))
    seed: int = 0
    epsilon_decay: float | None = field(
        default=None, validator=validators.optional(validators.and_(validators.gt(0.0), validators.le(1.0)))
    )
    alpha_schedule: AlphaSchedule = AlphaSchedule.Constant
    alpha_power: float = field(default=0.9, validator=[validators.gt(0.5), validators.le(1.0)])
    q_init: float = field(default=0.0, converter=float)

    def epsilon_at(self, episode: int) -> float:
        return self.epsilon * (self.epsilon_decay**episode if self.epsilon_decay is not None else 1.0)

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


class _StepSize:
    def __init__(self, config: LearningConfig):
        self.config = config
        self.visits: dict[object, int] = {}

    def __call__(self, key: object) -> float:
        schedule = self.config.alpha_schedule
        if schedule == AlphaSchedule.Constant:
            return self.config.alpha
        n = self.visits[key] = self.visits.get(key, 0) + 1
        return 1.0 / n if schedule == AlphaSchedule.InverseVisits else n**-self.config.alpha_power


def td0_update(
    values: dict[str, float], state: str, reward: float, next_state: str, terminal: bool, alpha: float, gamma: float
) -> float:
    """v(s) ← v(s) + α(r + γ v(s') − v(s)) in place; returns the TD error."""
    bootstrap = 0.0 if terminal else values.get(next_state, 0.0)
    delta = reward + gamma * bootstrap - values.get(state, 0.0)
    values[state] = values.get(state, 0.0) + alpha * delta
    return delta


def sarsa_update(
    q: dict[tuple[str, str], float],
    state: str,
    action: str,
    reward: float,
    next_state: str,
    next_action: str | None,
    alpha: float,
    gamma: float,
) -> float:
    """q(s,a) ← q(s,a) + α(r + γ q(s',a') − q(s,a)); `next_action` is None when s' is terminal."""
    bootstrap = 0.0 if next_action is None else q[next_state, next_action]
    delta = reward + gamma * bootstrap - q[state, action]
    q[state, action] += alpha * delta
    return delta


def q_learning_update(
    q: dict[tuple[str, str], float],
    state: str,
    action: str,
    reward: float,
    next_state: str,
    next_actions: Sequence[str],
    alpha: float,
    gamma: float,
) -> float:
    """q(s,a) ← q(s,a) + α(r + γ max_a' q(s',a') − q(s,a)); an empty `next_actions` marks a terminal s'."""
    bootstrap = max((q[next_state, a] for a in next_actions), default=0.0)
    delta = reward + gamma * bootstrap - q[state, action]
    q[state, action] += alpha * delta
    return delta


def expected_td_update(
    model: TransitionModel, policy: TabularPolicy, values: ValueTable, gamma: float, state: StateKey
) -> float:
    """E[r + γ v(s') − v(s)] at `state`, enumerated exactly over π and p(s',r|s,a)."""
    s = model.state(state)
    v_s = values.get(s, 0.0) or 0.0
    total: list[float] = []
    for a, pa in policy.distribution(s).items():
        for o in model.outcomes(s, a):
            bootstrap = 0.0 if model.is_terminal(o.next_state) else (values.get(o.next_state, 0.0) or 0.0)
            total.append(pa * o.probability * (o.reward + gamma * bootstrap - v_s))
    return math.fsum(total)


class TDEvaluation(NamedTuple):
    values: ValueTable
    episode_returns: list[float]


def _starts(env: EnvSpec, starts: Sequence[StateKey] | None) -> list[StateId]:
    return list(env.start_states) if starts is None else [env.model.state(s) for s in starts]


def td0_evaluate(
    env: EnvSpec,
    policy: TabularPolicy,
    config: LearningConfig,
    starts: Sequence[StateKey] | None = None,
    rng: np.random.Generator | None = None,
) -> TDEvaluation:
    """
    TD(0) evaluation of `policy` from zero-initialized values, one update per transition.

    Start states are drawn uniformly from `starts` (the environment's start states by default); the
    generator defaults to one seeded with `config.seed`.
    """
    model = env.model
    rng = config.rng() if rng is None else rng
    start_states = _starts(env, starts)
    values = {s.label: 0.0 for s in model.states}
    step_size = _StepSize(config)
    episode_returns: list[float] = []
    for _ in range(config.episodes):
        state = start_states[int(rng.integers(len(start_states)))]
        rewards: list[float] = []
        for _ in range(config.max_steps):
            action = sample_action(policy, model, state, rng)
            next_state, reward, done = step(env, state, action, rng)
            td0_update(values, state.label, reward, next_state.label, done, step_size(state.label), config.gamma)
            rewards.append(reward)
            state = next_state
            if done:
                break
        episode_returns.append(discounted_return(rewards, config.gamma))
    return TDEvaluation(ValueTable(values), episode_returns)


def td0_replay(env: EnvSpec, trajectories: Iterable[Trajectory], config: LearningConfig) -> ValueTable:
    """Applies the TD(0) update along supplied episodes, starting from zero values."""
    values = {s.label: 0.0 for s in env.model.states}
    step_size = _StepSize(config)
    for trajectory in trajectories:
        for s, _, r, s_next in trajectory.transitions():
            td0_update(values, s.label, r, s_next.label, env.model.is_terminal(s_next), step_size(s.label), config.gamma)
    return ValueTable(values)


class ControlResult(NamedTuple):
    q: QTable
    policy: TabularPolicy
    episode_returns: list[float]


def _epsilon_greedy(
    q: dict[tuple[str, str], float], state: str, actions: Sequence[str], epsilon: float, rng: np.random.Generator
) -> str:
    if epsilon > 0.0 and rng.random() < epsilon:
        return actions[int(rng.integers(len(actions)))]
    best = actions[0]
    for a in actions[1:]:
        if q[state, a] > q[state, best]:
            best = a
    return best


def _control(
    env: EnvSpec,
    config: LearningConfig,
    starts: Sequence[StateKey] | None,
    rng: np.random.Generator | None,
    on_policy: bool,
) -> ControlResult:
    model = env.model
    rng = config.rng() if rng is None else rng
    start_states = _starts(env, starts)
    q = {(s.label, a.label): config.q_init for s in model.nonterminal_states for a in model.actions_at(s)}
    actions = {s.label: [a.label for a in model.actions_at(s)] for s in model.nonterminal_states}
    step_size = _StepSize(config)
    episode_returns: list[float] = []
    for episode in range(config.episodes):
        epsilon = config.epsilon_at(episode)
        state = start_states[int(rng.integers(len(start_states)))].label
        action = _epsilon_greedy(q, state, actions[state], epsilon, rng)
        rewards: list[float] = []
        for _ in range(config.max_steps):
            next_id, reward, done = step(env, state, action, rng)
            next_state = next_id.label
            rewards.append(reward)
            alpha = step_size((state, action))
            if on_policy:
                next_action = None if done else _epsilon_greedy(q, next_state, actions[next_state], epsilon, rng)
                sarsa_update(q, state, action, reward, next_state, next_action, alpha, config.gamma)
            else:
                next_actions = [] if done else actions[next_state]
                q_learning_update(q, state, action, reward, next_state, next_actions, alpha, config.gamma)
                next_action = None if done else _epsilon_greedy(q, next_state, actions[next_state], epsilon, rng)
            if next_action is None:
                break
            state, action = next_state, next_action
        episode_returns.append(discounted_return(rewards, config.gamma))
        if (episode + 1) % 1000 == 0:
            logger.debug("%s: episode %d, epsilon=%.4f", "SARSA" if on_policy else "Q-learning", episode + 1, epsilon)
    table = QTable(q, model.terminals)
    return ControlResult(table, greedy_policy(table), episode_returns)


def sarsa(
    env: EnvSpec, config: LearningConfig, starts: Sequence[StateKey] | None = None, rng: np.random.Generator | None = None
) -> ControlResult:
    """
    On-policy TD control with ε-greedy behavior; each update bootstraps from the action actually chosen at s'.

    ε decays multiplicatively per episode when `config.epsilon_decay` is set.
    """
    return _control(env, config, starts, rng, on_policy=True)


def q_learning(
    env: EnvSpec, config: LearningConfig, starts: Sequence[StateKey] | None = None, rng: np.random.Generator | None = None
) -> ControlResult:
    """Off-policy TD control: ε-greedy behavior, max-backup target."""
    return _control(env, config, starts, rng, on_policy=False)
