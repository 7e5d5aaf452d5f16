"""Model-free policy evaluation by averaging sampled returns (first-visit and every-visit)."""

import logging
from enum import Enum
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from attrs import Factory, define

from .dp import ValueTable
from .environments import EnvSpec
from .errors import PreconditionError
from .mdp import StateKey, TabularPolicy, TransitionModel, Trajectory, check_gamma, returns_to_go, rollout

logger = logging.getLogger(__name__)


class VisitMode(Enum):
    """Which occurrences of a state inside one episode contribute a return."""

    First = "first"
    Every = "every"


@define
class ReturnAccumulator:
    """Running sums and counts N(s) of qualifying returns per state."""

    sums: dict[str, float] = Factory(dict)
    counts: dict[str, int] = Factory(dict)

    def add(self, state: str, g: float):
        self.sums[state] = self.sums.get(state, 0.0) + g
        self.counts[state] = self.counts.get(state, 0) + 1

    def add_episode(self, trajectory: Trajectory, gamma: float, mode: VisitMode):
        returns = returns_to_go(trajectory.rewards, gamma)
        seen: set[str] = set()
        for step, g in zip(trajectory.steps, returns):
            label = step.state.label
            if mode == VisitMode.First and label in seen:
                continue
            seen.add(label)
            self.add(label, g)

    def merge(self, other: "ReturnAccumulator") -> "ReturnAccumulator":
        res = ReturnAccumulator(dict(self.sums), dict(self.counts))
        for s, total in other.sums.items():
            res.sums[s] = res.sums.get(s, 0.0) + total
            res.counts[s] = res.counts.get(s, 0) + other.counts[s]
        return res

    def estimates(self) -> ValueTable:
        return ValueTable({s: self.sums[s] / n for s, n in self.counts.items() if n > 0})


class MCEstimate(NamedTuple):
    values: ValueTable
    visited: frozenset[str]
    counts: dict[str, int]
    empty: bool


def _estimate(acc: ReturnAccumulator) -> MCEstimate:
    values = acc.estimates()
    if not values:
        logger.warning("Monte Carlo evaluation visited no state")
    return MCEstimate(values, frozenset(values.values), dict(acc.counts), not values)


def mc_replay(trajectories: Iterable[Trajectory], gamma: float, mode: VisitMode = VisitMode.First) -> MCEstimate:
    """Estimates state values from the supplied episodes, without sampling."""
    check_gamma(gamma)
    acc = ReturnAccumulator()
    for trajectory in trajectories:
        acc.add_episode(trajectory, gamma, mode)
    return _estimate(acc)


def mc_evaluate(
    source: EnvSpec | TransitionModel,
    policy: TabularPolicy,
    gamma: float,
    episodes: int,
    mode: VisitMode = VisitMode.First,
    starts: Sequence[StateKey] | None = None,
    max_steps: int = 1000,
    rng: np.random.Generator | None = None,
) -> MCEstimate:
    """
    Samples `episodes` episodes under `policy` and averages the returns that follow each state.

    Args:
        source: An environment or a bare transition model.
        policy: Valid policy for the model.
        gamma: Discount factor.
        episodes: Number of episodes, at least 1.
        mode: First-visit or every-visit averaging.
        starts: Start states, drawn uniformly; defaults to the environment's start states (every
            non-terminal state of a bare model).
        max_steps: Episode length cap.
        rng: Random generator; a fresh unseeded one when omitted.

    Returns:
        Estimates for visited states only, the visited set, visit counts and an `empty` flag.
    """
    check_gamma(gamma)
    if episodes < 1:
        raise PreconditionError(f"episodes must be at least 1, got {episodes}")
    model = source.model if isinstance(source, EnvSpec) else source
    if starts is None:
        start_states = list(source.start_states) if isinstance(source, EnvSpec) else list(model.nonterminal_states)
    else:
        start_states = [model.state(s) for s in starts]
    rng = np.random.default_rng() if rng is None else rng
    acc = ReturnAccumulator()
    for episode in range(episodes):
        start = start_states[int(rng.integers(len(start_states)))]
        acc.add_episode(rollout(model, policy, start, max_steps, rng), gamma, mode)
        if (episode + 1) % 10_000 == 0:
            logger.debug("Monte Carlo: %d/%d episodes", episode + 1, episodes)
    return _estimate(acc)
