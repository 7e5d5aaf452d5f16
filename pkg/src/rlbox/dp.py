import logging
import math
from collections import deque
from types import MappingProxyType
from typing import Callable, Iterable, Mapping, NamedTuple

import numpy as np
from attrs import field, frozen

from .errors import ImproperPolicyError, PreconditionError
from .mdp import (
    ActionId,
    StateId,
    StateKey,
    TabularPolicy,
    TransitionModel,
    check_gamma,
    label_of,
    validate_policy,
)

logger = logging.getLogger(__name__)

RESIDUAL_TOLERANCE = 1e-9


def _freeze_values(values: Mapping[str, float]) -> Mapping[str, float]:
    return MappingProxyType({label_of(s): float(v) for s, v in values.items()})


def _check_finite(_: object, attribute: object, values: Mapping[str, float]):
    bad = [s for s, v in values.items() if not math.isfinite(v)]
    if bad:
        raise ValueError(f"values must be finite, got non-finite entries for {bad}")


@frozen(eq=False)
class ValueTable:
    """State values keyed by label. Terminal states hold exactly 0; states an estimator never saw are absent."""

    values: Mapping[str, float] = field(converter=_freeze_values, validator=_check_finite)

    def __getitem__(self, state: StateKey) -> float:
        return self.values[label_of(state)]

    def get(self, state: StateKey, default: float | None = None) -> float | None:
        return self.values.get(label_of(state), default)

    def __contains__(self, state: object) -> bool:
        return isinstance(state, (str, StateId)) and label_of(state) in self.values

    def __len__(self) -> int:
        return len(self.values)

    def as_dict(self) -> dict[str, float]:
        return dict(self.values)

    def as_array(self, model: TransitionModel) -> np.ndarray:
        """Values in model state order; terminals missing from the table count as 0."""
        res = np.zeros(len(model.states))
        for s in model.states:
            if s.label in self.values:
                res[s.index] = self.values[s.label]
            elif not model.is_terminal(s):
                raise PreconditionError(f"value table has no entry for non-terminal state {s.label}")
        return res

    @classmethod
    def from_array(cls, model: TransitionModel, values: np.ndarray) -> "ValueTable":
        return cls({s.label: 0.0 if model.is_terminal(s) else float(values[s.index]) for s in model.states})

    def max_abs_diff(self, other: "ValueTable") -> float:
        keys = set(self.values) | set(other.values)
        return max((abs(self.values.get(k, 0.0) - other.values.get(k, 0.0)) for k in keys), default=0.0)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ValueTable):
            return NotImplemented
        return dict(self.values) == dict(other.values)

    __hash__ = None  # type: ignore[assignment]


def _freeze_q(values: Mapping[tuple[str, str], float]) -> Mapping[tuple[str, str], float]:
    return MappingProxyType({(label_of(s), label_of(a)): float(v) for (s, a), v in values.items()})


@frozen(eq=False)
class QTable:
    """
    Action values for the non-terminal (state, action) pairs of a model, in model order.

    Terminal states have no rows; `state_max` treats them as worth 0, which is the structural terminal
    bootstrap of every TD-style backup.
    """

    values: Mapping[tuple[str, str], float] = field(converter=_freeze_q)
    terminals: frozenset[str] = field(factory=frozenset, converter=frozenset)

    def __getitem__(self, key: tuple[StateKey, str | ActionId]) -> float:
        s, a = key
        return self.values[label_of(s), label_of(a)]

    def rows(self) -> dict[str, dict[str, float]]:
        res: dict[str, dict[str, float]] = {}
        for (s, a), v in self.values.items():
            res.setdefault(s, {})[a] = v
        return res

    def row(self, state: StateKey) -> dict[str, float]:
        label = label_of(state)
        return {a: v for (s, a), v in self.values.items() if s == label}

    def state_max(self, state: StateKey) -> float:
        if label_of(state) in self.terminals:
            return 0.0
        return max(self.row(state).values())

    def as_dict(self) -> dict[str, dict[str, float]]:
        return self.rows()

    @classmethod
    def zeros(cls, model: TransitionModel, init: float = 0.0) -> "QTable":
        return cls(
            {(s.label, a.label): init for s in model.nonterminal_states for a in model.actions_at(s)},
            model.terminals,
        )


class _Compiled(NamedTuple):
    """Array view of a model: one row per non-terminal (state, action) pair, grouped by state."""

    pairs: list[tuple[StateId, ActionId]]
    transition: np.ndarray  # (pairs, states): p(s'|s,a)
    reward: np.ndarray  # (pairs,): expected immediate reward
    blocks: np.ndarray  # first pair row of every non-terminal state
    nonterminal: np.ndarray  # state indices matching `blocks`


def _compile(model: TransitionModel) -> _Compiled:
    pairs: list[tuple[StateId, ActionId]] = []
    blocks: list[int] = []
    nonterminal: list[int] = []
    for s in model.nonterminal_states:
        blocks.append(len(pairs))
        nonterminal.append(s.index)
        pairs.extend((s, a) for a in model.actions_at(s))
    transition = np.zeros((len(pairs), len(model.states)))
    reward = np.zeros(len(pairs))
    for row, (s, a) in enumerate(pairs):
        for o in model.outcomes(s, a):
            transition[row, model.state(o.next_state).index] += o.probability
            reward[row] += o.probability * o.reward
    return _Compiled(pairs, transition, reward, np.array(blocks, dtype=int), np.array(nonterminal, dtype=int))


def _policy_arrays(model: TransitionModel, policy: TabularPolicy) -> tuple[np.ndarray, np.ndarray]:
    """P_π (states × states) and r_π (states); terminal rows are zero."""
    n = len(model.states)
    transition = np.zeros((n, n))
    reward = np.zeros(n)
    for s in model.nonterminal_states:
        for a_label, pa in policy.distribution(s).items():
            if pa == 0.0:
                continue
            for o in model.outcomes(s, a_label):
                transition[s.index, model.state(o.next_state).index] += pa * o.probability
                reward[s.index] += pa * o.probability * o.reward
    return transition, reward


def _check_policy(model: TransitionModel, policy: TabularPolicy):
    report = validate_policy(policy, model)
    if report:
        raise PreconditionError(f"invalid policy: {report}")


def _reachable(start: Iterable[int], edges: list[list[int]]) -> set[int]:
    seen = set(start)
    queue = deque(seen)
    while queue:
        node = queue.popleft()
        for nxt in edges[node]:
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return seen


def _improper_analysis(model: TransitionModel, transition: np.ndarray) -> tuple[list[int], list[int]]:
    """(recurrent class, improper states) of the Markov chain `transition`; both empty for a proper policy."""
    n = len(model.states)
    successors = [list(np.nonzero(transition[i] > 0.0)[0]) for i in range(n)]
    predecessors: list[list[int]] = [[] for _ in range(n)]
    for i, succ in enumerate(successors):
        for j in succ:
            predecessors[j].append(i)
    terminals = [s.index for s in model.states if model.is_terminal(s)]
    can_finish = _reachable(terminals, predecessors)
    stuck = [s.index for s in model.nonterminal_states if s.index not in can_finish]
    if not stuck:
        return [], []
    improper = _reachable(stuck, predecessors)
    # descend to a closed class: a state every reachable state can return to
    node = stuck[0]
    while True:
        reach = _reachable([node], successors)
        escape = next((x for x in sorted(reach) if node not in _reachable([x], successors)), None)
        if escape is None:
            return sorted(reach), sorted(improper)
        node = escape


def improper_states(model: TransitionModel, policy: TabularPolicy) -> frozenset[str]:
    """Labels of the states from which `policy` does not reach a terminal state with probability 1."""
    transition, _ = _policy_arrays(model, policy)
    _, improper = _improper_analysis(model, transition)
    return frozenset(model.states[i].label for i in improper)


def _raise_if_improper(model: TransitionModel, transition: np.ndarray):
    recurrent, improper = _improper_analysis(model, transition)
    if improper:
        raise ImproperPolicyError(
            [model.states[i].label for i in recurrent], [model.states[i].label for i in improper]
        )


def _solve(
    model: TransitionModel, transition: np.ndarray, reward: np.ndarray, gamma: float, excluded: Iterable[int] = ()
) -> np.ndarray:
    excluded = set(excluded)
    active = np.array([s.index for s in model.nonterminal_states if s.index not in excluded], dtype=int)
    values = np.zeros(len(model.states))
    if excluded:
        values[list(excluded)] = -np.inf
    if active.size:
        block = transition[np.ix_(active, active)]
        values[active] = np.linalg.solve(np.eye(active.size) - gamma * block, reward[active])
        residual = np.max(np.abs(values[active] - (reward[active] + gamma * block @ values[active])))
        if residual > RESIDUAL_TOLERANCE:
            logger.warning("Bellman residual %.3g exceeds %.0e after the linear solve", residual, RESIDUAL_TOLERANCE)
    return values


def analytic_policy_evaluation(model: TransitionModel, policy: TabularPolicy, gamma: float | None = None) -> ValueTable:
    """
    Solves v = r_π + γ P_π v exactly, with terminal states pinned to 0.

    Args:
        model: The environment dynamics.
        policy: A valid policy for `model`.
        gamma: Discount factor, defaults to the model's `gamma_default`.

    Returns:
        The value of every state under `policy`.

    Raises:
        PreconditionError: invalid policy or gamma.
        ImproperPolicyError: gamma is 1 and the policy can get trapped in a non-terminal class.
    """
    gamma = model.gamma_default if gamma is None else gamma
    check_gamma(gamma)
    _check_policy(model, policy)
    transition, reward = _policy_arrays(model, policy)
    if gamma == 1.0:
        _raise_if_improper(model, transition)
    return ValueTable.from_array(model, _solve(model, transition, reward, gamma))


def bellman_residual(model: TransitionModel, policy: TabularPolicy, values: ValueTable, gamma: float) -> float:
    """max_s |v(s) − Σ_a π(a|s) Σ p(s',r|s,a)[r + γ v(s')]| over non-terminal states."""
    transition, reward = _policy_arrays(model, policy)
    v = values.as_array(model)
    nonterminal = [s.index for s in model.nonterminal_states]
    if not nonterminal:
        return 0.0
    return float(np.max(np.abs(v[nonterminal] - (reward + gamma * transition @ v)[nonterminal])))


class Evaluation(NamedTuple):
    values: ValueTable
    sweeps: int
    converged: bool


def iterative_policy_evaluation(
    model: TransitionModel,
    policy: TabularPolicy,
    gamma: float | None = None,
    tol: float = 1e-10,
    max_sweeps: int = 10_000,
    v0: ValueTable | None = None,
) -> Evaluation:
    """
    Synchronous Bellman expectation backups until the sup-norm change drops below `tol` or `max_sweeps` is hit.

    The start table defaults to all zeros. A run that hits the cap returns its last table with
    `converged=False`.
    """
    gamma = model.gamma_default if gamma is None else gamma
    check_gamma(gamma)
    if tol <= 0.0:
        raise PreconditionError(f"tol must be positive, got {tol}")
    if max_sweeps < 1:
        raise PreconditionError(f"max_sweeps must be at least 1, got {max_sweeps}")
    _check_policy(model, policy)
    transition, reward = _policy_arrays(model, policy)
    if gamma == 1.0:
        _raise_if_improper(model, transition)
    nonterminal = np.array([s.index for s in model.nonterminal_states], dtype=int)
    v = np.zeros(len(model.states)) if v0 is None else v0.as_array(model)
    for sweep in range(1, max_sweeps + 1):
        new_v = np.zeros_like(v)
        new_v[nonterminal] = (reward + gamma * transition @ v)[nonterminal]
        delta = float(np.max(np.abs(new_v - v))) if nonterminal.size else 0.0
        v = new_v
        logger.debug("Policy evaluation sweep %d: delta=%.3g", sweep, delta)
        if delta < tol:
            logger.info("Policy evaluation converged after %d sweeps", sweep)
            return Evaluation(ValueTable.from_array(model, v), sweep, True)
    logger.warning("Policy evaluation did not converge within %d sweeps", max_sweeps)
    return Evaluation(ValueTable.from_array(model, v), max_sweeps, False)


def _q_array(compiled: _Compiled, v: np.ndarray, gamma: float) -> np.ndarray:
    if gamma == 0.0:
        return compiled.reward.copy()
    # improper states carry -inf; 0·(-inf) must not poison rows that never reach them
    with np.errstate(invalid="ignore"):
        weighted = np.where(compiled.transition > 0.0, compiled.transition * v, 0.0)
    return compiled.reward + gamma * weighted.sum(axis=1)


def q_from_v(model: TransitionModel, v: ValueTable, gamma: float | None = None) -> QTable:
    """One-step lookahead q(s,a) = Σ p(s',r|s,a)[r + γ v(s')] for every non-terminal (s, a)."""
    gamma = model.gamma_default if gamma is None else gamma
    check_gamma(gamma)
    compiled = _compile(model)
    q = _q_array(compiled, v.as_array(model), gamma)
    return QTable({(s.label, a.label): float(q[i]) for i, (s, a) in enumerate(compiled.pairs)}, model.terminals)


def _first_best(values: Iterable[float], tol: float) -> int:
    values = list(values)
    best = max(values)
    return next(i for i, x in enumerate(values) if x >= best - tol)


def greedy_policy(q: QTable, tol: float = 1e-9) -> TabularPolicy:
    """
    Deterministic policy with probability 1 on argmax_a q(s,a).

    Values within `tol` of the maximum count as ties, and ties go to the action listed first in the table
    (the model's action order).
    """
    probs: dict[str, dict[str, float]] = {}
    for s, row in q.rows().items():
        actions = list(row)
        best = actions[_first_best(row.values(), tol)]
        probs[s] = {a: 1.0 if a == best else 0.0 for a in actions}
    for s in q.terminals:
        probs[s] = {}
    return TabularPolicy(probs)


def greedy_actions(q: QTable, tol: float = 1e-9) -> dict[str, frozenset[str]]:
    """All actions within `tol` of the best one, per state."""
    res: dict[str, frozenset[str]] = {}
    for s, row in q.rows().items():
        best = max(row.values())
        res[s] = frozenset(a for a, x in row.items() if x >= best - tol)
    return res


class PolicyIterationResult(NamedTuple):
    policy: TabularPolicy
    values: ValueTable
    iterations: int
    # value arrays (model state order) of every evaluated policy; improper states are -inf
    history: tuple[np.ndarray, ...]


def _evaluate_for_improvement(model: TransitionModel, policy: TabularPolicy, gamma: float) -> np.ndarray:
    transition, reward = _policy_arrays(model, policy)
    improper: list[int] = []
    if gamma == 1.0:
        _, improper = _improper_analysis(model, transition)
        if improper:
            logger.warning(
                "Policy never terminates from %s; evaluating those states as -inf",
                ", ".join(model.states[i].label for i in improper),
            )
    return _solve(model, transition, reward, gamma, excluded=improper)


def _deterministic_choice(policy: TabularPolicy, state: StateId) -> str | None:
    row = policy.distribution(state)
    chosen = [a for a, p in row.items() if p == 1.0]
    return chosen[0] if len(chosen) == 1 else None


def policy_iteration(
    model: TransitionModel,
    gamma: float | None = None,
    tol: float = 1e-10,
    policy0: TabularPolicy | None = None,
    max_iterations: int = 1000,
) -> PolicyIterationResult:
    """
    Alternates exact evaluation and greedy improvement until the policy is stable.

    An improper intermediate policy at gamma=1 is evaluated pessimistically: states without certain
    termination are worth -inf, the rest are solved exactly. Improvement keeps the current action of a
    state while it is within `tol` of the best one, so ties never cycle.

    Args:
        model: The environment dynamics.
        gamma: Discount factor, defaults to the model's `gamma_default`.
        tol: Tie tolerance of the improvement step.
        policy0: Start policy, uniform over each state's actions by default.
        max_iterations: Cap on evaluation/improvement rounds.

    Returns:
        The stable policy, its values, the number of rounds and the value history.

    Raises:
        ImproperPolicyError: the stable policy still cannot terminate from some state.
    """
    gamma = model.gamma_default if gamma is None else gamma
    check_gamma(gamma)
    policy = TabularPolicy.uniform(model) if policy0 is None else policy0
    _check_policy(model, policy)
    compiled = _compile(model)
    history: list[np.ndarray] = []
    v = np.zeros(len(model.states))
    iteration = 0
    for iteration in range(1, max_iterations + 1):
        v = _evaluate_for_improvement(model, policy, gamma)
        history.append(v)
        q = _q_array(compiled, v, gamma)
        choices: dict[str, str] = {}
        stable = True
        for block, start in enumerate(compiled.blocks):
            end = compiled.blocks[block + 1] if block + 1 < len(compiled.blocks) else len(compiled.pairs)
            state = compiled.pairs[start][0]
            labels = [a.label for _, a in compiled.pairs[start:end]]
            values = q[start:end]
            best = float(np.max(values))
            current = _deterministic_choice(policy, state)
            if current in labels and values[labels.index(current)] >= best - tol:
                choices[state.label] = current
            else:
                choices[state.label] = labels[_first_best(values, tol)]
                stable = False
        logger.debug("Policy iteration round %d: %s", iteration, choices)
        if stable:
            break
        policy = TabularPolicy.deterministic(model, choices)
    else:
        logger.warning("Policy iteration did not stabilize within %d rounds", max_iterations)
    if not np.all(np.isfinite(v)):
        transition, _ = _policy_arrays(model, policy)
        _raise_if_improper(model, transition)
    logger.info("Policy iteration stable after %d rounds", iteration)
    return PolicyIterationResult(policy, ValueTable.from_array(model, v), iteration, tuple(history))


class ValueIterationResult(NamedTuple):
    values: ValueTable
    policy: TabularPolicy
    sweeps: int
    converged: bool
    deltas: tuple[float, ...]


def value_iteration(
    model: TransitionModel,
    gamma: float | None = None,
    tol: float = 1e-10,
    max_sweeps: int = 10_000,
    v0: ValueTable | None = None,
) -> ValueIterationResult:
    """
    Synchronous max-backups v(s) <- max_a Σ p(s',r|s,a)[r + γ v(s')] until the sup-norm change is below `tol`.

    The greedy policy is extracted from the final table. `deltas` holds the change of every sweep.
    """
    gamma = model.gamma_default if gamma is None else gamma
    check_gamma(gamma)
    if tol <= 0.0:
        raise PreconditionError(f"tol must be positive, got {tol}")
    if max_sweeps < 1:
        raise PreconditionError(f"max_sweeps must be at least 1, got {max_sweeps}")
    compiled = _compile(model)
    v = np.zeros(len(model.states)) if v0 is None else v0.as_array(model)
    deltas: list[float] = []
    converged = False
    sweep = 0
    for sweep in range(1, max_sweeps + 1):
        new_v = np.zeros_like(v)
        if compiled.nonterminal.size:
            q = compiled.reward + gamma * compiled.transition @ v
            new_v[compiled.nonterminal] = np.maximum.reduceat(q, compiled.blocks)
        delta = float(np.max(np.abs(new_v - v))) if compiled.nonterminal.size else 0.0
        deltas.append(delta)
        v = new_v
        logger.debug("Value iteration sweep %d: delta=%.3g", sweep, delta)
        if delta < tol:
            converged = True
            break
    if converged:
        logger.info("Value iteration converged after %d sweeps", sweep)
    else:
        logger.warning("Value iteration did not converge within %d sweeps", max_sweeps)
    values = ValueTable.from_array(model, v)
    return ValueIterationResult(values, greedy_policy(q_from_v(model, values, gamma)), sweep, converged, tuple(deltas))


class FixedPointResult(NamedTuple):
    x: float
    iterations: int
    converged: bool


def fixed_point(f: Callable[[float], float], x0: float, tol: float = 1e-12, max_iter: int = 1000) -> FixedPointResult:
    """Iterates x_{k+1} = f(x_k) until |x_{k+1} − x_k| < tol or `max_iter` iterations."""
    if tol <= 0.0:
        raise PreconditionError(f"tol must be positive, got {tol}")
    x = x0
    for k in range(1, max_iter + 1):
        x_next = f(x)
        if abs(x_next - x) < tol:
            return FixedPointResult(x_next, k, True)
        x = x_next
    return FixedPointResult(x, max_iter, False)
