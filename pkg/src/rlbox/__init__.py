from .dp import (
    QTable,
    ValueTable,
    analytic_policy_evaluation,
    fixed_point,
    greedy_policy,
    improper_states,
    iterative_policy_evaluation,
    policy_iteration,
    q_from_v,
    value_iteration,
)
from .environments import ENV_NAMES, EnvSpec, builtin_policy, make_env, step
from .errors import ImproperPolicyError, ModelError, PreconditionError, SingularGradientError, UnknownNameError
from .mc import VisitMode, mc_evaluate, mc_replay
from .mdp import ActionId, StateId, TabularPolicy, TransitionModel, Trajectory, discounted_return, returns_to_go, rollout
from .pg import CriticTable, ThetaMode, ThetaPolicy, UpdateSchedule, actor_critic, reinforce
from .quantum import GaussianActor, QubitState, Unitary2, fidelity, rx, train_qubit_controller
from .td import LearningConfig, q_learning, sarsa, td0_evaluate
