"""Single-qubit X rotations and a Gaussian-policy controller that learns the rotation angle."""

import cmath
import logging
import math
from typing import NamedTuple

import numpy as np
from attrs import evolve, field, frozen, validators

from .errors import PreconditionError

logger = logging.getLogger(__name__)

NORM_TOLERANCE = 1e-12
UNITARY_TOLERANCE = 1e-12
DRIFT_TOLERANCE = 1e-9

TWO_PI = 2.0 * math.pi
LOG_SIGMA_MIN = math.log(1e-4)
LOG_SIGMA_MAX = math.log(TWO_PI)


def _check_norm(instance: "QubitState", attribute: object, value: complex):
    norm2 = abs(instance.amp0) ** 2 + abs(instance.amp1) ** 2
    if abs(norm2 - 1.0) > NORM_TOLERANCE:
        raise PreconditionError(f"qubit state must be normalized, |amp0|^2 + |amp1|^2 = {norm2!r}")


@frozen
class QubitState:
    amp0: complex = field(converter=complex)
    amp1: complex = field(converter=complex, validator=_check_norm)

    @classmethod
    def zero(cls) -> "QubitState":
        return cls(1.0, 0.0)

    @classmethod
    def one(cls) -> "QubitState":
        return cls(0.0, 1.0)

    @classmethod
    def plus(cls) -> "QubitState":
        return cls(1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0))

    @classmethod
    def from_array(cls, amplitudes: np.ndarray) -> "QubitState":
        return cls(complex(amplitudes[0]), complex(amplitudes[1]))

    def as_array(self) -> np.ndarray:
        return np.array([self.amp0, self.amp1], dtype=complex)


def _as_matrix(value: np.ndarray) -> np.ndarray:
    matrix = np.array(value, dtype=complex)
    matrix.setflags(write=False)
    return matrix


def _check_unitary(instance: "Unitary2", attribute: object, matrix: np.ndarray):
    if matrix.shape != (2, 2):
        raise PreconditionError(f"expected a 2x2 matrix, got shape {matrix.shape}")
    error = np.max(np.abs(matrix.conj().T @ matrix - np.eye(2)))
    if error > UNITARY_TOLERANCE:
        raise PreconditionError(f"matrix is not unitary: max |U†U − I| = {error!r}")


@frozen(eq=False)
class Unitary2:
    matrix: np.ndarray = field(converter=_as_matrix, validator=_check_unitary)

    @classmethod
    def identity(cls) -> "Unitary2":
        return cls(np.eye(2))

    def adjoint(self) -> "Unitary2":
        return Unitary2(self.matrix.conj().T)

    def __matmul__(self, other: "Unitary2") -> "Unitary2":
        return Unitary2(self.matrix @ other.matrix)

    def allclose(self, other: "Unitary2", atol: float = UNITARY_TOLERANCE) -> bool:
        return bool(np.allclose(self.matrix, other.matrix, rtol=0.0, atol=atol))


def rx(theta: float) -> Unitary2:
    """exp(−i θ/2 σx) = [[cos θ/2, −i sin θ/2], [−i sin θ/2, cos θ/2]]."""
    if not math.isfinite(theta):
        raise PreconditionError(f"rotation angle must be finite, got {theta}")
    c = math.cos(theta / 2.0)
    s = math.sin(theta / 2.0)
    return Unitary2(np.array([[c, -1j * s], [-1j * s, c]]))


def apply(unitary: Unitary2, psi: QubitState) -> QubitState:
    out = unitary.matrix @ psi.as_array()
    norm = float(np.linalg.norm(out))
    if abs(norm - 1.0) > DRIFT_TOLERANCE:
        raise RuntimeError(f"norm drifted to {norm!r} after applying a unitary")
    return QubitState.from_array(out / norm)


def fidelity(psi: QubitState, target: QubitState) -> float:
    """|⟨target|psi⟩|², clipped to [0, 1]."""
    overlap = np.vdot(target.as_array(), psi.as_array())
    return min(max(float(abs(overlap) ** 2), 0.0), 1.0)


def bloch(psi: QubitState) -> tuple[float, float, float]:
    cross = psi.amp0.conjugate() * psi.amp1
    return 2.0 * cross.real, 2.0 * cross.imag, abs(psi.amp0) ** 2 - abs(psi.amp1) ** 2


def wrap_angle(theta: float) -> float:
    res = math.fmod(theta, TWO_PI)
    if res < 0.0:
        res += TWO_PI
    return 0.0 if res >= TWO_PI else res


def _finite(instance: object, attribute: object, value: float):
    if not math.isfinite(value):
        raise PreconditionError(f"{getattr(attribute, 'name', 'value')} must be finite, got {value}")


@frozen(kw_only=True)
class GaussianActor:
    """Gaussian policy over the rotation angle, Normal(mu, exp(log_sigma)²), plus a scalar critic `baseline`."""

    mu: float = field(default=0.0, converter=wrap_angle)
    log_sigma: float = field(default=0.0, validator=_finite)
    baseline: float = field(default=0.0, validator=_finite)
    alpha: float = field(default=0.05, validator=validators.gt(0.0))
    beta: float = field(default=0.1, validator=validators.gt(0.0))

    @property
    def sigma(self) -> float:
        return math.exp(self.log_sigma)

    @classmethod
    def create(cls, sigma0: float = 1.0, **kwargs: float) -> "GaussianActor":
        if sigma0 <= 0.0:
            raise PreconditionError(f"sigma0 must be positive, got {sigma0}")
        return cls(log_sigma=math.log(sigma0), **kwargs)


def gaussian_log_prob(actor: GaussianActor, theta: float) -> float:
    z = (theta - actor.mu) / actor.sigma
    return -0.5 * z * z - actor.log_sigma - 0.5 * math.log(TWO_PI)


def gaussian_log_prob_grad(actor: GaussianActor, theta: float) -> tuple[float, float]:
    """(∂/∂mu, ∂/∂log_sigma) of `gaussian_log_prob` at `theta`."""
    sigma2 = actor.sigma**2
    d = theta - actor.mu
    return d / sigma2, d * d / sigma2 - 1.0


def circular_mean(angles: np.ndarray) -> float:
    return wrap_angle(math.atan2(float(np.mean(np.sin(angles))), float(np.mean(np.cos(angles)))))


class QubitTrainingResult(NamedTuple):
    actor: GaussianActor
    fidelity_history: list[float]
    final_fidelity: float


def train_qubit_controller(
    initial: QubitState,
    target: QubitState,
    actor0: GaussianActor,
    episodes: int,
    rng: np.random.Generator,
    average_tail: float = 0.5,
    sigma_max: float | None = None,
) -> QubitTrainingResult:
    """
    Learns a single X rotation taking `initial` to `target`.

    Each episode samples θ ~ Normal(mu, sigma), rewards it with R = fidelity(rx(θ)·initial, target), forms
    A = R − baseline, moves the baseline by β(R − baseline) and takes an actor step α·A·∇ log π(θ) on both
    mu and log_sigma. sigma stays within [1e-4, sigma_max].

    Args:
        initial: Start state of every episode.
        target: State to prepare.
        actor0: Initial parameters and step sizes.
        episodes: Number of single-rotation episodes, at least 1.
        rng: Random generator for the angle samples.
        average_tail: Fraction of the final episodes whose mu iterates are averaged (circular mean) into the
            returned mu; 0 returns the last iterate.
        sigma_max: Upper bound of the exploration width; the initial sigma by default, never above 2π.

    Returns:
        The trained actor, the reward of every episode and the fidelity reached at the returned mu.
    """
    if episodes < 1:
        raise PreconditionError(f"episodes must be at least 1, got {episodes}")
    if not 0.0 <= average_tail <= 1.0:
        raise PreconditionError(f"average_tail must lie in [0, 1], got {average_tail}")
    if sigma_max is not None and sigma_max <= 0.0:
        raise PreconditionError(f"sigma_max must be positive, got {sigma_max}")
    mu, log_sigma, baseline = actor0.mu, actor0.log_sigma, actor0.baseline
    alpha, beta = actor0.alpha, actor0.beta
    log_sigma_max = min(math.log(sigma_max) if sigma_max is not None else log_sigma, LOG_SIGMA_MAX)
    log_sigma = min(max(log_sigma, LOG_SIGMA_MIN), log_sigma_max)
    tail_start = episodes - int(math.ceil(average_tail * episodes))
    tail: list[float] = []
    history: list[float] = []
    for episode in range(episodes):
        sigma = math.exp(log_sigma)
        theta = float(rng.normal(mu, sigma))
        reward = fidelity(apply(rx(theta), initial), target)
        advantage = reward - baseline
        baseline += beta * (reward - baseline)
        d = theta - mu
        mu = wrap_angle(mu + alpha * advantage * d / sigma**2)
        log_sigma = min(max(log_sigma + alpha * advantage * (d * d / sigma**2 - 1.0), LOG_SIGMA_MIN), log_sigma_max)
        history.append(reward)
        if episode >= tail_start:
            tail.append(mu)
        if (episode + 1) % 500 == 0:
            logger.debug(
                "Qubit controller: episode %d, mu=%.4f, sigma=%.4f, baseline=%.4f", episode + 1, mu, sigma, baseline
            )
    if tail:
        mu = circular_mean(np.array(tail))
    actor = evolve(actor0, mu=mu, log_sigma=log_sigma, baseline=baseline)
    final = fidelity(apply(rx(actor.mu), initial), target)
    logger.info("Qubit controller: mu=%.6f, final fidelity %.10f", actor.mu, final)
    return QubitTrainingResult(actor, history, final)


def global_phase(psi: QubitState, phi: float) -> QubitState:
    """e^{iφ}·psi."""
    factor = cmath.exp(1j * phi)
    return QubitState(factor * psi.amp0, factor * psi.amp1)
