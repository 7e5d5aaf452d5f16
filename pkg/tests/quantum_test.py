import math

import numpy as np
import pytest
from attrs import evolve

from rlbox.errors import PreconditionError
from rlbox.quantum import (
    GaussianActor,
    QubitState,
    Unitary2,
    apply,
    bloch,
    circular_mean,
    fidelity,
    gaussian_log_prob,
    gaussian_log_prob_grad,
    global_phase,
    rx,
    train_qubit_controller,
    wrap_angle,
)


def _amplitudes(psi: QubitState) -> np.ndarray:
    return psi.as_array()


def _angle_error(angle: float, target: float) -> float:
    return abs(math.remainder(angle - target, 2 * math.pi))


def _train(seed: int, episodes: int = 2000):
    return train_qubit_controller(
        QubitState.zero(),
        QubitState.one(),
        GaussianActor.create(sigma0=1.0, alpha=0.05, beta=0.1),
        episodes,
        np.random.default_rng(seed),
    )


def _reaches_target(seed: int) -> bool:
    result = _train(seed)
    return result.final_fidelity >= 0.9999 and _angle_error(result.actor.mu, math.pi) <= 0.02


class TestGates:
    def test_rx_pi_flips_zero(self):
        psi = apply(rx(math.pi), QubitState.zero())
        np.testing.assert_allclose(_amplitudes(psi), [0.0, -1j], atol=1e-12)

    def test_rx_half_pi(self):
        psi = apply(rx(math.pi / 2), QubitState.zero())

        np.testing.assert_allclose(_amplitudes(psi), [1 / math.sqrt(2), -1j / math.sqrt(2)], atol=1e-12)
        assert fidelity(psi, QubitState.one()) == pytest.approx(0.5, abs=1e-12)

    def test_identity(self):
        psi = QubitState(0.6, 0.8j)
        np.testing.assert_allclose(_amplitudes(apply(Unitary2.identity(), psi)), [0.6, 0.8j], atol=1e-15)

    def test_two_half_turns_give_a_global_phase(self):
        psi = apply(rx(math.pi) @ rx(math.pi), QubitState.zero())

        np.testing.assert_allclose(_amplitudes(psi), [-1.0, 0.0], atol=1e-12)
        assert fidelity(psi, QubitState.zero()) == pytest.approx(1.0, abs=1e-12)

    def test_unitary_over_random_angles(self):
        rng = np.random.default_rng(0)
        for a, b in rng.uniform(-10.0, 10.0, size=(100, 2)):
            u = rx(float(a))
            assert (u.adjoint() @ u).allclose(Unitary2.identity())
            assert (u @ rx(float(b))).allclose(rx(float(a + b)), atol=1e-12)

    def test_rejects_non_unitary(self):
        with pytest.raises(PreconditionError, match="not unitary"):
            Unitary2(np.array([[1.0, 1.0], [0.0, 1.0]]))
        with pytest.raises(PreconditionError, match="2x2"):
            Unitary2(np.eye(3))

    @pytest.mark.parametrize("theta", [math.nan, math.inf])
    def test_rx_needs_a_finite_angle(self, theta: float):
        with pytest.raises(PreconditionError):
            rx(theta)

    def test_matrix_is_read_only(self):
        with pytest.raises(ValueError):
            rx(1.0).matrix[0, 0] = 2.0


class TestStates:
    def test_normalization_is_checked(self):
        with pytest.raises(PreconditionError):
            QubitState(1.0, 1.0)

    @pytest.mark.parametrize(
        ("psi", "expected"),
        [
            (QubitState.zero(), (0.0, 0.0, 1.0)),
            (QubitState.one(), (0.0, 0.0, -1.0)),
            (QubitState.plus(), (1.0, 0.0, 0.0)),
            (QubitState(1 / math.sqrt(2), 1j / math.sqrt(2)), (0.0, 1.0, 0.0)),
        ],
    )
    def test_bloch(self, psi: QubitState, expected: tuple[float, float, float]):
        assert bloch(psi) == pytest.approx(expected, abs=1e-12)

    def test_fidelity_bounds(self):
        assert fidelity(QubitState.zero(), QubitState.zero()) == 1.0
        assert fidelity(QubitState.zero(), QubitState.one()) == 0.0

    def test_global_phase_invariance(self):
        rng = np.random.default_rng(1)
        target = QubitState.plus()
        for theta, phi in rng.uniform(0.0, 2 * math.pi, size=(50, 2)):
            psi = apply(rx(float(theta)), QubitState.zero())
            shifted = global_phase(psi, float(phi))
            assert fidelity(shifted, target) == pytest.approx(fidelity(psi, target), abs=1e-12)

    def test_reward_landscape(self):
        for theta in np.linspace(-2 * math.pi, 2 * math.pi, 1000):
            reward = fidelity(apply(rx(float(theta)), QubitState.zero()), QubitState.one())
            assert reward == pytest.approx(math.sin(theta / 2) ** 2, abs=1e-12)


class TestAngles:
    @pytest.mark.parametrize(
        ("theta", "expected"),
        [(0.0, 0.0), (-0.5, 2 * math.pi - 0.5), (2 * math.pi, 0.0), (7.0, 7.0 - 2 * math.pi)],
    )
    def test_wrap_angle(self, theta: float, expected: float):
        assert wrap_angle(theta) == pytest.approx(expected, abs=1e-12)

    def test_circular_mean_across_the_seam(self):
        mean = circular_mean(np.array([0.1, 2 * math.pi - 0.1]))
        assert _angle_error(mean, 0.0) < 1e-12

    def test_circular_mean(self):
        assert circular_mean(np.array([math.pi - 0.2, math.pi + 0.2])) == pytest.approx(math.pi)


class TestGaussianActor:
    def test_mu_is_wrapped(self):
        assert GaussianActor(mu=-1.0).mu == pytest.approx(2 * math.pi - 1.0)

    def test_create(self):
        actor = GaussianActor.create(sigma0=0.5, mu=1.0)

        assert actor.sigma == pytest.approx(0.5)
        assert actor.mu == 1.0
        with pytest.raises(PreconditionError):
            GaussianActor.create(sigma0=0.0)

    def test_log_prob_grad_matches_finite_differences(self):
        actor = GaussianActor(mu=1.0, log_sigma=-0.3)
        theta = 1.7
        h = 1e-6

        d_mu = (
            gaussian_log_prob(evolve(actor, mu=1.0 + h), theta) - gaussian_log_prob(evolve(actor, mu=1.0 - h), theta)
        ) / (2 * h)
        d_log_sigma = (
            gaussian_log_prob(evolve(actor, log_sigma=-0.3 + h), theta)
            - gaussian_log_prob(evolve(actor, log_sigma=-0.3 - h), theta)
        ) / (2 * h)

        assert gaussian_log_prob_grad(actor, theta) == pytest.approx((d_mu, d_log_sigma), rel=1e-6)


class TestTraining:
    def test_reaches_the_excited_state(self):
        assert sum(_reaches_target(seed) for seed in range(5)) >= 4

    @pytest.mark.slow
    def test_reaches_the_excited_state_across_seeds(self):
        assert sum(_reaches_target(seed) for seed in range(100)) >= 90

    def test_history_and_determinism(self):
        first = _train(3, episodes=300)
        second = _train(3, episodes=300)

        assert len(first.fidelity_history) == 300
        assert all(0.0 <= f <= 1.0 for f in first.fidelity_history)
        assert first.actor == second.actor
        assert first.fidelity_history == second.fidelity_history

    def test_width_never_exceeds_its_start(self):
        result = _train(0, episodes=100)
        assert result.actor.sigma <= 1.0 + 1e-12

    def test_target_equal_to_initial(self):
        assert fidelity(apply(rx(0.0), QubitState.zero()), QubitState.zero()) == 1.0

        result = train_qubit_controller(
            QubitState.zero(), QubitState.zero(), GaussianActor.create(), 500, np.random.default_rng(0)
        )

        assert result.final_fidelity >= 0.999

    @pytest.mark.parametrize(
        ("episodes", "kwargs"), [(0, {}), (10, {"average_tail": 1.5}), (10, {"sigma_max": 0.0})]
    )
    def test_preconditions(self, episodes: int, kwargs: dict[str, float]):
        with pytest.raises(PreconditionError):
            train_qubit_controller(
                QubitState.zero(), QubitState.one(), GaussianActor(), episodes, np.random.default_rng(0), **kwargs
            )
