import numpy as np
import pytest

from rlbox.environments import builtin_policy, make_env
from rlbox.errors import PreconditionError
from rlbox.mc import ReturnAccumulator, VisitMode, mc_evaluate, mc_replay
from rlbox.mdp import Trajectory


def _grid3x3_episodes() -> list[Trajectory]:
    model = make_env("grid3x3").model
    paths = [
        [("s3", "down", -1), ("s6", "left", -1), ("s5", "left", -1), ("s4", "down", 3)],
        [("s3", "down", -1), ("s6", "left", -1), ("s5", "down", -1), ("s8", "left", 3)],
        [("s3", "down", -1), ("s6", "down", -1), ("s9", "left", -1), ("s8", "left", 3)],
    ]
    return [Trajectory.from_labels(model, path, "s7") for path in paths]


def _loop_episode() -> Trajectory:
    model = make_env("grid1d9").model
    path = [("s1", "left", -1), ("s1", "right", -1), ("s2", "right", -1), ("s3", "right", -1), ("s4", "right", 5)]
    return Trajectory.from_labels(model, path, "s5")


class TestReplay:
    def test_three_paths_to_the_corner(self):
        estimate = mc_replay(_grid3x3_episodes(), gamma=1.0)

        assert estimate.values["s6"] == pytest.approx(1.0)
        assert estimate.values["s5"] == pytest.approx(2.0)
        assert estimate.values["s3"] == pytest.approx(0.0)
        assert estimate.counts["s3"] == 3
        assert estimate.counts["s5"] == 2
        assert estimate.visited == {"s3", "s4", "s5", "s6", "s8", "s9"}
        assert "s1" not in estimate.values
        assert not estimate.empty

    @pytest.mark.parametrize(("mode", "value", "count"), [(VisitMode.First, 1.0, 1), (VisitMode.Every, 1.5, 2)])
    def test_visit_modes(self, mode: VisitMode, value: float, count: int):
        estimate = mc_replay([_loop_episode()], gamma=1.0, mode=mode)

        assert estimate.values["s1"] == pytest.approx(value)
        assert estimate.counts["s1"] == count
        assert estimate.values["s4"] == pytest.approx(5.0)

    @pytest.mark.parametrize("gamma", [1.0, 0.9])
    def test_modes_agree_without_revisits(self, gamma: float):
        first = mc_replay(_grid3x3_episodes(), gamma=gamma, mode=VisitMode.First)
        every = mc_replay(_grid3x3_episodes(), gamma=gamma, mode=VisitMode.Every)

        assert first.values == every.values
        assert first.counts == every.counts

    @pytest.mark.parametrize("mode", [VisitMode.First, VisitMode.Every])
    def test_episode_order_does_not_matter(self, mode: VisitMode):
        model = make_env("grid1d9").model
        paths = [
            [("s7", "left", -1), ("s6", "left", 5)],
            [("s3", "left", -1), ("s2", "right", -1), ("s3", "right", -1), ("s4", "right", 5)],
            [("s9", "right", -1), ("s9", "left", -1), ("s8", "left", -1), ("s7", "left", -1), ("s6", "left", 5)],
        ]
        episodes = [_loop_episode(), *(Trajectory.from_labels(model, path, "s5") for path in paths)]
        shuffled = [episodes[i] for i in (2, 0, 3, 1)]

        estimate = mc_replay(episodes, gamma=0.9, mode=mode)
        reordered = mc_replay(shuffled, gamma=0.9, mode=mode)

        assert reordered.counts == estimate.counts
        assert reordered.values.as_dict() == pytest.approx(estimate.values.as_dict(), rel=1e-12)

    def test_discounting(self):
        estimate = mc_replay([_loop_episode()], gamma=0.9)
        assert estimate.values["s3"] == pytest.approx(-1.0 + 0.9 * 5.0)

    def test_no_episodes(self):
        estimate = mc_replay([], gamma=1.0)

        assert estimate.empty
        assert not estimate.visited
        assert len(estimate.values) == 0


class TestReturnAccumulator:
    def test_merge_pools_returns(self):
        first = ReturnAccumulator()
        first.add("s1", 2.0)
        second = ReturnAccumulator()
        second.add("s1", 4.0)
        second.add("s2", 1.0)

        merged = first.merge(second)

        assert merged.estimates().as_dict() == {"s1": 3.0, "s2": 1.0}
        assert merged.counts == {"s1": 2, "s2": 1}
        assert first.counts == {"s1": 1}


class TestSampledEvaluation:
    @staticmethod
    def _within_tolerance(seed: int, mode: VisitMode) -> bool:
        env = make_env("grid2x2")

        estimate = mc_evaluate(env, builtin_policy(env, "uniform"), 1.0, 200_000, mode=mode, rng=np.random.default_rng(seed))

        expected = {"s1": 0.0, "s2": 1.0, "s3": 1.0}
        return "s4" not in estimate.values and all(abs(estimate.values[s] - v) <= 0.05 for s, v in expected.items())

    @pytest.mark.parametrize("mode", [VisitMode.First, VisitMode.Every])
    def test_grid2x2_uniform(self, mode: VisitMode):
        assert self._within_tolerance(3, mode)

    @pytest.mark.slow
    @pytest.mark.parametrize("mode", [VisitMode.First, VisitMode.Every])
    def test_grid2x2_uniform_seed_suite(self, mode: VisitMode):
        assert sum(self._within_tolerance(seed, mode) for seed in range(100)) >= 95

    def test_bare_model_with_fixed_start(self):
        env = make_env("grid1d9")

        estimate = mc_evaluate(
            env.model, builtin_policy(env, "improved"), 1.0, 10, starts=["s1"], rng=np.random.default_rng(0)
        )

        assert estimate.values.as_dict() == {"s1": 2.0, "s2": 3.0, "s3": 4.0, "s4": 5.0}
        assert estimate.counts["s1"] == 10

    def test_same_seed_same_estimate(self):
        env = make_env("grid1d9_stochastic")
        policy = builtin_policy(env, "uniform")

        first = mc_evaluate(env, policy, 1.0, 200, rng=np.random.default_rng(42))
        second = mc_evaluate(env, policy, 1.0, 200, rng=np.random.default_rng(42))

        assert first.values == second.values

    def test_episodes_must_be_positive(self):
        env = make_env("grid1d9")
        with pytest.raises(PreconditionError):
            mc_evaluate(env, builtin_policy(env, "uniform"), 1.0, 0)
