import json

import pytest

from rlbox.codec import (
    model_from_dict,
    model_to_dict,
    policy_from_dict,
    policy_to_dict,
    trajectories_from_json,
    trajectory_to_dict,
)
from rlbox.environments import make_env
from rlbox.errors import ModelError, PreconditionError

LISTING = {
    "terminals": ["s3"],
    "step_reward": -1,
    "terminal_reward": 5,
    "transitions": {
        "s1": {"left": "s1", "right": [["s2", 0.7], ["s1", 0.3]]},
        "s2": {"left": [["s1", -2, 1.0]], "right": "s3"},
        "s3": {},
    },
}


class TestModelCodec:
    def test_row_forms(self):
        model = model_from_dict(LISTING)

        assert [s.label for s in model.states] == ["s1", "s2", "s3"]
        assert [a.label for a in model.actions] == ["left", "right"]
        assert tuple(model.outcomes("s1", "left")[0]) == ("s1", -1.0, 1.0)
        assert [tuple(o) for o in model.outcomes("s1", "right")] == [("s2", -1.0, 0.7), ("s1", -1.0, 0.3)]
        assert tuple(model.outcomes("s2", "left")[0]) == ("s1", -2.0, 1.0)
        assert tuple(model.outcomes("s2", "right")[0]) == ("s3", 5.0, 1.0)
        assert model.gamma_default == 1.0

    def test_rows_without_rewards_need_a_rule(self):
        with pytest.raises(ModelError, match="no reward rule"):
            model_from_dict({"terminals": ["t"], "transitions": {"a": {"right": "t"}, "t": {}}})

    def test_missing_transitions(self):
        with pytest.raises(ModelError, match="transitions"):
            model_from_dict({"terminals": []})

    def test_malformed_outcome(self):
        with pytest.raises(ModelError, match="malformed"):
            model_from_dict({"terminals": ["t"], "transitions": {"a": {"right": [["t", 1, 2, 3]]}, "t": {}}})

    def test_invalid_probabilities_are_not_renormalized(self):
        data = {"terminals": ["t"], "transitions": {"a": {"right": [["t", 1.0, 0.5], ["a", 0.0, 0.4]]}, "t": {}}}
        with pytest.raises(ModelError, match="sum to"):
            model_from_dict(data)

    @pytest.mark.parametrize("name", ["grid2x2", "grid3x3", "grid1d9_stochastic"])
    def test_builtin_models_survive_json(self, name: str):
        model = make_env(name).model

        restored = model_from_dict(json.loads(json.dumps(model_to_dict(model))))

        assert model_to_dict(restored) == model_to_dict(model)
        assert restored.actions_at("s1") == model.actions_at("s1")


class TestPolicyCodec:
    def test_shorthand_rows(self):
        policy = policy_from_dict({"s1": "right", "s2": {"left": 0.25, "right": 0.75}, "s3": {}})

        assert dict(policy.distribution("s1")) == {"right": 1.0}
        assert policy.prob("s2", "right") == 0.75
        assert dict(policy.distribution("s3")) == {}
        assert policy_to_dict(policy)["s2"] == {"left": 0.25, "right": 0.75}

    def test_bad_row(self):
        with pytest.raises(ModelError, match="s1"):
            policy_from_dict({"s1": 1.0})


class TestTrajectoryCodec:
    def test_single_and_list(self):
        model = make_env("grid3x3").model
        red = {"steps": [["s3", "down", -1], ["s6", "left", -1], ["s5", "left", -1], ["s4", "down", 3]], "final": "s7"}

        [single] = trajectories_from_json(model, red)
        pair = trajectories_from_json(model, [red, red])

        assert single.terminated
        assert single.as_tuples()[-1] == ("s4", "down", 3.0)
        assert len(pair) == 2
        assert trajectory_to_dict(single) == {
            "steps": [["s3", "down", -1.0], ["s6", "left", -1.0], ["s5", "left", -1.0], ["s4", "down", 3.0]],
            "final": "s7",
        }

    def test_unterminated_trajectory(self):
        model = make_env("grid1d9").model

        [trajectory] = trajectories_from_json(model, {"steps": [["s1", "right", -1]], "final": "s2"})

        assert not trajectory.terminated

    @pytest.mark.parametrize("data", [{"steps": [["s1", "right"]], "final": "s2"}, {"steps": []}])
    def test_malformed(self, data: dict[str, object]):
        with pytest.raises(ModelError, match="malformed"):
            trajectories_from_json(make_env("grid1d9").model, data)

    def test_empty_steps(self):
        with pytest.raises(PreconditionError):
            trajectories_from_json(make_env("grid1d9").model, {"steps": [], "final": "s2"})
