from typing import Iterable


class PreconditionError(ValueError):
    """An operation was called with arguments outside its documented domain."""


class ModelError(ValueError):
    """A transition model or policy is inconsistent (bad probabilities, missing rows, unknown labels)."""


class UnknownNameError(ValueError):
    """A name was looked up in a fixed enumeration and not found. The message lists the valid names."""

    def __init__(self, kind: str, name: str, choices: Iterable[str]):
        self.kind = kind
        self.name = name
        self.choices = tuple(choices)
        super().__init__(f"unknown {kind} {name!r}; valid names: {', '.join(self.choices)}")


class ImproperPolicyError(ValueError):
    """
    Raised when an undiscounted evaluation meets a policy that does not reach a terminal state with
    probability 1 from every state.

    Attributes:
        recurrent: labels of a closed non-terminal class the policy can get trapped in.
        improper: labels of every state from which termination is not certain.
    """

    def __init__(self, recurrent: Iterable[str], improper: Iterable[str]):
        self.recurrent = tuple(recurrent)
        self.improper = tuple(improper)
        super().__init__(
            f"policy is improper at gamma=1: non-terminal class {{{', '.join(self.recurrent)}}} is never left; "
            f"states without certain termination: {', '.join(self.improper)}"
        )


class SingularGradientError(ValueError):
    """The log-probability gradient was requested for an action the policy never takes."""
