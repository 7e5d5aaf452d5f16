import inspect
from functools import partial
from typing import Any, Callable, Generic, NamedTuple, TypeVar

from .errors import UnknownNameError

_T = TypeVar("_T")


class FactoryRecord(NamedTuple, Generic[_T]):
    factory: Callable[..., _T]
    signature_info: inspect.Signature

    def accepted_params(self) -> list[str]:
        return [
            p.name
            for p in self.signature_info.parameters.values()
            if p.kind not in (inspect.Parameter.VAR_POSITIONAL, inspect.Parameter.VAR_KEYWORD)
        ]

    def accepts_any_keyword(self) -> bool:
        return any(p.kind == inspect.Parameter.VAR_KEYWORD for p in self.signature_info.parameters.values())


def wrap_factory(func: Callable[..., _T], **kwargs: Any) -> FactoryRecord[_T]:
    """Pre-binds `kwargs` (they stay overridable) and records the resulting signature."""
    func = func if not kwargs else partial(func, **kwargs)
    return FactoryRecord(factory=func, signature_info=inspect.signature(func))


class Registry(Generic[_T]):
    """
    Name-keyed registry of factory functions.

    ```python
    envs = Registry[EnvSpec]("environment")
    envs.bind("grid1d9", make_grid1d9)
    envs.bind("grid1d9_r3", make_grid1d9, terminal_reward=3.0)

    env = envs.provide("grid1d9", step_reward=-2.0)
    ```
    """

    def __init__(self, kind: str):
        self.kind = kind
        self._records: dict[str, FactoryRecord[_T]] = {}

    def bind(self, name: str, factory: Callable[..., _T], **kwargs: Any) -> None:
        """
        Registers `factory` under `name`.

        Args:
            name: Lookup name; re-binding a name replaces the previous factory.
            factory: Callable returning the registered kind of object.
            **kwargs: Keyword arguments forwarded to the factory on every call.
        """
        if not callable(factory):
            raise TypeError(f"factory for {self.kind} {name!r} must be callable")
        self._records[name] = wrap_factory(factory, **kwargs)

    def names(self) -> list[str]:
        return list(self._records)

    def __contains__(self, name: object) -> bool:
        return name in self._records

    def find(self, name: str) -> FactoryRecord[_T]:
        try:
            return self._records[name]
        except KeyError:
            raise UnknownNameError(self.kind, name, self.names()) from None

    def parameters(self, name: str) -> list[str]:
        """Keyword parameters the factory bound under `name` accepts as overrides."""
        return self.find(name).accepted_params()

    def provide(self, name: str, **overrides: Any) -> _T:
        """
        Calls the factory registered under `name` with `overrides` applied on top of the bound keyword arguments.

        Raises:
            UnknownNameError: `name` is not registered, or an override is not a parameter of the factory.
        """
        record = self.find(name)
        if not record.accepts_any_keyword():
            accepted = record.accepted_params()
            for key in overrides:
                if key not in accepted:
                    raise UnknownNameError(f"parameter of {self.kind} {name!r}", key, accepted)
        return record.factory(**overrides)
