import logging
from typing import Annotated, Any, Callable, NamedTuple, TypeVar, get_args, get_origin, get_type_hints

from .registry import FactoryRecord, wrap_factory

_T = TypeVar("_T")
logger = logging.getLogger(__name__)


class _InjectedMark:
    def __repr__(self) -> str:
        return "Injected"


_INJECTED = _InjectedMark()

Injected = Annotated[_T, _INJECTED]
"""Marks a handler parameter that `RunBox.call` resolves from the run box."""


class Slot(NamedTuple):
    """Where a run object lives: its type, the argument name it is injected as, or both."""

    kind: type | None
    name: str | None = None

    def lookup_order(self) -> tuple["Slot", ...]:
        """The slot itself, then its type alone, then its name alone."""
        if self.kind is None or self.name is None:
            return (self,)
        return self, Slot(self.kind), Slot(None, self.name)

    def __str__(self) -> str:
        kind = getattr(self.kind, "__name__", None) or repr(self.kind)
        return kind if self.name is None else f"{self.name}: {kind}"


def injected_slots(func: Callable[..., Any]) -> dict[str, Slot]:
    """Parameters of `func` annotated `Injected[T]`, mapped to the slot (T, parameter name)."""
    res: dict[str, Slot] = {}
    for param, hint in get_type_hints(func, include_extras=True).items():
        if param == "return" or get_origin(hint) is not Annotated:
            continue
        kind, *marks = get_args(hint)
        if any(m is _INJECTED for m in marks):
            res[param] = Slot(kind, param)
    return res


class _Provider(NamedTuple):
    record: FactoryRecord[Any]
    needs: dict[str, Slot]


class RunBox:
    """
    Run-scoped container for the objects one experiment run needs: its configuration, environment, random
    generator, policy, output sink and named scalars such as `gamma`.

    Each object is created on first request, shared for the rest of the run, and released (`close()`, else
    `__exit__`) in reverse creation order when the box closes.

    ```python
    with RunBox() as box:
        box.bind(RunConfig, lambda: config)
        box.bind(EnvSpec, lambda config: make_env(config.env), config=RunConfig)
        box.bind(float, lambda config: config.gamma, name="gamma", config=RunConfig)

        result = box.call(handler)  # handler(env: Injected[EnvSpec], gamma: Injected[float])
    ```
    """

    def __init__(self):
        self._providers: dict[Slot, _Provider] = {}
        self._instances: dict[Slot, Any] = {}

    def bind(
        self, provided_type: type[_T] | None, factory: Callable[..., _T], name: str | None = None, **deps: type
    ) -> None:
        """
        Registers a provider.

        Args:
            provided_type: Type the provider creates; None binds by argument name only.
            factory: Callable creating the object.
            name: Optional argument name, to tell apart several objects of one type.
            **deps: Factory parameters resolved from the box, mapped to their types.
        """
        if provided_type is None and name is None:
            raise TypeError("a binding needs a type, a name or both")
        if not callable(factory):
            raise TypeError(f"provider for {Slot(provided_type, name)} must be callable")
        needs = {arg: Slot(kind, arg) for arg, kind in deps.items()}
        self._providers[Slot(provided_type, name)] = _Provider(wrap_factory(factory), needs)

    def provide(self, requested_type: type[_T] | None, name: str | None = None) -> _T:
        """Returns the run's object for (type, name), creating it and what it needs on first use."""
        slot = Slot(requested_type, name)
        found = self._find(self._instances, slot)
        if found is not None:
            return self._instances[found]
        return self._create(slot, ())

    def get(self, requested_type: type[_T] | None, name: str | None = None) -> _T:
        """
        Returns an already created object.

        Raises:
            KeyError: nothing matching was created yet. Use `provide()` to create it.
        """
        slot = Slot(requested_type, name)
        found = self._find(self._instances, slot)
        if found is None:
            raise KeyError(f"no {slot} was created in this run")
        return self._instances[found]

    def call(self, func: Callable[..., _T], **explicit: Any) -> _T:
        """Calls `func`, providing every `Injected` parameter not passed in `explicit`."""
        injected = {
            param: self.provide(slot.kind, slot.name)
            for param, slot in injected_slots(func).items()
            if param not in explicit
        }
        return func(**injected, **explicit)

    def close(self):
        created = list(self._instances.values())
        self._instances.clear()
        for instance in reversed(created):
            _release(instance)

    def __enter__(self):
        return self

    def __exit__(self, *args: Any):
        self.close()

    @staticmethod
    def _find(table: dict[Slot, Any], slot: Slot) -> Slot | None:
        return next((s for s in slot.lookup_order() if s in table), None)

    def _create(self, slot: Slot, chain: tuple[Slot, ...]) -> Any:
        bound = self._find(self._providers, slot)
        if bound is None:
            raise KeyError(f"No provider bound for {slot}")
        if bound in chain:
            raise TypeError(f"circular dependency: {' -> '.join(map(str, (*chain, bound)))}")
        existing = self._instances.get(bound)
        if existing is not None:
            return existing
        provider = self._providers[bound]
        logger.debug("Creating %s...", bound)
        args = {}
        for arg, need in provider.needs.items():
            found = self._find(self._instances, need)
            args[arg] = self._instances[found] if found is not None else self._create(need, (*chain, bound))
        instance = provider.record.factory(**args)
        self._instances[bound] = instance
        return instance


def _release(instance: Any):
    close = getattr(instance, "close", None)
    if callable(close):
        close()
        return
    exit_ = getattr(instance, "__exit__", None)
    if callable(exit_):
        exit_(None, None, None)
