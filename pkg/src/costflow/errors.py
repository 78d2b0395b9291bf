"""Exception types shared across the engine."""

from __future__ import annotations


class CostflowError(Exception):
    """Base class for all engine errors."""


# --- asset graph ---


class DuplicateAsset(CostflowError):
    def __init__(self, name: str):
        super().__init__(f"duplicate asset name: {name!r}")
        self.name = name


class UnknownDependency(CostflowError):
    def __init__(self, asset: str, dep: str):
        super().__init__(f"asset {asset!r} depends on unknown asset {dep!r}")
        self.asset = asset
        self.dep = dep


class CycleDetected(CostflowError):
    def __init__(self, path: list[str]):
        super().__init__("dependency cycle: " + " -> ".join(path))
        self.path = path


# --- step protocol ---


class MalformedPayload(CostflowError):
    """Context payload could not be decoded."""


# --- backends ---


class BackendUnavailable(CostflowError):
    def __init__(self, backend_id: str):
        super().__init__(f"backend not available: {backend_id!r}")
        self.backend_id = backend_id


class InvalidSpec(CostflowError):
    pass


class UnknownHandle(CostflowError):
    pass


class UnknownBackend(CostflowError):
    def __init__(self, backend_id: str):
        super().__init__(f"unknown backend: {backend_id!r}")
        self.backend_id = backend_id


class EmptyRegistry(CostflowError):
    pass


# --- cost engine ---


class NegativeDuration(CostflowError):
    pass


class NegativeComponent(CostflowError):
    pass


class EmptyRun(CostflowError):
    pass


class ZeroDenominator(CostflowError):
    pass


class EmptyInput(CostflowError):
    pass


# --- run engine ---


class IllegalTransition(CostflowError):
    def __init__(self, state: str, event: str):
        super().__init__(f"event {event!r} is not legal in state {state!r}")
        self.state = state
        self.event = event


class EmptySelection(CostflowError):
    pass


class UnknownRun(CostflowError):
    def __init__(self, run_id: str):
        super().__init__(f"unknown run: {run_id!r}")
        self.run_id = run_id


class AlreadyTerminal(CostflowError):
    """Cancel requested on a run or step that already reached a terminal state."""


# --- control plane ---


class ConfigError(CostflowError):
    """Pipeline definition file failed validation."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


class EmptyRange(CostflowError):
    pass
