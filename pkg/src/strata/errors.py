"""Exception types shared across the package."""

from __future__ import annotations


class StrataError(Exception):
    """Base class for all package-specific errors."""


class KernelError(StrataError):
    """Base class for scheduler/context errors. ``tick`` is attached when the
    error surfaces from an episode run."""

    tick: int | None = None


class UnsatisfiedRead(KernelError):
    def __init__(self, key: str, stream: str):
        super().__init__(f"stream {stream!r} read absent or undeclared key {key!r}")
        self.key = key
        self.stream = stream


class WriteConflict(KernelError):
    def __init__(self, key: str, streams: tuple[str, ...]):
        super().__init__(f"streams {streams!r} wrote {key!r} in the same layer and tick")
        self.key = key
        self.streams = streams


class NonFiniteWrite(KernelError):
    def __init__(self, key: str, stream: str):
        super().__init__(f"stream {stream!r} wrote a non-finite value to {key!r}")
        self.key = key
        self.stream = stream


class UndeclaredWrite(KernelError):
    def __init__(self, key: str, stream: str):
        super().__init__(f"stream {stream!r} wrote undeclared key {key!r}")
        self.key = key
        self.stream = stream


class LengthMismatch(StrataError, ValueError):
    """Vector length differs from what the receiving structure declares."""


class MissingFitness(StrataError):
    """An individual reached selection without an evaluated fitness."""


class EvaluationError(StrataError):
    """An objective evaluation raised. Carries enough context to persist
    partial results before aborting."""

    def __init__(self, generation: int, index: int, cause: BaseException):
        super().__init__(f"evaluation failed at generation {generation}, index {index}: {cause!r}")
        self.generation = generation
        self.index = index
        self.cause = cause
        self.partial_logbook: list | None = None
        self.partial_hof = None


class EmptyAxis(StrataError, ValueError):
    """A scenario grid axis has no values."""


class ConfigError(StrataError):
    """A run configuration is missing, malformed, or inconsistent."""
