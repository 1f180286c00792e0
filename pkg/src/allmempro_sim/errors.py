"""Exception hierarchy shared by every layer of the simulator."""

from __future__ import annotations


class SimError(Exception):
    """Base class for all simulator errors."""


# machine


class OverlapError(SimError):
    """Two ranges that must be disjoint intersect."""


class DuplicateName(SimError):
    """A module with this name is already loaded."""


class UnknownModule(SimError):
    """No loaded module matches the given id or name."""


# ept


class WindowAlreadyOpen(SimError):
    """A grant/deny window is already open; windows never nest."""


class StaleToken(SimError):
    """The token does not describe the currently open window."""


# policy


class InvalidRule(SimError, ValueError):
    """A memory access rule violates its structural invariants."""


class DuplicateRule(SimError):
    """The (driver range, allocation range) pair is already present."""


class UntrackedOwner(SimError):
    """The allocating module is not a protected (tracked) module."""


class UnknownAllocation(SimError):
    """No tracked allocation starts at the given address."""


class NotOwner(SimError):
    """A module tried to free an allocation owned by another module."""


# vmm


class WidthError(SimError, ValueError):
    """An access is wider than 8 bytes, empty, or crosses a page boundary."""


class EventError(SimError):
    """Wraps an error raised while running the n-th event."""

    def __init__(self, ordinal: int, error: Exception) -> None:
        super().__init__(f"event #{ordinal}: {type(error).__name__}: {error}")
        self.ordinal = ordinal
        self.error = error


class InvariantViolation(SimError, AssertionError):
    """A runtime self-check found the simulator in an inconsistent state."""


# scenario


class ParseError(SimError, ValueError):
    """A scenario line could not be parsed."""

    def __init__(self, line: int, column: int, message: str) -> None:
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column
        self.message = message


class ScenarioRuntimeError(SimError):
    """A scenario command failed while running."""

    def __init__(self, line: int, error: Exception) -> None:
        super().__init__(f"line {line}: {type(error).__name__}: {error}")
        self.line = line
        self.error = error
