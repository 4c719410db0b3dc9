"""Custom exception hierarchy for dfssd-toolkit."""

from __future__ import annotations

from collections.abc import Sequence


class DfssdError(Exception):
    """Base exception for all dfssd-toolkit errors."""


class ConfigError(DfssdError):
    """Configuration loading or validation error."""


class NetlistError(DfssdError):
    """Malformed or inconsistent netlist."""


class BenchSyntaxError(NetlistError):
    """`.bench` text could not be tokenized or parsed.

    Attributes:
        line: 1-based line number.
        column: 1-based column number.
    """

    def __init__(self, message: str, *, line: int = 0, column: int = 0) -> None:
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class ArityError(NetlistError):
    """Gate has the wrong number of inputs for its kind.

    Attributes:
        line: 1-based line number (0 when not parsed from text).
    """

    def __init__(self, message: str, *, line: int = 0) -> None:
        super().__init__(message if not line else f"{message} (line {line})")
        self.line = line


class MultiDriverError(NetlistError):
    """A net is driven more than once.

    Attributes:
        net: Name of the net.
    """

    def __init__(self, message: str, *, net: str = "") -> None:
        super().__init__(message)
        self.net = net


class UndefinedNetError(NetlistError):
    """A net is referenced but never driven.

    Attributes:
        net: Name of the net.
    """

    def __init__(self, message: str, *, net: str = "") -> None:
        super().__init__(message)
        self.net = net


class CombinationalCycleError(NetlistError):
    """The combinational portion of the netlist is cyclic.

    Attributes:
        nets: Names of the nets on the detected cycle.
    """

    def __init__(self, message: str, *, nets: Sequence[str] = ()) -> None:
        super().__init__(message)
        self.nets = tuple(nets)


class WidthMismatchError(DfssdError):
    """A bit vector does not have the width the circuit expects.

    Attributes:
        expected: Expected width.
        actual: Supplied width.
    """

    def __init__(self, message: str, *, expected: int = 0, actual: int = 0) -> None:
        super().__init__(f"{message}: expected {expected} bit(s), got {actual}")
        self.expected = expected
        self.actual = actual


class ModelError(DfssdError):
    """Misuse of an unrolled CNF model."""


class StateSpaceError(DfssdError):
    """Explicit state-space exploration exceeds its configured limits."""


class TransformError(DfssdError):
    """An obfuscation transform's preconditions are not met."""


class InsufficientUrsError(TransformError):
    """Not enough certified-unreachable states to duplicate into.

    Attributes:
        available: Number of usable unreachable states.
        requested: Number of duplicates requested.
    """

    def __init__(self, message: str, *, available: int = 0, requested: int = 0) -> None:
        super().__init__(message)
        self.available = available
        self.requested = requested


class UnreachablePatternError(TransformError):
    """The protected pattern can never occur, so the key would be vacuous.

    Attributes:
        pattern: Pattern bit string.
    """

    def __init__(self, message: str, *, pattern: str = "") -> None:
        super().__init__(message)
        self.pattern = pattern


class TriggerNotFoundError(TransformError):
    """The trigger transition is not part of the reachable state graph."""


class TracerConfigError(TransformError):
    """Inconsistent tracer configuration."""


class DummyInsertionError(TransformError):
    """No certified non-occurring signal combination was found."""


class AttackError(DfssdError):
    """Locked netlist and oracle do not fit together."""


class LockError(DfssdError):
    """Exclusive lock acquisition failure."""


class HookError(DfssdError):
    """Hook delivery failure (non-fatal)."""
