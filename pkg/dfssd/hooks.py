"""Hook system for attack and bench progress events."""

from __future__ import annotations

import csv
import dataclasses
import logging
from pathlib import Path
from typing import Optional, Protocol, runtime_checkable

from dfssd.exceptions import HookError

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class DisEvent:
    iteration: int
    boundary: int
    dis_length: int
    elapsed: float


@dataclasses.dataclass(frozen=True)
class BoundaryEvent:
    boundary: int
    dis_count: int
    elapsed: float


@dataclasses.dataclass(frozen=True)
class TerminationEvent:
    termination: str
    boundary: int
    iterations: int
    elapsed: float
    key_count: Optional[int]


@dataclasses.dataclass(frozen=True)
class CellEvent:
    circuit: str
    scheme: str
    termination: Optional[str]
    error: Optional[str]


@runtime_checkable
class Hook(Protocol):
    def on_dis(self, event: DisEvent) -> None: ...
    def on_boundary(self, event: BoundaryEvent) -> None: ...
    def on_termination(self, event: TerminationEvent) -> None: ...
    def on_cell(self, event: CellEvent) -> None: ...


class LoggingHook:
    """Default hook that logs all events."""

    def on_dis(self, event: DisEvent) -> None:
        logger.info(
            "DIS #%d at boundary %d: length %d (%.2fs)",
            event.iteration, event.boundary, event.dis_length, event.elapsed,
        )

    def on_boundary(self, event: BoundaryEvent) -> None:
        logger.info(
            "Boundary %d drained after %d DIS(es) (%.2fs)",
            event.boundary, event.dis_count, event.elapsed,
        )

    def on_termination(self, event: TerminationEvent) -> None:
        logger.info(
            "Attack terminated by %s at boundary %d after %d DIS(es)",
            event.termination, event.boundary, event.iterations,
        )

    def on_cell(self, event: CellEvent) -> None:
        if event.error:
            logger.error("Bench cell %s/%s failed: %s", event.circuit, event.scheme, event.error)
        else:
            logger.info("Bench cell %s/%s: %s", event.circuit, event.scheme, event.termination)


class CsvTraceHook:
    """Appends one row per DIS: iteration, boundary, DIS length, cumulative time."""

    COLUMNS = ("iteration", "boundary", "dis_length", "cumulative_time_s")

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path).expanduser()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "w", newline="") as f:
            csv.writer(f).writerow(self.COLUMNS)

    def on_dis(self, event: DisEvent) -> None:
        try:
            with open(self.path, "a", newline="") as f:
                csv.writer(f).writerow(
                    [event.iteration, event.boundary, event.dis_length, f"{event.elapsed:.6f}"]
                )
        except OSError as exc:
            raise HookError(f"Cannot append to {self.path}: {exc}") from exc

    def on_boundary(self, event: BoundaryEvent) -> None:
        pass

    def on_termination(self, event: TerminationEvent) -> None:
        pass

    def on_cell(self, event: CellEvent) -> None:
        pass


class HookRunner:
    """Runs all registered hooks, isolating failures."""

    def __init__(self, hooks: list[Hook] | None = None) -> None:
        self._hooks: list[Hook] = list(hooks) if hooks else []

    def add(self, hook: Hook) -> None:
        self._hooks.append(hook)

    def _fire(self, method: str, event: object) -> None:
        for hook in self._hooks:
            try:
                getattr(hook, method)(event)
            except Exception as exc:
                logger.warning("Hook %s.%s failed: %s", type(hook).__name__, method, exc)

    def fire_dis(self, event: DisEvent) -> None:
        self._fire("on_dis", event)

    def fire_boundary(self, event: BoundaryEvent) -> None:
        self._fire("on_boundary", event)

    def fire_termination(self, event: TerminationEvent) -> None:
        self._fire("on_termination", event)

    def fire_cell(self, event: CellEvent) -> None:
        self._fire("on_cell", event)
