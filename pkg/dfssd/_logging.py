"""Centralized logging configuration.

Records emitted while a bench cell runs carry that cell as ``[circuit/scheme]``.
"""

from __future__ import annotations

import contextlib
import contextvars
import logging
import sys
from collections.abc import Iterator

_cell: contextvars.ContextVar[str] = contextvars.ContextVar("dfssd_cell", default="")


class CellFilter(logging.Filter):
    """Adds ``record.cell``: `` [circuit/scheme]`` inside :func:`cell_context`, else empty."""

    def filter(self, record: logging.LogRecord) -> bool:
        cell = _cell.get()
        record.cell = f" [{cell}]" if cell else ""
        return True


@contextlib.contextmanager
def cell_context(circuit: str, scheme: str) -> Iterator[None]:
    token = _cell.set(f"{circuit}/{scheme}")
    try:
        yield
    finally:
        _cell.reset(token)


def setup_logging(verbosity: int = 0) -> None:
    """Configure logging for the toolkit.

    Args:
        verbosity: 0 = WARNING, 1 (-v) = INFO, 2+ (-vv) = DEBUG.
    """
    if verbosity >= 2:
        level = logging.DEBUG
    elif verbosity >= 1:
        level = logging.INFO
    else:
        level = logging.WARNING

    handler = logging.StreamHandler(sys.stderr)
    handler.addFilter(CellFilter())
    handler.setFormatter(
        logging.Formatter(
            "%(asctime)s [%(levelname)s] %(name)s%(cell)s: %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S",
        )
    )

    root = logging.getLogger("dfssd")
    root.setLevel(level)
    root.handlers.clear()
    root.addHandler(handler)
