"""File-based locking so two bench runs never share an output directory."""

from __future__ import annotations

import fcntl
import os
from pathlib import Path
from typing import IO, Optional

from dfssd.exceptions import LockError


class FileLock:
    """Exclusive, non-blocking fcntl lock.

    The holder's PID is written into the lock file so a stuck run can be
    identified::

        with FileLock(config.bench.resolve_lock_path()):
            pipeline.run(manifest)
    """

    def __init__(self, lock_path: Path) -> None:
        self._lock_path = Path(lock_path).expanduser()
        self._fp: Optional[IO[str]] = None

    @property
    def held(self) -> bool:
        return self._fp is not None

    def __enter__(self) -> FileLock:
        self._lock_path.parent.mkdir(parents=True, exist_ok=True)
        fp = open(self._lock_path, "a+")
        try:
            fcntl.flock(fp, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError as exc:
            fp.seek(0)
            holder = fp.read().strip() or "unknown"
            fp.close()
            raise LockError(
                f"Another bench run holds {self._lock_path} (pid {holder})"
            ) from exc
        fp.seek(0)
        fp.truncate()
        fp.write(str(os.getpid()))
        fp.flush()
        self._fp = fp
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        if self._fp is not None:
            fcntl.flock(self._fp, fcntl.LOCK_UN)
            self._fp.close()
            self._fp = None
        return None
