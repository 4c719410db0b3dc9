"""SQLite store for bench results, so an interrupted bench can resume."""

from __future__ import annotations

import json
import logging
import sqlite3
from pathlib import Path
from typing import Optional

logger = logging.getLogger(__name__)


_RESULTS_TABLE = """
CREATE TABLE IF NOT EXISTS bench_results (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    circuit TEXT NOT NULL,
    scheme TEXT NOT NULL,
    seed INTEGER NOT NULL DEFAULT 0,
    termination TEXT,
    iterations INTEGER DEFAULT 0,
    last_dis_len INTEGER DEFAULT 0,
    time_s REAL DEFAULT 0,
    key TEXT,
    error_message TEXT,
    report_json TEXT,
    created_at TEXT NOT NULL DEFAULT (datetime('now')),
    updated_at TEXT NOT NULL DEFAULT (datetime('now')),
    UNIQUE(circuit, scheme, seed)
);
"""

_ARTIFACTS_TABLE = """
CREATE TABLE IF NOT EXISTS artifacts (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    result_id INTEGER NOT NULL,
    kind TEXT NOT NULL,
    path TEXT NOT NULL,
    FOREIGN KEY (result_id) REFERENCES bench_results(id),
    UNIQUE(result_id, kind)
);
"""


def init_db(db_path: Path | str) -> sqlite3.Connection:
    """Create or open the database, enable WAL mode, and create tables."""
    target = str(db_path)
    if target != ":memory:":
        Path(target).parent.mkdir(parents=True, exist_ok=True)
    conn = sqlite3.connect(target, timeout=5.0, check_same_thread=False)
    conn.row_factory = sqlite3.Row
    if target != ":memory:":
        conn.execute("PRAGMA journal_mode=WAL;")
    conn.execute(_RESULTS_TABLE)
    conn.execute(_ARTIFACTS_TABLE)
    conn.commit()
    return conn


class ResultRepository:
    """CRUD operations for the bench_results table."""

    def __init__(self, conn: sqlite3.Connection) -> None:
        self._conn = conn

    def upsert_result(
        self,
        circuit: str,
        scheme: str,
        seed: int = 0,
        *,
        termination: Optional[str] = None,
        iterations: int = 0,
        last_dis_len: int = 0,
        time_s: float = 0.0,
        key: Optional[str] = None,
        error_message: Optional[str] = None,
        report: Optional[dict] = None,
    ) -> int:
        self._conn.execute(
            """INSERT INTO bench_results
                   (circuit, scheme, seed, termination, iterations, last_dis_len,
                    time_s, key, error_message, report_json)
               VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
               ON CONFLICT(circuit, scheme, seed) DO UPDATE SET
                   termination = excluded.termination,
                   iterations = excluded.iterations,
                   last_dis_len = excluded.last_dis_len,
                   time_s = excluded.time_s,
                   key = excluded.key,
                   error_message = excluded.error_message,
                   report_json = excluded.report_json,
                   updated_at = datetime('now')""",
            (
                circuit, scheme, seed, termination, iterations, last_dis_len, time_s,
                key, error_message, json.dumps(report) if report is not None else None,
            ),
        )
        self._conn.commit()
        row = self._conn.execute(
            "SELECT id FROM bench_results WHERE circuit = ? AND scheme = ? AND seed = ?",
            (circuit, scheme, seed),
        ).fetchone()
        return int(row["id"])

    def get_result(self, circuit: str, scheme: str, seed: int = 0) -> Optional[dict]:
        row = self._conn.execute(
            "SELECT * FROM bench_results WHERE circuit = ? AND scheme = ? AND seed = ?",
            (circuit, scheme, seed),
        ).fetchone()
        return dict(row) if row else None

    def is_done(self, circuit: str, scheme: str, seed: int = 0) -> bool:
        """A cell counts as done once it has a termination and no error."""
        row = self.get_result(circuit, scheme, seed)
        return bool(row and row["termination"] and not row["error_message"])

    def get_results(self, seed: Optional[int] = None) -> list[dict]:
        if seed is None:
            rows = self._conn.execute("SELECT * FROM bench_results ORDER BY id").fetchall()
        else:
            rows = self._conn.execute(
                "SELECT * FROM bench_results WHERE seed = ? ORDER BY id", (seed,)
            ).fetchall()
        return [dict(r) for r in rows]

    def get_failed(self) -> list[dict]:
        rows = self._conn.execute(
            "SELECT * FROM bench_results WHERE error_message IS NOT NULL ORDER BY id"
        ).fetchall()
        return [dict(r) for r in rows]

    def delete_all(self) -> int:
        cur = self._conn.execute("DELETE FROM bench_results")
        self._conn.execute("DELETE FROM artifacts")
        self._conn.commit()
        return cur.rowcount


class ArtifactRepository:
    """Paths of files written for a bench cell (locked netlist, key, report)."""

    def __init__(self, conn: sqlite3.Connection) -> None:
        self._conn = conn

    def add(self, result_id: int, kind: str, path: str) -> None:
        self._conn.execute(
            """INSERT INTO artifacts (result_id, kind, path) VALUES (?, ?, ?)
               ON CONFLICT(result_id, kind) DO UPDATE SET path = excluded.path""",
            (result_id, kind, path),
        )
        self._conn.commit()

    def get_for_result(self, result_id: int) -> dict[str, str]:
        rows = self._conn.execute(
            "SELECT kind, path FROM artifacts WHERE result_id = ?", (result_id,)
        ).fetchall()
        return {row["kind"]: row["path"] for row in rows}


class ResultStore:
    """Facade providing access to both repositories from a single connection."""

    def __init__(self, conn: sqlite3.Connection) -> None:
        self.conn = conn
        self.results = ResultRepository(conn)
        self.artifacts = ArtifactRepository(conn)

    @classmethod
    def from_path(cls, db_path: Path | str) -> ResultStore:
        return cls(init_db(db_path))

    def close(self) -> None:
        self.conn.close()
