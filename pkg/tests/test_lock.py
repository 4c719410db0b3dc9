"""Tests for file locking."""

import os

import pytest

from dfssd.exceptions import LockError
from dfssd.services.lock import FileLock


class TestFileLock:
    def test_acquire_and_release(self, tmp_path):
        lock_path = tmp_path / "test.lock"
        with FileLock(lock_path) as lock:
            assert lock_path.exists()
            assert lock.held
        assert not lock.held

    def test_writes_pid(self, tmp_path):
        lock_path = tmp_path / "test.lock"
        with FileLock(lock_path):
            assert lock_path.read_text() == str(os.getpid())

    def test_double_lock_raises(self, tmp_path):
        lock_path = tmp_path / "test.lock"
        with FileLock(lock_path):
            with pytest.raises(LockError, match="Another bench run"):
                with FileLock(lock_path):
                    pass

    def test_reacquire_after_release(self, tmp_path):
        lock_path = tmp_path / "test.lock"
        with FileLock(lock_path):
            pass
        with FileLock(lock_path) as lock:
            assert lock.held

    def test_creates_parent_dirs(self, tmp_path):
        lock_path = tmp_path / "a" / "b" / "test.lock"
        with FileLock(lock_path):
            assert lock_path.parent.is_dir()

    def test_flock_failure_closes_file(self, tmp_path, mocker):
        mocker.patch("dfssd.services.lock.fcntl.flock", side_effect=OSError("busy"))
        lock = FileLock(tmp_path / "test.lock")
        with pytest.raises(LockError):
            lock.__enter__()
        assert lock._fp is None
