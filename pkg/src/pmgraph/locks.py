"""Reader-writer locks for the per-section concurrency scheme."""

import threading
from contextlib import contextmanager


class RWLock:
    """Writer-preferring reader-writer lock."""

    def __init__(self):
        self._cond = threading.Condition(threading.Lock())
        self._readers = 0
        self._writer = False
        self._waiting_writers = 0

    def acquire_read(self):
        with self._cond:
            while self._writer or self._waiting_writers:
                self._cond.wait()
            self._readers += 1

    def release_read(self):
        with self._cond:
            self._readers -= 1
            if self._readers == 0:
                self._cond.notify_all()

    def acquire_write(self):
        with self._cond:
            self._waiting_writers += 1
            while self._writer or self._readers:
                self._cond.wait()
            self._waiting_writers -= 1
            self._writer = True

    def release_write(self):
        with self._cond:
            self._writer = False
            self._cond.notify_all()

    @contextmanager
    def read(self):
        self.acquire_read()
        try:
            yield
        finally:
            self.release_read()

    @contextmanager
    def write(self):
        self.acquire_write()
        try:
            yield
        finally:
            self.release_write()


class SectionLock(RWLock):
    """RW lock plus the condition a rebalancing writer raises on its origin section.

    While the flag is up, other writers of the section wait instead of
    piling onto a section that is about to be rewritten.
    """

    def __init__(self):
        super().__init__()
        self._rebal = threading.Condition(threading.Lock())
        self._rebalancing = False

    def begin_rebalance(self):
        with self._rebal:
            while self._rebalancing:
                self._rebal.wait()
            self._rebalancing = True

    def end_rebalance(self):
        with self._rebal:
            self._rebalancing = False
            self._rebal.notify_all()

    def wait_rebalance(self):
        if self._rebalancing:
            with self._rebal:
                while self._rebalancing:
                    self._rebal.wait()


class NullLock:
    """Drop-in for single-threaded deterministic runs."""

    def acquire_read(self):
        pass

    release_read = acquire_write = release_write = acquire_read
    begin_rebalance = end_rebalance = wait_rebalance = acquire_read

    @contextmanager
    def read(self):
        yield

    write = read


def acquire_ascending(locks, ids):
    """Write-lock sections in strictly ascending id order (deadlock freedom)."""
    for i in sorted(ids):
        locks[i].acquire_write()


def release_all(locks, ids):
    for i in sorted(ids, reverse=True):
        locks[i].release_write()
