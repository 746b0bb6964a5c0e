import os
from contextlib import contextmanager
from typing import Iterator

from filelock import FileLock


@contextmanager
def atomic_write(path: str, mode: str = "w", timeout: float = 600.0) -> Iterator:
    """
    Write to `<path>.tmp` under `<path>.lock`, then rename into place.
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp_path = f"{path}.tmp"
    encoding = None if "b" in mode else "utf-8"
    newline = None if "b" in mode else "\n"

    with FileLock(f"{path}.lock", timeout=timeout):
        try:
            with open(tmp_path, mode, encoding=encoding, newline=newline) as handle:
                yield handle
                handle.flush()
                os.fsync(handle.fileno())
            os.replace(tmp_path, path)
        finally:
            if os.path.exists(tmp_path):
                os.remove(tmp_path)


def read_locked(path: str, mode: str = "r", timeout: float = 600.0):
    """Read a whole file while holding its lock"""
    encoding = None if "b" in mode else "utf-8"
    with FileLock(f"{path}.lock", timeout=timeout):
        with open(path, mode, encoding=encoding) as handle:
            return handle.read()
