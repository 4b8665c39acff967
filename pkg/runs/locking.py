"""One writer per output directory."""
from __future__ import annotations

import logging
import os
from contextlib import contextmanager
from pathlib import Path

from geodistill.exceptions import InvalidState

logger = logging.getLogger(__name__)

LOCK_NAME = '.geodistill.lock'


@contextmanager
def output_lock(directory: str | Path):
    """Hold ``<directory>/.geodistill.lock`` for the duration of the block."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY, 0o644)
    except FileExistsError as exc:
        raise InvalidState(f"{directory} is locked by another run (remove {lock} if that run is gone)") from exc
    try:
        os.write(fd, f"{os.getpid()}\n".encode('ascii'))
        os.close(fd)
        logger.debug("Acquired %s", lock)
        yield directory
    finally:
        lock.unlink(missing_ok=True)
        logger.debug("Released %s", lock)
