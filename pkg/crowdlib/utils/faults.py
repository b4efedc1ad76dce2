"""
Named fault switches for verifying that the check suites catch broken math.

Faults are process-wide and off unless enabled inside `inject`.
"""
from contextlib import contextmanager
from typing import Iterator

from crowdlib.utils.exceptions import UnknownFaultError

CHANNEL_NORM = "channel-norm"
KNOWN_FAULTS = (CHANNEL_NORM,)

_active: set[str] = set()


def is_active(name: str) -> bool:
    return name in _active


@contextmanager
def inject(name: str) -> Iterator[None]:
    if name not in KNOWN_FAULTS:
        raise UnknownFaultError(
            f"unknown fault {name!r}; known faults: {', '.join(KNOWN_FAULTS)}. "
        )
    previous = name in _active
    _active.add(name)
    try:
        yield
    finally:
        if not previous:
            _active.discard(name)
