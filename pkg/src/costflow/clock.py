"""Virtual clock.

The engine owns simulated time and advances it event by event; nothing in
the core ever sleeps, so tests and replays are independent of wall-clock
speed.
"""

from __future__ import annotations


class VirtualClock:
    """Monotonic simulated clock, in decimal seconds since run start."""

    def __init__(self, start: float = 0.0) -> None:
        self._now = float(start)

    def now(self) -> float:
        return self._now

    def advance_to(self, target: float) -> None:
        """Move time forward to ``target``. Moving backwards is a bug."""
        if target < self._now:
            raise ValueError(f"clock cannot move backwards: {self._now} -> {target}")
        self._now = float(target)


def hours_to_seconds(hours: float) -> float:
    return hours * 3600.0


def seconds_to_hours(seconds: float) -> float:
    return seconds / 3600.0
