"""Injectable millisecond clocks."""
from __future__ import annotations

import time


class SystemClock:
    """Wall clock in milliseconds since the Unix epoch."""

    def now_ms(self) -> int:
        return time.time_ns() // 1_000_000


class StepClock:
    """Deterministic clock: ``start``, ``start + step``, ``start + 2*step``, ..."""

    def __init__(self, start: int = 1_600_000_000_000, step: int = 1000):
        self.start = start
        self.step = step
        self.ticks = 0

    def now_ms(self) -> int:
        t = self.start + self.ticks * self.step
        self.ticks += 1
        return t


class FrozenClock:
    def __init__(self, t: int):
        self.t = t

    def now_ms(self) -> int:
        return self.t
