"""Discrete-event loop in integer microseconds.

Events at the same instant run in scheduling order, which is what keeps a
run reproducible: nothing depends on wall-clock time or hash ordering.
"""

from __future__ import annotations

import heapq
from typing import Callable


class Simulator:
    def __init__(self, start_us: int = 0):
        self._now = start_us
        self._heap: list[tuple[int, int, Callable[[], None]]] = []
        self._seq = 0
        self.executed = 0

    def now_us(self) -> int:
        return self._now

    def schedule(self, at_us: int, fn: Callable[[], None]) -> None:
        if at_us < self._now:
            raise ValueError(f"cannot schedule in the past ({at_us} < {self._now})")
        self._seq += 1
        heapq.heappush(self._heap, (at_us, self._seq, fn))

    def call_later(self, delay_us: int, fn: Callable[[], None]) -> None:
        self.schedule(self._now + max(0, int(delay_us)), fn)

    def run_until(self, t_us: int) -> None:
        """Run every event due at or before ``t_us``; time then rests at ``t_us``."""
        heap = self._heap
        while heap and heap[0][0] <= t_us:
            at, _, fn = heapq.heappop(heap)
            self._now = at
            fn()
            self.executed += 1
        self._now = max(self._now, t_us)

    @property
    def pending(self) -> int:
        return len(self._heap)
