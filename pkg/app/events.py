from __future__ import annotations

import heapq
from typing import Any, Callable, List, Tuple

from app.errors import InvariantBreach

_Event = Tuple[int, int, Callable[..., Any], Tuple[Any, ...]]


class EventQueue:
    """
    Single-threaded discrete-event loop.
    Events run in (time, insertion sequence) order, so same-cycle events keep
    the order they were scheduled in.
    """

    __slots__ = ("_heap", "_seq", "now")

    def __init__(self) -> None:
        self._heap: List[_Event] = []
        self._seq = 0
        self.now = 0

    def __len__(self) -> int:
        return len(self._heap)

    def schedule(self, time: int, fn: Callable[..., Any], *args: Any) -> None:
        if time < self.now:
            raise InvariantBreach(f"event scheduled in the past ({time} < {self.now})")
        heapq.heappush(self._heap, (time, self._seq, fn, args))
        self._seq += 1

    def peek_time(self) -> int | None:
        return self._heap[0][0] if self._heap else None

    def run_until(self, t: int) -> None:
        """Run every event with time <= t, then park the clock at t."""
        heap = self._heap
        while heap and heap[0][0] <= t:
            time, _, fn, args = heapq.heappop(heap)
            self.now = time
            fn(*args)
        if t > self.now:
            self.now = t

    def run(self) -> None:
        heap = self._heap
        while heap:
            time, _, fn, args = heapq.heappop(heap)
            self.now = time
            fn(*args)
