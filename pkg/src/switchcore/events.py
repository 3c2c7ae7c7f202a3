"""Single-threaded discrete-event loop on an integer nanosecond clock."""

from __future__ import annotations

import heapq
from typing import Any, Callable, List, Tuple

NS_PER_SEC = 1_000_000_000


def to_ns(seconds: float) -> int:
    return int(round(seconds * NS_PER_SEC))


def to_sec(ns: int) -> float:
    return ns / NS_PER_SEC


class Serializer:
    """Transmission times at a fixed bit rate.

    The sub-nanosecond remainder of every packet is carried into the next one,
    so back-to-back packets drain at exactly ``rate`` over any long run.
    """

    __slots__ = ("rate", "_carry")

    def __init__(self, rate_bps: float) -> None:
        rate = int(round(rate_bps))
        if rate <= 0:
            raise ValueError(f"serializer rate must be > 0, got {rate_bps}")
        self.rate = rate
        self._carry = 0

    def tx_ns(self, size_bytes: int) -> int:
        total = size_bytes * 8 * NS_PER_SEC + self._carry
        ns, self._carry = divmod(total, self.rate)
        return ns


Event = Tuple[int, int, int, int, Callable[..., Any], Tuple[Any, ...]]


class EventLoop:
    """Events fire in (time, port, flow, insertion order)."""

    __slots__ = ("now", "_heap", "_seq", "processed")

    def __init__(self) -> None:
        self.now = 0
        self._heap: List[Event] = []
        self._seq = 0
        self.processed = 0

    def at(self, time_ns: int, port: int, flow: int, fn: Callable[..., Any], *args: Any) -> None:
        if time_ns < self.now:
            raise ValueError(f"event scheduled in the past: t={time_ns} now={self.now}")
        self._seq += 1
        heapq.heappush(self._heap, (time_ns, port, flow, self._seq, fn, args))

    def after(self, delay_ns: int, port: int, flow: int, fn: Callable[..., Any], *args: Any) -> None:
        self.at(self.now + delay_ns, port, flow, fn, *args)

    def pending(self) -> int:
        return len(self._heap)

    def run(self, until_ns: int) -> int:
        """Process every event with time < until_ns; returns the count processed."""
        heap = self._heap
        pop = heapq.heappop
        count = 0
        while heap and heap[0][0] < until_ns:
            time_ns, _, _, _, fn, args = pop(heap)
            self.now = time_ns
            fn(*args)
            count += 1
        self.now = max(self.now, until_ns)
        self.processed += count
        return count
