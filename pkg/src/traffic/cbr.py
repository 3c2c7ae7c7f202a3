from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

from switchcore.events import NS_PER_SEC, EventLoop, to_ns
from switchcore.packet import Packet, ServiceClass


@dataclass(frozen=True)
class CbrSource:
    rate: float
    packet_size: int
    start: float
    stop: float
    flow_id: int
    ingress_port: int
    egress_port: int
    service_class: ServiceClass = ServiceClass.ASSURED

    def __post_init__(self) -> None:
        if self.rate <= 0:
            raise ValueError(f"cbr rate must be > 0, got {self.rate} for flow {self.flow_id}")
        if self.packet_size <= 0:
            raise ValueError(f"cbr packet_size must be > 0, got {self.packet_size}")
        if self.stop < self.start:
            raise ValueError(f"cbr stop {self.stop} before start {self.start} for flow {self.flow_id}")


def cbr_departure_ns(source: CbrSource, k: int) -> int:
    """Time of the k-th packet: exact ideal time floored to the nanosecond."""
    rate = int(round(source.rate))
    return to_ns(source.start) + (k * source.packet_size * 8 * NS_PER_SEC) // rate


def cbr_departures(source: CbrSource) -> Iterator[int]:
    stop_ns = to_ns(source.stop)
    k = 0
    while True:
        t = cbr_departure_ns(source, k)
        if t >= stop_ns:
            return
        yield t
        k += 1


class CbrGenerator:
    """Self-rescheduling CBR emitter; keeps one pending event per source."""

    def __init__(self, source: CbrSource, loop: EventLoop, emit: Callable[[Packet], None]) -> None:
        self.source = source
        self.loop = loop
        self.emit = emit
        self.sent_packets = 0
        self._stop_ns = to_ns(source.stop)

    @property
    def sent_bytes(self) -> int:
        return self.sent_packets * self.source.packet_size

    def start(self) -> None:
        first = cbr_departure_ns(self.source, 0)
        if first < self._stop_ns:
            self.loop.at(first, self.source.ingress_port, self.source.flow_id, self._fire)

    def _fire(self) -> None:
        s = self.source
        packet = Packet(s.flow_id, s.ingress_port, s.egress_port, s.packet_size, s.service_class, self.loop.now, self.sent_packets)
        self.sent_packets += 1
        self.emit(packet)
        nxt = cbr_departure_ns(s, self.sent_packets)
        if nxt < self._stop_ns:
            self.loop.at(nxt, s.ingress_port, s.flow_id, self._fire)


def cbr_schedule(source: CbrSource, loop: EventLoop, emit: Callable[[Packet], None]) -> CbrGenerator:
    gen = CbrGenerator(source, loop, emit)
    gen.start()
    return gen
