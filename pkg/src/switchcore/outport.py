"""OUT side of one switch port: per-flow queues, queue management and scheduling."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Any, Deque, Dict, List, Optional, Tuple

from .packet import Packet, ServiceClass
from .streams import RandomStream

logger = logging.getLogger(__name__)


class RedDecision(str, Enum):
    ENQUEUE = "enqueue"
    DROP = "drop"


@dataclass(frozen=True)
class RedParams:
    max_p: float
    min_th: int
    max_th: int
    weight: float
    sample_interval: float

    def __post_init__(self) -> None:
        if not self.min_th < self.max_th:
            raise ValueError(f"RED needs min_th < max_th, got {self.min_th} >= {self.max_th}")
        if not 0.0 < self.max_p <= 1.0:
            raise ValueError(f"RED max_p must be in (0, 1], got {self.max_p}")
        if not 0.0 < self.weight <= 1.0:
            raise ValueError(f"RED weight must be in (0, 1], got {self.weight}")
        if self.sample_interval <= 0:
            raise ValueError(f"RED sample_interval must be > 0, got {self.sample_interval}")


def red_drop_probability(avg: float, params: RedParams) -> float:
    if avg < params.min_th:
        return 0.0
    if avg >= params.max_th:
        return 1.0
    return params.max_p * (avg - params.min_th) / (params.max_th - params.min_th)


@dataclass
class IntervalCounters:
    in_bytes: int = 0
    out_bytes: int = 0
    dropped_bytes: int = 0
    in_pkts: int = 0
    out_pkts: int = 0
    dropped_pkts: int = 0

    def reset(self) -> None:
        self.in_bytes = self.out_bytes = self.dropped_bytes = 0
        self.in_pkts = self.out_pkts = self.dropped_pkts = 0


class OutQueue:
    __slots__ = (
        "flow_id",
        "service_class",
        "weight",
        "limit",
        "packets",
        "backlog",
        "red_avg",
        "counters",
        "controller",
        "service_rate_estimate",
        "last_finish",
    )

    def __init__(
        self, flow_id: int, service_class: ServiceClass, weight: float, limit: int, controller: Any = None
    ) -> None:
        if weight <= 0:
            raise ValueError(f"WFQ weight must be > 0, got {weight} for flow {flow_id}")
        self.flow_id = flow_id
        self.service_class = service_class
        self.weight = weight
        self.limit = limit
        self.packets: Deque[Tuple[float, Packet]] = deque()
        self.backlog = 0
        self.red_avg = 0.0
        self.counters = IntervalCounters()
        self.controller = controller
        self.service_rate_estimate = 0.0
        self.last_finish = 0.0


def red_arrival_decision(
    queue: OutQueue, packet_size: int, red_params: RedParams, rng: RandomStream
) -> RedDecision:
    if queue.backlog + packet_size > queue.limit:
        return RedDecision.DROP
    prob = red_drop_probability(queue.red_avg, red_params)
    if prob <= 0.0:
        return RedDecision.ENQUEUE
    if prob >= 1.0:
        return RedDecision.DROP
    return RedDecision.DROP if rng.uniform() < prob else RedDecision.ENQUEUE


class OutPort:
    """Premium queues in strict priority, every other queue under byte-weighted fair queuing.

    Fair queuing uses self-clocked finish tags: a packet's tag is
    max(virtual time, previous tag of its queue) + size / weight and the
    virtual time is the tag of the packet last selected.
    """

    def __init__(self, port: int, red: Optional[RedParams] = None, rng: Optional[RandomStream] = None) -> None:
        if red is not None and rng is None:
            raise ValueError("RED queue management needs a random stream")
        self.port = port
        self.red = red
        self.rng = rng
        self.queues: Dict[int, OutQueue] = {}
        self._premium: List[OutQueue] = []
        self._fair: List[OutQueue] = []
        self.virtual_time = 0.0
        self.busy = False
        self.in_service: Optional[Packet] = None

    def add_queue(self, queue: OutQueue) -> None:
        if queue.flow_id in self.queues:
            raise ValueError(f"duplicate OUT queue for flow {queue.flow_id} at port {self.port}")
        self.queues[queue.flow_id] = queue
        group = self._premium if queue.service_class is ServiceClass.PREMIUM else self._fair
        group.append(queue)
        group.sort(key=lambda q: q.flow_id)

    def arrive(self, packet: Packet) -> bool:
        queue = self.queues[packet.flow_id]
        size = packet.size
        c = queue.counters
        c.in_bytes += size
        c.in_pkts += 1
        if self.red is not None and queue.service_class is not ServiceClass.PREMIUM:
            admitted = red_arrival_decision(queue, size, self.red, self.rng) is RedDecision.ENQUEUE
        else:
            admitted = queue.backlog + size <= queue.limit
        if not admitted:
            c.dropped_bytes += size
            c.dropped_pkts += 1
            return False
        start = max(self.virtual_time, queue.last_finish)
        finish = start + size / queue.weight
        queue.last_finish = finish
        queue.packets.append((finish, packet))
        queue.backlog += size
        return True

    def select(self) -> Optional[int]:
        for q in self._premium:
            if q.packets:
                return q.flow_id
        best: Optional[OutQueue] = None
        best_tag = 0.0
        for q in self._fair:
            if q.packets:
                tag = q.packets[0][0]
                if best is None or tag < best_tag:
                    best, best_tag = q, tag
        return None if best is None else best.flow_id

    def pop(self, flow_id: int) -> Packet:
        queue = self.queues[flow_id]
        finish, packet = queue.packets.popleft()
        queue.backlog -= packet.size
        if queue.service_class is not ServiceClass.PREMIUM:
            self.virtual_time = finish
        return packet

    def red_sample(self) -> None:
        if self.red is None:
            return
        w = self.red.weight
        for q in self._fair:
            q.red_avg = (1.0 - w) * q.red_avg + w * q.backlog
