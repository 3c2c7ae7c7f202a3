from __future__ import annotations

import logging
from collections import deque
from enum import Enum
from typing import Deque, List, Optional

from .packet import Packet

logger = logging.getLogger(__name__)


class FabricResult(str, Enum):
    QUEUED = "queued"
    DROPPED = "dropped"


class Fabric:
    """Shared-memory fabric with one FIFO per (output port, priority).

    Priority 0 may use the whole memory; lower priorities stop at
    ``memory * (1 - reserve_fraction)``. A packet occupies memory from
    enqueue until its transfer over the OUT line completes. Arrivals that do
    not fit are dropped regardless of flow.
    """

    def __init__(self, num_ports: int, memory: int, reserve_fraction: float = 0.05, num_priorities: int = 2) -> None:
        if memory <= 0:
            raise ValueError(f"fabric memory must be > 0, got {memory}")
        if not 0.0 <= reserve_fraction < 1.0:
            raise ValueError(f"fabric reserve fraction must be in [0, 1), got {reserve_fraction}")
        self.memory = memory
        self.num_priorities = num_priorities
        self.limits = [memory] + [int(memory * (1.0 - reserve_fraction))] * (num_priorities - 1)
        self.queues: List[List[Deque[Packet]]] = [
            [deque() for _ in range(num_priorities)] for _ in range(num_ports)
        ]
        self.occupancy = 0
        self.port_occupancy = [0] * num_ports
        self.dropped_bytes = 0

    def enqueue(self, packet: Packet) -> FabricResult:
        prio = min(packet.service_class.fabric_priority, self.num_priorities - 1)
        if self.occupancy + packet.size > self.limits[prio]:
            self.dropped_bytes += packet.size
            return FabricResult.DROPPED
        self.queues[packet.egress_port][prio].append(packet)
        self.occupancy += packet.size
        self.port_occupancy[packet.egress_port] += packet.size
        return FabricResult.QUEUED

    def take(self, port: int) -> Optional[Packet]:
        """Head of the highest-priority non-empty queue of ``port``; memory stays held."""
        for q in self.queues[port]:
            if q:
                return q.popleft()
        return None

    def release(self, packet: Packet) -> None:
        self.occupancy -= packet.size
        self.port_occupancy[packet.egress_port] -= packet.size

    def backlog(self, port: int) -> int:
        return sum(len(q) for q in self.queues[port])
