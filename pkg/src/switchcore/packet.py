from __future__ import annotations

from enum import Enum
from typing import Any, Callable, Optional


class ServiceClass(str, Enum):
    PREMIUM = "premium"
    ASSURED = "assured"
    BEST_EFFORT = "best_effort"

    @property
    def fabric_priority(self) -> int:
        return 0 if self is ServiceClass.PREMIUM else 1


class Packet:
    """A packet inside the simulator. Times are integer nanoseconds."""

    __slots__ = (
        "flow_id",
        "ingress_port",
        "egress_port",
        "size",
        "service_class",
        "created_at",
        "seq",
        "switch_arrival",
        "sink",
    )

    def __init__(
        self,
        flow_id: int,
        ingress_port: int,
        egress_port: int,
        size: int,
        service_class: ServiceClass,
        created_at: int,
        seq: int = 0,
        sink: Optional[Callable[["Packet", int], Any]] = None,
    ) -> None:
        if size <= 0:
            raise ValueError(f"packet size must be > 0, got {size}")
        self.flow_id = flow_id
        self.ingress_port = ingress_port
        self.egress_port = egress_port
        self.size = size
        self.service_class = service_class
        self.created_at = created_at
        self.seq = seq
        self.switch_arrival = created_at
        self.sink = sink

    def __repr__(self) -> str:
        return (
            f"Packet(flow={self.flow_id}, {self.ingress_port}->{self.egress_port}, "
            f"size={self.size}, seq={self.seq})"
        )
