from __future__ import annotations

from typing import Dict, Tuple

from .packet import Packet, ServiceClass
from .streams import RandomStream


def ingress_admit(packet: Packet, drop_prob: float, rng: RandomStream) -> bool:
    """Random early drop at the IN line. Premium traffic bypasses the dropper."""
    if packet.service_class is ServiceClass.PREMIUM or drop_prob <= 0.0:
        return True
    if drop_prob >= 1.0:
        return False
    return rng.uniform() >= drop_prob


class DropTable:
    """Drop probability per (egress port, flow) as last signalled by the OUT samplers.

    Every IN dropper reads the same table, which models the broadcast of each
    feedback signal to all ingress ports.
    """

    def __init__(self) -> None:
        self._probs: Dict[Tuple[int, int], float] = {}

    def get(self, egress_port: int, flow_id: int) -> float:
        return self._probs.get((egress_port, flow_id), 0.0)

    def set(self, egress_port: int, flow_id: int, prob: float) -> None:
        if not 0.0 <= prob <= 1.0:
            raise ValueError(f"drop probability out of range: {prob}")
        self._probs[(egress_port, flow_id)] = prob


class IngressPort:
    __slots__ = ("index", "rng", "admitted_bytes", "dropped_bytes")

    def __init__(self, index: int, rng: RandomStream) -> None:
        self.index = index
        self.rng = rng
        self.admitted_bytes = 0
        self.dropped_bytes = 0

    def admit(self, packet: Packet, table: DropTable) -> bool:
        ok = ingress_admit(packet, table.get(packet.egress_port, packet.flow_id), self.rng)
        if ok:
            self.admitted_bytes += packet.size
        else:
            self.dropped_bytes += packet.size
        return ok
