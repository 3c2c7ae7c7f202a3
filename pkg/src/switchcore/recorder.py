from __future__ import annotations

from typing import TYPE_CHECKING, Dict, List, Tuple

import numpy as np

from foqsim.timeseries import METRIC_UNITS, Record, TimeSeries

from .events import to_sec

if TYPE_CHECKING:
    from .core import Switch

OFFERED, INGRESS_DROP, FABRIC_DROP, OQ_ARRIVAL, EGRESS_DROP, DELIVERED = range(6)

_RATE_METRICS = (
    (OFFERED, "offered_rate"),
    (INGRESS_DROP, "ingress_drop_rate"),
    (FABRIC_DROP, "fabric_drop_rate"),
    (OQ_ARRIVAL, "oq_arrival_rate"),
    (EGRESS_DROP, "egress_drop_rate"),
    (DELIVERED, "throughput"),
)


class Recorder:
    """Bins switch activity into fixed intervals and emits TimeSeries rows."""

    def __init__(self, interval_ns: int) -> None:
        if interval_ns <= 0:
            raise ValueError(f"recorder interval must be > 0 ns, got {interval_ns}")
        self.interval_ns = interval_ns
        self.bytes: Dict[Tuple[int, int], List[int]] = {}
        self.delays: Dict[Tuple[int, int], List[float]] = {}
        self.records: List[Record] = []

    def track(self, port: int, flow: int) -> None:
        self.bytes.setdefault((port, flow), [0] * 6)
        self.delays.setdefault((port, flow), [])

    def add(self, port: int, flow: int, kind: int, size: int) -> None:
        self.bytes[(port, flow)][kind] += size

    def delay(self, port: int, flow: int, seconds: float) -> None:
        self.delays[(port, flow)].append(seconds)

    def flush(self, now_ns: int, switch: "Switch") -> None:
        t = to_sec(now_ns)
        scale = 8.0 / to_sec(self.interval_ns)
        out = self.records
        for (port, flow), counts in sorted(self.bytes.items()):
            for kind, name in _RATE_METRICS:
                out.append((t, name, port, flow, counts[kind] * scale, "bps"))
            if counts[OQ_ARRIVAL] > 0:
                cong = 1.0 - counts[DELIVERED] / counts[OQ_ARRIVAL]
                out.append((t, "rel_congestion", port, flow, cong, "ratio"))
            queue = switch.outports[port].queues[flow]
            out.append((t, "out_queue", port, flow, float(queue.backlog), "bytes"))
            if queue.controller is not None:
                prob = switch.drop_table.get(port, flow)
                out.append((t, "drop_prob", port, flow, prob, "probability"))
            if switch.outports[port].red is not None:
                out.append((t, "red_avg", port, flow, queue.red_avg, "bytes"))
            samples = self.delays[(port, flow)]
            if samples:
                p50, p99 = np.percentile(np.asarray(samples), [50.0, 99.0])
                out.append((t, "delay_p50", port, flow, float(p50), METRIC_UNITS["delay_p50"]))
                out.append((t, "delay_p99", port, flow, float(p99), METRIC_UNITS["delay_p99"]))
                samples.clear()
            for i in range(6):
                counts[i] = 0
        for port, occupied in enumerate(switch.fabric.port_occupancy):
            out.append((t, "fabric_queue", port, None, float(occupied), "bytes"))
        out.append((t, "fabric_occupancy", None, None, float(switch.fabric.occupancy), "bytes"))

    def to_timeseries(self) -> TimeSeries:
        return TimeSeries.from_records(self.records)
