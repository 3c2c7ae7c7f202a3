"""N-port switch with feedback output queuing.

Packet path: IN dropper -> shared-memory fabric (per output, per priority
FIFO) -> OUT line at s*c -> per-flow OUT queue (drop-tail or RED) ->
priority/WFQ scheduler -> external line at c. Every ``feedback.interval`` each
OUT queue with a controller is sampled, the controller runs, and the new
drop probability reaches every IN dropper after ``feedback.delay``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from tqdm import tqdm

from controller.controllers import Measurement, build_controller

from .events import EventLoop, Serializer, to_ns
from .fabric import Fabric, FabricResult
from .ingress import DropTable, IngressPort
from .outport import OutPort, OutQueue, RedParams
from .packet import Packet, ServiceClass
from .recorder import DELIVERED, EGRESS_DROP, FABRIC_DROP, INGRESS_DROP, OFFERED, OQ_ARRIVAL, Recorder
from .streams import RandomStreams

logger = logging.getLogger(__name__)


@dataclass
class SwitchConfig:
    num_ports: int
    line_rate: float
    speedup: float
    fabric_memory: int
    out_queue_size: int
    fabric_reserve: float = 0.05
    fabric_queues_per_port: int = 2
    num_classes: int = 3
    count_mode: str = "bytes"
    red: Optional[RedParams] = None
    weights: Dict[int, float] = field(default_factory=dict)
    default_weight: float = 1.0
    feedback: Dict[str, Any] = field(default_factory=lambda: {"mode": "off", "interval": 1e-3})

    def __post_init__(self) -> None:
        if self.num_ports < 1:
            raise ValueError(f"num_ports must be >= 1, got {self.num_ports}")
        if self.speedup <= 1:
            raise ValueError(f"speedup must be > 1, got {self.speedup}")
        if self.line_rate <= 0:
            raise ValueError(f"line_rate must be > 0, got {self.line_rate}")
        if self.fabric_memory <= 0:
            raise ValueError(f"fabric_memory must be > 0, got {self.fabric_memory}")
        if self.count_mode not in {"bytes", "packets"}:
            raise ValueError(f"count_mode must be bytes or packets, got {self.count_mode}")
        for flow_id, w in self.weights.items():
            if w <= 0:
                raise ValueError(f"WFQ weight must be > 0, got {w} for flow {flow_id}")

    @property
    def fabric_rate(self) -> float:
        return self.speedup * self.line_rate

    @property
    def feedback_mode(self) -> str:
        return str(self.feedback.get("mode", "off"))

    @classmethod
    def from_dict(cls, switch: Dict[str, Any], feedback: Dict[str, Any]) -> "SwitchConfig":
        qm = switch.get("queue_mgmt", {}) or {}
        red = None
        if qm.get("mode", "droptail") == "red":
            r = qm.get("red", {})
            red = RedParams(
                max_p=float(r["max_p"]),
                min_th=int(r["min_th"]),
                max_th=int(r["max_th"]),
                weight=float(r["weight"]),
                sample_interval=float(r["sample_interval"]),
            )
        sched = switch.get("scheduler", {}) or {}
        return cls(
            num_ports=int(switch["num_ports"]),
            line_rate=float(switch["line_rate"]),
            speedup=float(switch["speedup"]),
            fabric_memory=int(switch["fabric_memory"]),
            out_queue_size=int(switch["out_queue_size"]),
            fabric_reserve=float(switch.get("fabric_reserve", 0.05)),
            num_classes=int(switch.get("num_classes", 3)),
            count_mode=str(switch.get("count_mode", "bytes")),
            red=red,
            weights={int(k): float(v) for k, v in (sched.get("weights") or {}).items()},
            default_weight=float(sched.get("default_weight", 1.0)),
            feedback=dict(feedback),
        )


@dataclass
class FlowTotals:
    injected: int = 0
    ingress_dropped: int = 0
    fabric_dropped: int = 0
    egress_dropped: int = 0
    delivered: int = 0


class Switch:
    def __init__(
        self,
        config: SwitchConfig,
        loop: EventLoop,
        streams: RandomStreams,
        sample_interval: Optional[float] = None,
    ) -> None:
        self.config = config
        self.loop = loop
        n = config.num_ports
        self.fabric = Fabric(n, config.fabric_memory, config.fabric_reserve, config.fabric_queues_per_port)
        self.ingress = [IngressPort(i, streams.get(f"ingress/{i}")) for i in range(n)]
        self.outports = [
            OutPort(j, config.red, streams.get(f"red/{j}") if config.red is not None else None)
            for j in range(n)
        ]
        self.fabric_lines = [Serializer(config.fabric_rate) for _ in range(n)]
        self.out_lines = [Serializer(config.line_rate) for _ in range(n)]
        self.in_transfer: List[Optional[Packet]] = [None] * n
        self.drop_table = DropTable()
        self.totals: Dict[int, FlowTotals] = {}
        self.flow_ports: Dict[int, int] = {}
        self.interval_ns = to_ns(float(config.feedback.get("interval", 1e-3)))
        self.feedback_delay_ns = to_ns(float(config.feedback.get("delay", 0.0)))
        self.measure = str(config.feedback.get("measure", "relcong"))
        self.recorder = Recorder(to_ns(sample_interval)) if sample_interval else None
        self._started = False

    def add_flow(self, flow_id: int, egress_port: int, service_class: ServiceClass) -> None:
        if not 0 <= egress_port < self.config.num_ports:
            raise ValueError(f"egress_port {egress_port} out of range for {self.config.num_ports} ports")
        if flow_id in self.flow_ports:
            if self.flow_ports[flow_id] != egress_port:
                raise ValueError(f"flow {flow_id} already bound to egress {self.flow_ports[flow_id]}")
            return
        controller = None
        if service_class is not ServiceClass.PREMIUM:
            controller = build_controller(self.config.feedback, self.config.speedup, self.config.line_rate)
        weight = self.config.weights.get(flow_id, self.config.default_weight)
        queue = OutQueue(flow_id, service_class, weight, self.config.out_queue_size, controller)
        self.outports[egress_port].add_queue(queue)
        self.flow_ports[flow_id] = egress_port
        self.totals[flow_id] = FlowTotals()
        if self.recorder is not None:
            self.recorder.track(egress_port, flow_id)

    # packet path

    def inject(self, packet: Packet) -> None:
        """A packet reaches its ingress port at the current loop time."""
        size = packet.size
        flow = packet.flow_id
        port = packet.egress_port
        totals = self.totals[flow]
        rec = self.recorder
        totals.injected += size
        packet.switch_arrival = self.loop.now
        if rec is not None:
            rec.add(port, flow, OFFERED, size)
        if not self.ingress[packet.ingress_port].admit(packet, self.drop_table):
            totals.ingress_dropped += size
            if rec is not None:
                rec.add(port, flow, INGRESS_DROP, size)
            return
        if self.fabric.enqueue(packet) is FabricResult.DROPPED:
            totals.fabric_dropped += size
            if rec is not None:
                rec.add(port, flow, FABRIC_DROP, size)
            return
        if self.in_transfer[port] is None:
            self._start_transfer(port)

    def _start_transfer(self, port: int) -> None:
        packet = self.fabric.take(port)
        self.in_transfer[port] = packet
        if packet is None:
            return
        dt = self.fabric_lines[port].tx_ns(packet.size)
        self.loop.after(dt, port, packet.flow_id, self._transfer_done, port, packet)

    def _transfer_done(self, port: int, packet: Packet) -> None:
        self.fabric.release(packet)
        if self.recorder is not None:
            self.recorder.add(port, packet.flow_id, OQ_ARRIVAL, packet.size)
        outport = self.outports[port]
        if outport.arrive(packet):
            if not outport.busy:
                self._start_service(port)
        else:
            self.totals[packet.flow_id].egress_dropped += packet.size
            if self.recorder is not None:
                self.recorder.add(port, packet.flow_id, EGRESS_DROP, packet.size)
        self._start_transfer(port)

    def _start_service(self, port: int) -> None:
        outport = self.outports[port]
        flow = outport.select()
        if flow is None:
            outport.busy = False
            outport.in_service = None
            return
        packet = outport.pop(flow)
        outport.busy = True
        outport.in_service = packet
        dt = self.out_lines[port].tx_ns(packet.size)
        self.loop.after(dt, port, flow, self._service_done, port, packet)

    def _service_done(self, port: int, packet: Packet) -> None:
        now = self.loop.now
        queue = self.outports[port].queues[packet.flow_id]
        queue.counters.out_bytes += packet.size
        queue.counters.out_pkts += 1
        self.totals[packet.flow_id].delivered += packet.size
        if self.recorder is not None:
            self.recorder.add(port, packet.flow_id, DELIVERED, packet.size)
            self.recorder.delay(port, packet.flow_id, (now - packet.switch_arrival) / 1e9)
        self._start_service(port)
        if packet.sink is not None:
            packet.sink(packet, now)

    # periodic activity

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        for port in range(self.config.num_ports):
            self.loop.at(self.loop.now + self.interval_ns, port, -1, self._sample, port)
            if self.config.red is not None:
                red_ns = to_ns(self.config.red.sample_interval)
                self.loop.at(self.loop.now + red_ns, port, -1, self._red_sample, port, red_ns)
        if self.recorder is not None:
            self.loop.at(self.loop.now + self.recorder.interval_ns, -1, -1, self._flush)

    def _red_sample(self, port: int, period_ns: int) -> None:
        self.outports[port].red_sample()
        self.loop.after(period_ns, port, -1, self._red_sample, port, period_ns)

    def _flush(self) -> None:
        assert self.recorder is not None
        self.recorder.flush(self.loop.now, self)
        self.loop.after(self.recorder.interval_ns, -1, -1, self._flush)

    def _measurement(self, queue: OutQueue) -> Measurement:
        c = queue.counters
        seconds = self.interval_ns / 1e9
        in_rate = c.in_bytes * 8 / seconds
        out_rate = c.out_bytes * 8 / seconds
        if self.config.count_mode == "packets":
            arrived, served, dropped = c.in_pkts, c.out_pkts, c.dropped_pkts
        else:
            arrived, served, dropped = c.in_bytes, c.out_bytes, c.dropped_bytes
        congestion: Optional[float] = None
        if arrived > 0:
            if self.measure == "dropprob":
                congestion = dropped / arrived
            else:
                congestion = min(1.0, max(0.0, 1.0 - served / arrived))
        return Measurement(in_rate=in_rate, out_rate=out_rate, congestion=congestion)

    def sample_and_feedback(self, queue: OutQueue, port: int) -> Optional[float]:
        """Close one sampling interval of an OUT queue; returns the new drop probability."""
        m = self._measurement(queue)
        queue.service_rate_estimate = m.out_rate
        queue.counters.reset()
        if queue.controller is None:
            return None
        prob = queue.controller.update(m)
        if logger.isEnabledFor(logging.DEBUG):
            logger.debug(
                "feedback t=%.6f port=%d flow=%d congestion=%s drop_prob=%.6f",
                self.loop.now / 1e9,
                port,
                queue.flow_id,
                "none" if m.congestion is None else f"{m.congestion:.4f}",
                prob,
            )
        if self.feedback_delay_ns > 0:
            self.loop.after(self.feedback_delay_ns, port, queue.flow_id, self.drop_table.set, port, queue.flow_id, prob)
        else:
            self.drop_table.set(port, queue.flow_id, prob)
        return prob

    def _sample(self, port: int) -> None:
        for flow_id in sorted(self.outports[port].queues):
            self.sample_and_feedback(self.outports[port].queues[flow_id], port)
        self.loop.after(self.interval_ns, port, -1, self._sample, port)

    # accounting

    def resident_bytes(self) -> Dict[int, int]:
        resident = {flow: 0 for flow in self.totals}
        for port_queues in self.fabric.queues:
            for q in port_queues:
                for p in q:
                    resident[p.flow_id] += p.size
        for p in self.in_transfer:
            if p is not None:
                resident[p.flow_id] += p.size
        for outport in self.outports:
            for queue in outport.queues.values():
                resident[queue.flow_id] += queue.backlog
            if outport.in_service is not None:
                resident[outport.in_service.flow_id] += outport.in_service.size
        return resident

    def conservation_report(self) -> Dict[int, Dict[str, int]]:
        resident = self.resident_bytes()
        report: Dict[int, Dict[str, int]] = {}
        for flow, t in sorted(self.totals.items()):
            report[flow] = {
                "injected": t.injected,
                "ingress_dropped": t.ingress_dropped,
                "fabric_dropped": t.fabric_dropped,
                "egress_dropped": t.egress_dropped,
                "delivered": t.delivered,
                "resident": resident[flow],
            }
        return report

    def conservation_violations(self) -> List[str]:
        errors = []
        for flow, r in self.conservation_report().items():
            accounted = r["ingress_dropped"] + r["fabric_dropped"] + r["egress_dropped"] + r["delivered"] + r["resident"]
            if accounted != r["injected"]:
                errors.append(f"flow {flow}: injected={r['injected']} accounted={accounted}")
        return errors

    def run(self, until: float, progress: bool = False):
        """Process scheduled events up to ``until`` seconds and return the recorded series."""
        self.start()
        end_ns = to_ns(until)
        steps = 100 if progress else 1
        count = 0
        for i in tqdm(range(1, steps + 1), disable=not progress, desc="simulate", unit="%"):
            count += self.loop.run(end_ns * i // steps)
        if self.recorder is not None and end_ns % self.recorder.interval_ns == 0:
            # the bin ending exactly at the horizon
            self.recorder.flush(end_ns, self)
        logger.info("switch run until=%.6f events=%d", until, count)
        return self.recorder.to_timeseries() if self.recorder is not None else None
