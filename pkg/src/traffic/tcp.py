"""Simplified Reno sources.

The window algorithm (``tcp_on_ack``/``tcp_on_loss``) is kept apart from
the connection plumbing so it can be checked in isolation. Congestion
avoidance grows the window by one packet per window's worth of acks, the
integer form of cwnd += 1/cwnd per ack. Receiver window is unlimited,
acks are immediate and cumulative, and the ack path never loses packets.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Set

from switchcore.events import EventLoop, Serializer, to_ns
from switchcore.packet import Packet, ServiceClass

logger = logging.getLogger(__name__)


class TcpState(str, Enum):
    SLOW_START = "slow_start"
    CONGESTION_AVOIDANCE = "congestion_avoidance"
    RECOVERY = "recovery"


class LossKind(str, Enum):
    TRIPLE_DUP = "triple_dup"
    TIMEOUT = "timeout"


@dataclass
class TcpSource:
    packet_size: int
    rtt_base: float
    start_time: float = 0.0
    cwnd: int = 1
    ssthresh: int = 64
    state: TcpState = TcpState.SLOW_START
    ack_credit: int = 0

    def __post_init__(self) -> None:
        if self.packet_size <= 0:
            raise ValueError(f"tcp packet_size must be > 0, got {self.packet_size}")
        if self.cwnd < 1:
            raise ValueError(f"cwnd must be >= 1, got {self.cwnd}")


def tcp_on_ack(source: TcpSource) -> TcpSource:
    """Window growth for one new (non-duplicate) ack."""
    if source.state is TcpState.RECOVERY:
        source.state = TcpState.CONGESTION_AVOIDANCE
        source.cwnd = max(source.ssthresh, 1)
        source.ack_credit = 0
    elif source.state is TcpState.SLOW_START:
        source.cwnd += 1
        if source.cwnd >= source.ssthresh:
            source.state = TcpState.CONGESTION_AVOIDANCE
            source.ack_credit = 0
    else:
        source.ack_credit += 1
        if source.ack_credit >= source.cwnd:
            source.cwnd += 1
            source.ack_credit = 0
    return source


def tcp_on_loss(source: TcpSource, kind: LossKind) -> TcpSource:
    source.ssthresh = max(source.cwnd // 2, 2)
    source.ack_credit = 0
    if kind is LossKind.TRIPLE_DUP:
        source.cwnd = source.ssthresh
        source.state = TcpState.RECOVERY
    else:
        source.cwnd = 1
        source.state = TcpState.SLOW_START
    return source


@dataclass(frozen=True)
class RtoParams:
    initial: float = 1.0
    minimum: float = 0.2
    max_backoff: int = 64


class AccessLink:
    """FIFO rate limiter in front of an ingress port; departures are computed, not queued."""

    def __init__(self, rate: float, loop: EventLoop, deliver: Callable[[Packet], None]) -> None:
        self.loop = loop
        self.deliver = deliver
        self.serializer = Serializer(rate)
        self.next_free = 0
        self.sent_bytes = 0

    def send(self, packet: Packet) -> None:
        start = max(self.loop.now, self.next_free)
        self.next_free = start + self.serializer.tx_ns(packet.size)
        self.sent_bytes += packet.size
        self.loop.at(self.next_free, packet.ingress_port, packet.flow_id, self.deliver, packet)


class TcpConnection:
    """One sender/receiver pair. Data leaves through ``link``; after the switch
    egress it reaches the receiver ``one_way_delay`` later and the ack returns
    after the same delay."""

    def __init__(
        self,
        source: TcpSource,
        conn_id: int,
        flow_id: int,
        ingress_port: int,
        egress_port: int,
        loop: EventLoop,
        link: AccessLink,
        one_way_delay: float,
        rto: RtoParams = RtoParams(),
        service_class: ServiceClass = ServiceClass.ASSURED,
    ) -> None:
        self.source = source
        self.conn_id = conn_id
        self.flow_id = flow_id
        self.ingress_port = ingress_port
        self.egress_port = egress_port
        self.loop = loop
        self.link = link
        self.delay_ns = to_ns(one_way_delay)
        self.rto_params = rto
        self.service_class = service_class

        self.snd_una = 0
        self.snd_nxt = 0
        self.max_sent = 0
        self.recover = 0
        self.dupacks = 0
        self.srtt: Optional[float] = None
        self.rttvar = 0.0
        self.rto = rto.initial
        self.backoff = 1
        self.timed_seq: Optional[int] = None
        self.timed_at = 0
        self.deadline: Optional[int] = None
        self._timer_token = 0
        self._timer_at: Optional[int] = None

        self.rcv_next = 0
        self.out_of_order: Set[int] = set()

        self.sent_packets = 0
        self.retransmits = 0
        self.timeouts = 0
        self.fast_retransmits = 0

    @property
    def acked_bytes(self) -> int:
        return self.snd_una * self.source.packet_size

    def start(self) -> None:
        self.loop.at(to_ns(self.source.start_time), self.ingress_port, self.flow_id, self._send_window)

    # sender

    def _send_window(self) -> None:
        while self.snd_nxt < self.snd_una + self.source.cwnd:
            self._transmit(self.snd_nxt)
            self.snd_nxt += 1

    def _transmit(self, seq: int) -> None:
        now = self.loop.now
        if seq < self.max_sent:
            self.retransmits += 1
        else:
            self.max_sent = seq + 1
            if self.timed_seq is None:
                self.timed_seq = seq
                self.timed_at = now
        packet = Packet(
            self.flow_id, self.ingress_port, self.egress_port, self.source.packet_size,
            self.service_class, now, seq, self._on_egress,
        )
        self.sent_packets += 1
        self.link.send(packet)
        if self.deadline is None:
            self._arm(now + to_ns(self.rto * self.backoff))

    def _on_ack(self, ack: int) -> None:
        now = self.loop.now
        if ack > self.snd_una:
            if self.timed_seq is not None and ack > self.timed_seq:
                self._rtt_sample((now - self.timed_at) / 1e9)
                self.timed_seq = None
            self.snd_una = ack
            if self.snd_nxt < self.snd_una:
                self.snd_nxt = self.snd_una
            self.dupacks = 0
            self.backoff = 1
            tcp_on_ack(self.source)
            if self.snd_una < self.max_sent:
                self._arm(now + to_ns(self.rto))
            else:
                self.deadline = None
            self._send_window()
        elif ack == self.snd_una and self.snd_una < self.max_sent:
            self.dupacks += 1
            if (
                self.dupacks == 3
                and self.source.state is not TcpState.RECOVERY
                and self.snd_una >= self.recover
            ):
                self.fast_retransmits += 1
                tcp_on_loss(self.source, LossKind.TRIPLE_DUP)
                self.timed_seq = None
                self.recover = self.max_sent
                self._transmit(self.snd_una)

    def _rtt_sample(self, rtt: float) -> None:
        if self.srtt is None:
            self.srtt = rtt
            self.rttvar = rtt / 2.0
        else:
            self.rttvar = 0.75 * self.rttvar + 0.25 * abs(self.srtt - rtt)
            self.srtt = 0.875 * self.srtt + 0.125 * rtt
        self.rto = max(self.rto_params.minimum, self.srtt + 4.0 * self.rttvar)

    # retransmission timer: at most one live event, re-armed lazily

    def _arm(self, deadline: int) -> None:
        self.deadline = deadline
        if self._timer_at is None or deadline < self._timer_at:
            self._timer_token += 1
            self._timer_at = deadline
            self.loop.at(deadline, self.ingress_port, self.flow_id, self._on_timer, self._timer_token)

    def _on_timer(self, token: int) -> None:
        if token != self._timer_token:
            return
        self._timer_at = None
        if self.deadline is None:
            return
        now = self.loop.now
        if now < self.deadline:
            self._arm(self.deadline)
            return
        self.timeouts += 1
        tcp_on_loss(self.source, LossKind.TIMEOUT)
        self.backoff = min(self.backoff * 2, self.rto_params.max_backoff)
        self.timed_seq = None
        self.dupacks = 0
        self.recover = self.max_sent
        self.snd_nxt = self.snd_una
        self.deadline = None
        self._send_window()
        if self.deadline is None:
            self._arm(now + to_ns(self.rto * self.backoff))

    # receiver

    def _on_egress(self, packet: Packet, now: int) -> None:
        self.loop.after(self.delay_ns, self.egress_port, self.flow_id, self._receive, packet.seq)

    def _receive(self, seq: int) -> None:
        if seq == self.rcv_next:
            self.rcv_next += 1
            while self.rcv_next in self.out_of_order:
                self.out_of_order.remove(self.rcv_next)
                self.rcv_next += 1
        elif seq > self.rcv_next:
            self.out_of_order.add(seq)
        self.loop.after(self.delay_ns, self.ingress_port, self.flow_id, self._on_ack, self.rcv_next)
