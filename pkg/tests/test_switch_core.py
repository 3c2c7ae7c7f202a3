import pytest

from controller.law import FeedbackSignal
from switchcore.core import Switch, SwitchConfig
from switchcore.events import EventLoop, Serializer, to_ns
from switchcore.fabric import Fabric, FabricResult
from switchcore.ingress import DropTable, ingress_admit
from switchcore.outport import (
    OutPort,
    OutQueue,
    RedDecision,
    RedParams,
    red_arrival_decision,
    red_drop_probability,
)
from switchcore.packet import Packet, ServiceClass
from switchcore.streams import RandomStream, RandomStreams
from traffic.cbr import CbrGenerator, CbrSource

GEARBOX = {"mode": "gearbox", "interval": 1e-3, "gearbox": {"d_max": 0.17, "d_min": 0.02}}
OFF = {"mode": "off", "interval": 1e-3}


def _packet(flow=1, size=100, cls=ServiceClass.ASSURED, egress=0):
    return Packet(flow, 1, egress, size, cls, 0)


def _switch(feedback=None, seed=1, **kwargs):
    params = dict(num_ports=3, line_rate=10e6, speedup=1.28, fabric_memory=5000, out_queue_size=2000)
    params.update(kwargs)
    config = SwitchConfig(feedback=dict(feedback or OFF), **params)
    loop = EventLoop()
    return Switch(config, loop, RandomStreams(seed), sample_interval=1e-3), loop


def _cbr(switch, loop, flow, rate, ingress, cls=ServiceClass.ASSURED, size=100, start=0.0, stop=1.0):
    switch.add_flow(flow, 0, cls)
    src = CbrSource(rate=rate, packet_size=size, start=start, stop=stop, flow_id=flow,
                    ingress_port=ingress, egress_port=0, service_class=cls)
    gen = CbrGenerator(src, loop, switch.inject)
    gen.start()
    return gen


RED = RedParams(max_p=0.5, min_th=1000, max_th=3000, weight=0.1, sample_interval=1e-3)


def test_ingress_admit_edges():
    rng = RandomStream(1, "test")
    assert all(ingress_admit(_packet(), 0.0, rng) for _ in range(100))
    assert not any(ingress_admit(_packet(), 1.0, rng) for _ in range(100))
    assert all(ingress_admit(_packet(cls=ServiceClass.PREMIUM), 1.0, rng) for _ in range(100))


def test_ingress_admit_fraction_matches_probability():
    rng = RandomStream(2024, "ingress/1")
    packet = _packet()
    trials = 1_000_000
    admitted = sum(ingress_admit(packet, 0.5, rng) for _ in range(trials))
    assert admitted / trials == pytest.approx(0.5, abs=0.002)


def test_drop_table_defaults_and_range():
    table = DropTable()
    assert table.get(0, 1) == 0.0
    table.set(0, 1, 0.25)
    assert table.get(0, 1) == 0.25
    with pytest.raises(ValueError):
        table.set(0, 1, 1.5)


def test_fabric_enqueue_and_reserve():
    fabric = Fabric(num_ports=2, memory=1000, reserve_fraction=0.05)
    assert fabric.enqueue(_packet(size=900)) is FabricResult.QUEUED
    # low priority stops at 950 bytes, premium may use the reserve
    assert fabric.enqueue(_packet(size=100)) is FabricResult.DROPPED
    assert fabric.enqueue(_packet(flow=0, size=100, cls=ServiceClass.PREMIUM)) is FabricResult.QUEUED
    assert fabric.occupancy == 1000
    assert fabric.enqueue(_packet(flow=0, size=1, cls=ServiceClass.PREMIUM)) is FabricResult.DROPPED
    assert fabric.dropped_bytes == 101


def test_fabric_take_is_strict_priority_and_holds_memory():
    fabric = Fabric(num_ports=1, memory=10_000)
    fabric.enqueue(_packet(flow=1))
    fabric.enqueue(_packet(flow=0, cls=ServiceClass.PREMIUM))
    fabric.enqueue(_packet(flow=2))
    first = fabric.take(0)
    assert first.flow_id == 0
    assert fabric.occupancy == 300
    fabric.release(first)
    assert fabric.occupancy == 200
    assert [fabric.take(0).flow_id, fabric.take(0).flow_id] == [1, 2]
    assert fabric.take(0) is None


def test_out_scheduler_idle_and_premium_first():
    port = OutPort(0)
    port.add_queue(OutQueue(0, ServiceClass.PREMIUM, 1.0, 10_000))
    port.add_queue(OutQueue(1, ServiceClass.ASSURED, 1.0, 10_000))
    assert port.select() is None
    port.arrive(_packet(flow=1))
    port.arrive(_packet(flow=0, cls=ServiceClass.PREMIUM))
    assert port.select() == 0
    port.pop(0)
    assert port.select() == 1


def test_wfq_share_follows_weights():
    port = OutPort(0)
    port.add_queue(OutQueue(1, ServiceClass.ASSURED, 6.0, 10**9))
    port.add_queue(OutQueue(2, ServiceClass.ASSURED, 1.0, 10**9))
    served = {1: 0, 2: 0}
    for _ in range(7000):
        for flow in (1, 2):
            while len(port.queues[flow].packets) < 2:
                port.arrive(_packet(flow=flow, size=64))
        flow = port.select()
        served[flow] += port.pop(flow).size
    assert served[1] / served[2] == pytest.approx(6.0, rel=0.02)


def test_out_queue_drop_tail_limit():
    port = OutPort(0)
    port.add_queue(OutQueue(1, ServiceClass.ASSURED, 1.0, 250))
    assert port.arrive(_packet(size=100))
    assert port.arrive(_packet(size=100))
    assert not port.arrive(_packet(size=100))
    c = port.queues[1].counters
    assert (c.in_bytes, c.dropped_bytes, c.dropped_pkts) == (300, 100, 1)


def test_red_drop_probability_ramp():
    assert red_drop_probability(999.0, RED) == 0.0
    assert red_drop_probability(2000.0, RED) == pytest.approx(0.25)
    assert red_drop_probability(3000.0, RED) == 1.0


def test_red_arrival_decision_thresholds():
    rng = RandomStream(3, "red/0")
    queue = OutQueue(1, ServiceClass.ASSURED, 1.0, 10_000)
    queue.red_avg = 500.0
    assert all(red_arrival_decision(queue, 100, RED, rng) is RedDecision.ENQUEUE for _ in range(200))
    queue.red_avg = 3000.0
    assert all(red_arrival_decision(queue, 100, RED, rng) is RedDecision.DROP for _ in range(200))
    queue.red_avg = 0.0
    queue.backlog = 9950
    assert red_arrival_decision(queue, 100, RED, rng) is RedDecision.DROP


def test_red_midpoint_drop_fraction():
    rng = RandomStream(5, "red/0")
    queue = OutQueue(1, ServiceClass.ASSURED, 1.0, 10**9)
    queue.red_avg = 2000.0
    trials = 100_000
    drops = sum(red_arrival_decision(queue, 100, RED, rng) is RedDecision.DROP for _ in range(trials))
    assert drops / trials == pytest.approx(0.25, abs=0.01)


def test_red_average_is_ewma_of_backlog():
    port = OutPort(0, RED, RandomStream(1, "red/0"))
    port.add_queue(OutQueue(1, ServiceClass.ASSURED, 1.0, 10_000))
    port.queues[1].backlog = 1000
    port.red_sample()
    assert port.queues[1].red_avg == pytest.approx(100.0)
    port.red_sample()
    assert port.queues[1].red_avg == pytest.approx(190.0)


def test_sample_and_feedback_saturated_congestion_increases():
    switch, _ = _switch(GEARBOX)
    switch.add_flow(1, 0, ServiceClass.ASSURED)
    queue = switch.outports[0].queues[1]
    queue.counters.in_bytes = 1_280_000
    queue.counters.out_bytes = 1_000_000
    prob = switch.sample_and_feedback(queue, 0)
    assert queue.controller.last_signal is FeedbackSignal.INCREASE
    assert prob == queue.controller.table[1]
    assert switch.drop_table.get(0, 1) == prob
    assert queue.counters.in_bytes == 0

    queue.counters.in_bytes = queue.counters.out_bytes = 1000
    assert switch.sample_and_feedback(queue, 0) == 0.0
    assert queue.controller.last_signal is FeedbackSignal.DECREASE


def test_sample_and_feedback_without_arrivals_keeps_probability():
    switch, _ = _switch(GEARBOX)
    switch.add_flow(1, 0, ServiceClass.ASSURED)
    queue = switch.outports[0].queues[1]
    queue.counters.in_bytes = 1_280_000
    queue.counters.out_bytes = 1_000_000
    prob = switch.sample_and_feedback(queue, 0)
    assert switch.sample_and_feedback(queue, 0) == prob
    assert queue.controller.last_signal is FeedbackSignal.HOLD


def test_feedback_reaches_droppers_after_delay():
    switch, loop = _switch(dict(GEARBOX, delay=2e-3))
    switch.add_flow(1, 0, ServiceClass.ASSURED)
    queue = switch.outports[0].queues[1]
    queue.counters.in_bytes = 1_280_000
    queue.counters.out_bytes = 1_000_000
    prob = switch.sample_and_feedback(queue, 0)
    assert switch.drop_table.get(0, 1) == 0.0
    loop.run(to_ns(1.9e-3))
    assert switch.drop_table.get(0, 1) == 0.0
    loop.run(to_ns(2.1e-3))
    assert switch.drop_table.get(0, 1) == prob


def test_premium_flow_gets_no_controller():
    switch, _ = _switch(GEARBOX)
    switch.add_flow(0, 0, ServiceClass.PREMIUM)
    switch.add_flow(1, 0, ServiceClass.ASSURED)
    assert switch.outports[0].queues[0].controller is None
    assert switch.outports[0].queues[1].controller is not None
    with pytest.raises(ValueError):
        switch.add_flow(1, 2, ServiceClass.ASSURED)


def test_no_traffic_gives_all_zero_series():
    switch, _ = _switch()
    series = switch.run(0.01)
    assert len(series) > 0
    assert (series.frame["value"] == 0.0).all()
    assert series.is_time_ordered()


def test_single_backlogged_queue_congestion_limited_by_speedup():
    switch, loop = _switch()
    _cbr(switch, loop, 1, 20e6, ingress=1)
    series = switch.run(0.1)
    cong = series.mean("rel_congestion", port=0, flow=1, start=0.02, end=0.1)
    assert cong == pytest.approx(1.0 - 1.0 / 1.28, rel=0.01)
    fabric_drops = series.mean("fabric_drop_rate", port=0, flow=1, start=0.02, end=0.1)
    assert fabric_drops == pytest.approx(20e6 - 1.28 * 10e6, rel=0.02)
    assert series.mean("oq_arrival_rate", port=0, flow=1, start=0.02, end=0.1) == pytest.approx(12.8e6, rel=0.01)


def test_premium_alone_gets_line_rate():
    switch, loop = _switch()
    _cbr(switch, loop, 0, 20e6, ingress=1, cls=ServiceClass.PREMIUM)
    series = switch.run(0.05)
    assert series.mean("throughput", flow=0, start=0.01, end=0.05) == pytest.approx(10e6, rel=0.01)


def test_byte_conservation_under_feedback():
    switch, loop = _switch(GEARBOX)
    _cbr(switch, loop, 0, 1e6, ingress=1, cls=ServiceClass.PREMIUM)
    _cbr(switch, loop, 1, 9e6, ingress=1)
    _cbr(switch, loop, 2, 9e6, ingress=2, start=1e-3)
    switch.run(0.05)
    assert switch.conservation_violations() == []
    report = switch.conservation_report()
    assert report[1]["ingress_dropped"] > 0
    assert report[0]["ingress_dropped"] == 0


def test_same_seed_gives_identical_series(tmp_path):
    def once(path):
        switch, loop = _switch(dict(GEARBOX, gearbox={"d_max": 0.17, "d_min": 0.02}), seed=11,
                               weights={1: 3.0, 2: 1.0})
        _cbr(switch, loop, 1, 9e6, ingress=1)
        _cbr(switch, loop, 2, 9e6, ingress=2, start=3e-6)
        series = switch.run(0.03)
        series.to_csv(str(path))
        return series

    a = once(tmp_path / "a.csv")
    b = once(tmp_path / "b.csv")
    assert a.equals(b)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_serializer_carries_remainder():
    ser = Serializer(3e9)
    assert [ser.tx_ns(1) for _ in range(3)] == [2, 3, 3]


def test_event_loop_tie_break_and_past_events():
    loop = EventLoop()
    order = []
    loop.at(5, 2, 0, order.append, "p2f0")
    loop.at(5, 1, 3, order.append, "p1f3")
    loop.at(5, 1, 1, order.append, "p1f1a")
    loop.at(5, 1, 1, order.append, "p1f1b")
    loop.at(4, 9, 9, order.append, "early")
    assert loop.run(10) == 5
    assert order == ["early", "p1f1a", "p1f1b", "p1f3", "p2f0"]
    assert loop.now == 10
    with pytest.raises(ValueError):
        loop.at(3, 0, 0, order.append, "late")
