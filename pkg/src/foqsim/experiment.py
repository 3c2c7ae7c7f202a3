"""Experiment assembly: config file -> switch + sources -> measured time series."""

from __future__ import annotations

import copy
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Union

from config.schema import (
    ConfigError,
    expand_dotted,
    load_yaml,
    resolve_config,
    set_path,
    to_base_units,
    validate_raw,
)
from switchcore.core import Switch, SwitchConfig
from switchcore.events import EventLoop
from switchcore.packet import ServiceClass
from switchcore.streams import RandomStreams
from traffic.cbr import CbrGenerator, CbrSource
from traffic.subnets import SubnetGroup, staged_start
from traffic.tcp import AccessLink, RtoParams, TcpConnection, TcpSource

from .timeseries import TimeSeries, sliding_window
from .utils import ensure_dir, write_json

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TcpGroupSpec:
    group: SubnetGroup
    flow_id: int
    ingress_port: int
    egress_port: int
    packet_size: int
    service_class: ServiceClass = ServiceClass.ASSURED


SourceSpec = Union[CbrSource, TcpGroupSpec]


@dataclass
class ExperimentConfig:
    switch: SwitchConfig
    sources: List[SourceSpec]
    duration: float
    seed: int
    window: float
    sample_interval: float = 1e-3
    output_path: Optional[str] = None
    tcp: Dict[str, Any] = field(default_factory=dict)
    resolved: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise ValueError(f"duration must be > 0, got {self.duration}")
        if self.window <= 0:
            raise ValueError(f"window must be > 0, got {self.window}")


@dataclass
class ExperimentResult:
    series: TimeSeries
    totals: Dict[int, Dict[str, int]]
    violations: List[str]
    sources: Dict[str, Dict[str, Any]]
    events: int

    def summary(self) -> Dict[str, Any]:
        return {
            "events": self.events,
            "conservation_ok": not self.violations,
            "conservation_violations": self.violations,
            "flows": {str(k): v for k, v in self.totals.items()},
            "sources": self.sources,
        }


def _service_class(name: str) -> ServiceClass:
    return ServiceClass(name)


def _source_from_dict(src: Dict[str, Any], duration: float) -> SourceSpec:
    cls = _service_class(src.get("class", "assured"))
    if src["type"] == "cbr":
        return CbrSource(
            rate=float(src["rate"]),
            packet_size=int(src["packet_size"]),
            start=float(src.get("start", 0.0)),
            stop=float(src.get("stop", duration)),
            flow_id=int(src["flow_id"]),
            ingress_port=int(src["ingress_port"]),
            egress_port=int(src["egress_port"]),
            service_class=cls,
        )
    lo, hi = src["start_window"]
    group = SubnetGroup(
        source_count=int(src["source_count"]),
        link_rate=float(src["link_rate"]),
        start_window=(float(lo), float(hi)),
        one_way_delay=float(src.get("one_way_delay", 0.02)),
    )
    return TcpGroupSpec(
        group=group,
        flow_id=int(src["flow_id"]),
        ingress_port=int(src["ingress_port"]),
        egress_port=int(src["egress_port"]),
        packet_size=int(src["packet_size"]),
        service_class=cls,
    )


def config_from_resolved(resolved: Dict[str, Any]) -> ExperimentConfig:
    """Typed config from a validated, resolved dict (quantities may still carry units)."""
    base = to_base_units(resolved)
    return ExperimentConfig(
        switch=SwitchConfig.from_dict(base["switch"], base["feedback"]),
        sources=[_source_from_dict(s, float(base["duration"])) for s in base.get("sources") or []],
        duration=float(base["duration"]),
        seed=int(base["seed"]),
        window=float(base["window"]),
        sample_interval=float(base["sample_interval"]),
        output_path=base.get("output_path"),
        tcp=dict(base.get("tcp") or {}),
        resolved=resolved,
    )


def load_raw(path: str, overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    raw = expand_dotted(load_yaml(path))
    for key, val in (overrides or {}).items():
        set_path(raw, key, val)
    return raw


def load_config(path: str, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Parse and validate a config file; raises ConfigError listing every violation."""
    if not os.path.exists(path):
        raise ConfigError([f"config file not found: {path}"])
    raw = load_raw(path, overrides)
    errors = validate_raw(raw)
    if errors:
        raise ConfigError(errors)
    return config_from_resolved(resolve_config(raw))


class Scenario:
    """A switch with its sources attached to one event loop."""

    def __init__(self, config: ExperimentConfig) -> None:
        self.config = config
        self.loop = EventLoop()
        self.streams = RandomStreams(config.seed)
        self.switch = Switch(config.switch, self.loop, self.streams, sample_interval=config.sample_interval)
        self.cbr: List[CbrGenerator] = []
        self.tcp_groups: List[List[TcpConnection]] = []
        self.links: List[AccessLink] = []
        self._build()

    def _build(self) -> None:
        for spec in self.config.sources:
            self.switch.add_flow(spec.flow_id, spec.egress_port, spec.service_class)

        for spec in self.config.sources:
            if isinstance(spec, CbrSource):
                self.cbr.append(CbrGenerator(spec, self.loop, self.switch.inject))

        tcp_specs = [s for s in self.config.sources if isinstance(s, TcpGroupSpec)]
        if not tcp_specs:
            return
        tcp = self.config.tcp
        rto = RtoParams(
            initial=float(tcp.get("rto_init", 1.0)),
            minimum=float(tcp.get("rto_min", 0.2)),
            max_backoff=int(tcp.get("rto_max_backoff", 64)),
        )
        ssthresh = int(tcp.get("ssthresh_init", 64))
        starts = staged_start([s.group for s in tcp_specs], self.config.seed)
        conn_id = 0
        for spec, group_starts in zip(tcp_specs, starts):
            link = AccessLink(spec.group.link_rate, self.loop, self.switch.inject)
            self.links.append(link)
            conns = []
            for start_time in group_starts:
                source = TcpSource(
                    packet_size=spec.packet_size,
                    rtt_base=2.0 * spec.group.one_way_delay,
                    start_time=start_time,
                    ssthresh=ssthresh,
                )
                conns.append(
                    TcpConnection(
                        source,
                        conn_id,
                        spec.flow_id,
                        spec.ingress_port,
                        spec.egress_port,
                        self.loop,
                        link,
                        spec.group.one_way_delay,
                        rto=rto,
                        service_class=spec.service_class,
                    )
                )
                conn_id += 1
            self.tcp_groups.append(conns)
            logger.info(
                "tcp_group flow=%d sources=%d link_rate=%.0f window=%s",
                spec.flow_id,
                spec.group.source_count,
                spec.group.link_rate,
                list(spec.group.start_window),
            )

    def start(self) -> None:
        for gen in self.cbr:
            gen.start()
        for conns in self.tcp_groups:
            for conn in conns:
                conn.start()

    def source_stats(self) -> Dict[str, Dict[str, Any]]:
        stats: Dict[str, Dict[str, Any]] = {}
        for i, gen in enumerate(self.cbr):
            stats[f"cbr{i}"] = {
                "flow": gen.source.flow_id,
                "sent_packets": gen.sent_packets,
                "sent_bytes": gen.sent_bytes,
            }
        for i, conns in enumerate(self.tcp_groups):
            stats[f"tcp_group{i}"] = {
                "flow": conns[0].flow_id if conns else None,
                "connections": len(conns),
                "sent_packets": sum(c.sent_packets for c in conns),
                "retransmits": sum(c.retransmits for c in conns),
                "timeouts": sum(c.timeouts for c in conns),
                "fast_retransmits": sum(c.fast_retransmits for c in conns),
                "acked_bytes": sum(c.acked_bytes for c in conns),
            }
        return stats


def run_experiment(config: ExperimentConfig, progress: bool = False) -> ExperimentResult:
    """Run one experiment to ``config.duration`` and collect its native-interval series."""
    scenario = Scenario(config)
    logger.info(
        "run_start duration=%.6f seed=%d feedback=%s sources=%d",
        config.duration,
        config.seed,
        config.switch.feedback_mode,
        len(config.sources),
    )
    scenario.start()
    series = scenario.switch.run(config.duration, progress=progress)
    totals = scenario.switch.conservation_report()
    violations = scenario.switch.conservation_violations()
    for flow, t in totals.items():
        logger.info(
            "flow=%d injected=%d ingress_dropped=%d fabric_dropped=%d egress_dropped=%d delivered=%d resident=%d",
            flow,
            t["injected"],
            t["ingress_dropped"],
            t["fabric_dropped"],
            t["egress_dropped"],
            t["delivered"],
            t["resident"],
        )
    if violations:
        logger.error("conservation_violations=%s", violations)
    else:
        logger.info("conservation_ok=true")
    return ExperimentResult(
        series=series if series is not None else TimeSeries(),
        totals=totals,
        violations=violations,
        sources=scenario.source_stats(),
        events=scenario.loop.processed,
    )


def steady_metrics(series: TimeSeries, start: float) -> Dict[str, Any]:
    """Per-flow means of every metric after ``start`` plus fabric drop statistics."""
    df = series.frame[series.frame["t_sec"] > start]
    metrics: Dict[str, Any] = {}
    per_flow = df[df["flow"].notna()]
    for (flow, metric), val in per_flow.groupby(["flow", "metric"])["value"].mean().items():
        metrics.setdefault(f"flow{int(flow)}", {})[metric] = float(val)
    fabric_drops = df[df["metric"] == "fabric_drop_rate"].groupby("t_sec")["value"].sum()
    occupancy = df[df["metric"] == "fabric_occupancy"]["value"]
    metrics["fabric"] = {
        "drop_free_fraction": float((fabric_drops == 0).mean()) if len(fabric_drops) else 1.0,
        "mean_occupancy": float(occupancy.mean()) if len(occupancy) else 0.0,
    }
    return metrics


def write_outputs(config: ExperimentConfig, result: ExperimentResult, run_dir: str) -> Dict[str, str]:
    """Native and windowed CSVs plus summary.json; ``output_path`` gets the windowed series."""
    ensure_dir(run_dir)
    paths: Dict[str, str] = {}
    native_path = os.path.join(run_dir, "metrics_native.csv")
    result.series.to_csv(native_path)
    paths["native"] = native_path

    windowed = sliding_window(result.series, config.window, config.sample_interval)
    windowed_path = config.output_path or os.path.join(run_dir, "metrics.csv")
    ensure_dir(os.path.dirname(windowed_path))
    windowed.to_csv(windowed_path)
    paths["windowed"] = windowed_path

    summary = copy.deepcopy(result.summary())
    summary["window"] = config.window
    summary["sample_interval"] = config.sample_interval
    summary["metrics_csv"] = windowed_path
    summary["metrics"] = steady_metrics(windowed, 0.5 * config.duration)
    paths["summary"] = write_json(summary, os.path.join(run_dir, "summary.json"))
    return paths
