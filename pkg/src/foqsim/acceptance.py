"""Band checks for the two desk-scale scenarios (CBR competition, staged TCP)."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .experiment import ExperimentConfig, ExperimentResult, load_config, run_experiment
from .timeseries import TimeSeries, sliding_window

logger = logging.getLogger(__name__)

MBPS = 1e6


@dataclass
class Check:
    name: str
    value: float
    low: float
    high: float

    @property
    def passed(self) -> bool:
        return bool(self.low <= self.value <= self.high)

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["passed"] = self.passed
        return out


def band(name: str, value: float, target: float, rel: float) -> Check:
    return Check(name, float(value), target * (1.0 - rel), target * (1.0 + rel))


def _window(series: TimeSeries, metric: str, start: float, end: float, port: Optional[int] = None,
            flow: Optional[int] = None) -> np.ndarray:
    df = series.select(metric, port, flow)
    df = df[(df["t_sec"] > start) & (df["t_sec"] <= end)]
    return df.groupby("t_sec")["value"].sum().to_numpy()


def _flow_loss(result: ExperimentResult, flow: int) -> float:
    t = result.totals.get(flow)
    if not t or t["injected"] == 0:
        return 0.0
    lost = t["ingress_dropped"] + t["fabric_dropped"] + t["egress_dropped"]
    return lost / t["injected"]


def cbr_checks(
    off: ExperimentResult,
    gearbox: ExperimentResult,
    duration: float,
    settle: float = 0.05,
    transient: float = 0.02,
) -> List[Check]:
    checks: List[Check] = []
    thr_off = off.series.mean("throughput", flow=1, start=settle, end=duration)
    checks.append(band("off.flow1_throughput_mbps", thr_off / MBPS, 59.3, 0.10))
    off_drops = _window(off.series, "fabric_drop_rate", transient, duration)
    checks.append(Check("off.fabric_drop_window_fraction", float((off_drops > 0).mean()), 0.5, 1.0))

    thr1 = gearbox.series.mean("throughput", flow=1, start=settle, end=duration)
    thr2 = gearbox.series.mean("throughput", flow=2, start=settle, end=duration)
    checks.append(band("gearbox.flow1_throughput_mbps", thr1 / MBPS, 76.2, 0.10))
    checks.append(band("gearbox.flow2_throughput_mbps", thr2 / MBPS, 13.7, 0.15))
    gb_drops = _window(gearbox.series, "fabric_drop_rate", transient, duration)
    checks.append(Check("gearbox.fabric_drop_bps_after_transient", float(gb_drops.max(initial=0.0)), 0.0, 0.0))

    for label, result in (("off", off), ("gearbox", gearbox)):
        premium = result.series.mean("throughput", flow=0, start=settle, end=duration)
        checks.append(band(f"{label}.premium_throughput_mbps", premium / MBPS, 9.52, 0.02))
        checks.append(Check(f"{label}.premium_loss_fraction", _flow_loss(result, 0), 0.0, 1e-3))
    return checks


def _stage_windows(num_stages: int, period: float, tail: float) -> List[Tuple[float, float]]:
    return [(k * period + period - tail, (k + 1) * period) for k in range(num_stages)]


def tcp_checks(
    off: ExperimentResult,
    gearbox: ExperimentResult,
    config: ExperimentConfig,
    stage_period: float = 2.0,
    stage_tail: float = 0.5,
    egress_port: int = 0,
    flow: int = 1,
) -> List[Check]:
    """Off: congestion pinned at 1 - 1/s with a full fabric. Gear-Box: clean fabric, rising ingress drops."""
    checks: List[Check] = []
    duration = config.duration
    s = config.switch.speedup
    windows = _stage_windows(len(config.sources), stage_period, stage_tail)
    last = windows[-1]

    off_w = sliding_window(off.series, config.window, config.sample_interval)
    gb_w = sliding_window(gearbox.series, config.window, config.sample_interval)

    cong_off = off_w.mean("rel_congestion", port=egress_port, flow=flow, start=last[0], end=last[1])
    target = 1.0 - 1.0 / s
    checks.append(Check("off.rel_congestion", cong_off, target - 0.02, target + 0.02))
    occupancy = off.series.values("fabric_occupancy")
    checks.append(
        Check("off.fabric_peak_fraction", float(occupancy.max(initial=0.0)) / config.switch.fabric_memory, 0.9, 1.0)
    )
    checks.append(Check("off.fabric_dropped_bytes", float(sum(t["fabric_dropped"] for t in off.totals.values())),
                        1.0, float("inf")))

    worst = 0.0
    ingress = []
    for lo, hi in windows:
        worst = max(worst, float(_window(gearbox.series, "fabric_drop_rate", lo, hi).max(initial=0.0)))
        ingress.append(float(_window(gearbox.series, "ingress_drop_rate", lo, hi).mean()))
    checks.append(Check("gearbox.fabric_drop_bps_after_transients", worst, 0.0, 0.0))
    # stage 0 never overloads; ingress drops must rise from stage 1 onward
    rising = all(b > a for a, b in zip(ingress[1:], ingress[2:])) and ingress[1] > 0
    checks.append(Check("gearbox.ingress_drops_rising", 1.0 if rising else 0.0, 1.0, 1.0))
    cong_gb = gb_w.mean("rel_congestion", port=egress_port, flow=flow, start=last[0], end=duration)
    checks.append(Check("gearbox.rel_congestion", cong_gb, 0.07, 0.13))
    logger.info("tcp stage ingress_drop_bps=%s", [round(v) for v in ingress])
    return checks


def run_pair(config_path: str, progress: bool = False) -> Tuple[ExperimentConfig, ExperimentResult, ExperimentResult]:
    """The same scenario with feedback off and with Gear-Box feedback."""
    off_cfg = load_config(config_path, {"feedback.mode": "off"})
    gb_cfg = load_config(config_path, {"feedback.mode": "gearbox"})
    off = run_experiment(off_cfg, progress=progress)
    gb = run_experiment(gb_cfg, progress=progress)
    return gb_cfg, off, gb


def report(checks: List[Check]) -> Dict[str, Any]:
    return {
        "passed": all(c.passed for c in checks),
        "checks": [c.to_dict() for c in checks],
    }
