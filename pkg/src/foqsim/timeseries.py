"""Long-format measurement series and its CSV form.

One row per (t_sec, metric, port, flow). ``port``/``flow`` are empty for
aggregate metrics. Rates are bits/s, queue contents bytes, delays seconds.
"""

from __future__ import annotations

from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

COLUMNS = ["t_sec", "metric", "port", "flow", "value", "unit"]

METRIC_UNITS = {
    "offered_rate": "bps",
    "ingress_drop_rate": "bps",
    "fabric_drop_rate": "bps",
    "egress_drop_rate": "bps",
    "throughput": "bps",
    "oq_arrival_rate": "bps",
    "out_queue": "bytes",
    "rel_congestion": "ratio",
    "drop_prob": "probability",
    "red_avg": "bytes",
    "fabric_queue": "bytes",
    "fabric_occupancy": "bytes",
    "delay_p50": "s",
    "delay_p99": "s",
}

Record = Tuple[float, str, Optional[int], Optional[int], float, str]


class TimeSeries:
    def __init__(self, frame: Optional[pd.DataFrame] = None) -> None:
        if frame is None:
            frame = pd.DataFrame({c: [] for c in COLUMNS})
        frame = frame[COLUMNS].copy()
        frame["t_sec"] = frame["t_sec"].astype("float64")
        frame["metric"] = frame["metric"].astype("object")
        frame["port"] = frame["port"].astype("Int64")
        frame["flow"] = frame["flow"].astype("Int64")
        frame["value"] = frame["value"].astype("float64")
        frame["unit"] = frame["unit"].astype("object")
        self.frame = frame.reset_index(drop=True)

    @classmethod
    def from_records(cls, records: Iterable[Record]) -> "TimeSeries":
        rows = list(records)
        if not rows:
            return cls()
        return cls(pd.DataFrame.from_records(rows, columns=COLUMNS))

    def __len__(self) -> int:
        return len(self.frame)

    def metrics(self) -> Sequence[str]:
        return sorted(self.frame["metric"].unique().tolist())

    def select(self, metric: str, port: Optional[int] = None, flow: Optional[int] = None) -> pd.DataFrame:
        df = self.frame[self.frame["metric"] == metric]
        if port is not None:
            df = df[df["port"] == port]
        if flow is not None:
            df = df[df["flow"] == flow]
        return df

    def values(self, metric: str, port: Optional[int] = None, flow: Optional[int] = None) -> np.ndarray:
        return self.select(metric, port, flow)["value"].to_numpy()

    def mean(
        self,
        metric: str,
        port: Optional[int] = None,
        flow: Optional[int] = None,
        start: float = 0.0,
        end: float = float("inf"),
    ) -> float:
        df = self.select(metric, port, flow)
        df = df[(df["t_sec"] > start) & (df["t_sec"] <= end)]
        if df.empty:
            return float("nan")
        return float(df["value"].mean())

    def is_time_ordered(self) -> bool:
        return bool(self.frame["t_sec"].is_monotonic_increasing)

    def to_csv(self, path: str) -> None:
        self.frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")

    @classmethod
    def read_csv(cls, path: str) -> "TimeSeries":
        frame = pd.read_csv(
            path,
            dtype={"metric": "object", "port": "Int64", "flow": "Int64", "unit": "object"},
            float_precision="round_trip",
            encoding="utf-8",
        )
        return cls(frame)

    def equals(self, other: "TimeSeries") -> bool:
        return self.frame.equals(other.frame)


def _recompute_congestion(frame: pd.DataFrame) -> pd.DataFrame:
    keys = ["t_sec", "port", "flow"]
    arrivals = frame[frame["metric"] == "oq_arrival_rate"].set_index(keys)["value"]
    served = frame[frame["metric"] == "throughput"].set_index(keys)["value"]
    joined = pd.concat({"arr": arrivals, "out": served}, axis=1).dropna()
    joined = joined[joined["arr"] > 0]
    cong = (1.0 - joined["out"] / joined["arr"]).reset_index(name="value")
    cong["metric"] = "rel_congestion"
    cong["unit"] = METRIC_UNITS["rel_congestion"]
    rest = frame[frame["metric"] != "rel_congestion"]
    merged = pd.concat([rest, cong[COLUMNS]], ignore_index=True)
    return merged.sort_values("t_sec", kind="stable").reset_index(drop=True)


def sliding_window(series: TimeSeries, width: float, native_interval: float) -> TimeSeries:
    """Trailing moving average of every (metric, port, flow) series over ``width`` seconds.

    Rates are summed over the window and divided by its full bin count, so
    bins before the first sample count as zero traffic and the result is the
    byte-weighted mean over the window. Queue levels, probabilities and delays
    are averaged over the samples present. Relative congestion is recomputed
    from the averaged OUT queue arrival and service rates rather than averaged
    itself.
    """
    if width < native_interval:
        raise ValueError(f"window {width} is narrower than the sampling interval {native_interval}")
    frame = series.frame
    if frame.empty or width == native_interval:
        return TimeSeries(frame)

    width_ns = int(round(width * 1e9))
    bins = width / native_interval
    pieces = []
    for _, group in frame.groupby(["metric", "port", "flow"], dropna=False, sort=False):
        ns = np.round(group["t_sec"].to_numpy() * 1e9).astype("int64")
        values = pd.Series(group["value"].to_numpy(), index=pd.to_timedelta(ns, unit="ns"))
        rolling = values.rolling(pd.Timedelta(width_ns, unit="ns"), min_periods=1)
        if group["unit"].iloc[0] == "bps":
            averaged = rolling.sum() / bins
        else:
            averaged = rolling.mean()
        out = group.copy()
        out["value"] = averaged.to_numpy()
        pieces.append(out)
    windowed = pd.concat(pieces).sort_index()
    return TimeSeries(_recompute_congestion(windowed))
