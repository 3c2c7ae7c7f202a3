from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

from .law import (
    FeedbackSignal,
    GbParams,
    GbState,
    PiParams,
    PiState,
    apply_gb_signal,
    derive_thresholds,
    drop_level_table,
    drop_prob_from_rate,
    gb_delta,
    gb_signal_from_congestion,
    invert_thresholds,
    pi_update,
    quantize_delta,
    signal_from_quantized,
)

logger = logging.getLogger(__name__)


@dataclass
class Measurement:
    """One sampling interval at an OUT queue, rates in bits/s."""

    in_rate: float
    out_rate: float
    congestion: Optional[float]


class PiController:
    def __init__(self, params: PiParams) -> None:
        self.params = params
        self.state = PiState()
        self.drop_rate = 0.0

    @property
    def drop_prob(self) -> float:
        return self.state.last_drop_prob

    def desired_rate(self, out_rate: float) -> float:
        return self.params.alpha * self.params.speedup * out_rate

    def update(self, m: Measurement) -> float:
        if m.in_rate <= 0:
            return self.drop_prob
        desired = self.desired_rate(m.out_rate)
        self.drop_rate, state = pi_update(self.state, m.in_rate, desired, self.params)
        prob = drop_prob_from_rate(self.drop_rate, m.in_rate, state.last_drop_prob)
        self.state = PiState(state.accumulator, state.last_error, prob)
        return prob


class GearBoxController:
    """Pointer into the P_k table moved by a three-level signal.

    ``signal="congestion"`` compares relative congestion against d_max/d_min.
    ``signal="delta"`` quantizes the PI increment with dead-zone edges
    recovered from the thresholds, so with gain_p=0 both forms agree.
    """

    def __init__(
        self,
        params: GbParams,
        signal: str = "congestion",
        pi_params: Optional[PiParams] = None,
    ) -> None:
        if signal not in {"congestion", "delta"}:
            raise ValueError(f"unknown gearbox signal: {signal}")
        if signal == "delta" and pi_params is None:
            raise ValueError("gearbox delta signal requires pi_params")
        self.params = params
        self.signal = signal
        self.pi_params = pi_params
        self.state = GbState()
        self.table: List[float] = drop_level_table(params.beta, params.table_size)
        self.last_error = 0.0
        self.last_signal = FeedbackSignal.HOLD
        if pi_params is not None:
            self.delta_max, self.delta_min = invert_thresholds(
                pi_params.alpha, pi_params.speedup, pi_params.gain_i, params.d_max, params.d_min
            )
        else:
            self.delta_max = self.delta_min = 0.0

    @property
    def drop_prob(self) -> float:
        return self.table[self.state.level_index]

    def _delta_signal(self, m: Measurement) -> FeedbackSignal:
        assert self.pi_params is not None
        error = m.in_rate - self.pi_params.alpha * self.pi_params.speedup * m.out_rate
        delta = gb_delta(error, self.last_error, m.in_rate, self.pi_params)
        self.last_error = error
        q = quantize_delta(delta, self.delta_max, self.delta_min, self.params.beta)
        return signal_from_quantized(q)

    def update(self, m: Measurement) -> float:
        if m.in_rate <= 0 or m.congestion is None:
            self.last_signal = FeedbackSignal.HOLD
            return self.drop_prob
        if self.signal == "delta":
            sig = self._delta_signal(m)
        else:
            sig = gb_signal_from_congestion(m.congestion, self.params)
        self.state = apply_gb_signal(self.state, sig, self.params.table_size)
        self.last_signal = sig
        return self.drop_prob


def build_controller(feedback: Dict[str, Any], speedup: float, line_rate: float) -> Optional[Any]:
    """Controller for one OUT queue from the ``feedback`` config section, None when off."""
    mode = feedback.get("mode", "off")
    if mode == "off":
        return None
    interval = float(feedback["interval"])
    alpha = float(feedback.get("alpha", 0.95))
    if mode == "pi":
        pi_cfg = feedback.get("pi", {})
        return PiController(
            PiParams(
                gain_p=float(pi_cfg.get("gain_p", 0.0)),
                gain_i=float(pi_cfg.get("gain_i", 0.5)),
                interval=interval,
                alpha=alpha,
                speedup=speedup,
                line_rate=line_rate,
            )
        )
    if mode == "gearbox":
        gb_cfg = feedback.get("gearbox", {})
        d_max = float(gb_cfg.get("d_max", 0.17))
        d_min = float(gb_cfg.get("d_min", 0.02))
        beta = gb_cfg.get("beta")
        params = GbParams(
            d_max=d_max,
            d_min=d_min,
            beta=float(beta) if beta is not None else GbParams.from_thresholds(d_max, d_min).beta,
            table_size=int(gb_cfg.get("table_size", 64)),
        )
        signal = gb_cfg.get("signal", "congestion")
        pi_params = None
        if signal == "delta":
            pi_params = PiParams(
                gain_p=float(gb_cfg.get("gain_p", 0.0)),
                gain_i=float(gb_cfg.get("gain_i", 1.0)),
                interval=interval,
                alpha=alpha,
                speedup=speedup,
                line_rate=line_rate,
            )
        return GearBoxController(params, signal=signal, pi_params=pi_params)
    raise ValueError(f"unknown feedback mode: {mode}")


def thresholds_for(pi_params: PiParams, delta_max: float, delta_min: float) -> GbParams:
    d_max, d_min = derive_thresholds(
        pi_params.alpha, pi_params.speedup, pi_params.gain_i, delta_max, delta_min
    )
    return GbParams.from_thresholds(d_max, d_min)
