"""Feedback control laws: discrete PI drop rate and the quantized Gear-Box controller.

Rates are bits/s. Probabilities are drop probabilities unless a name says
``admit``. Every function here is pure; per-queue state lives in the small
records below and is replaced, never mutated.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Tuple

logger = logging.getLogger(__name__)


class UndefinedDeltaError(ValueError):
    pass


class DegenerateBandError(ValueError):
    pass


class NoHeadroomError(ValueError):
    pass


class FeedbackSignal(str, Enum):
    INCREASE = "increase"
    DECREASE = "decrease"
    HOLD = "hold"


@dataclass(frozen=True)
class PiParams:
    gain_p: float
    gain_i: float
    interval: float
    alpha: float = 0.95
    speedup: float = 1.28
    line_rate: float = 1e9

    def __post_init__(self) -> None:
        if self.interval <= 0:
            raise ValueError(f"interval must be > 0, got {self.interval}")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.speedup <= 1:
            raise ValueError(f"speedup must be > 1, got {self.speedup}")
        if self.line_rate <= 0:
            raise ValueError(f"line_rate must be > 0, got {self.line_rate}")


@dataclass(frozen=True)
class PiState:
    accumulator: float = 0.0
    last_error: float = 0.0
    last_drop_prob: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.last_drop_prob <= 1.0:
            raise ValueError(f"last_drop_prob must be in [0, 1], got {self.last_drop_prob}")


@dataclass(frozen=True)
class GbParams:
    d_max: float
    d_min: float
    beta: float
    table_size: int = 64

    def __post_init__(self) -> None:
        if not 0.0 <= self.d_min < self.d_max < 1.0:
            raise DegenerateBandError(
                f"degenerate hysteresis band: need 0 <= d_min < d_max < 1, got d_min={self.d_min} d_max={self.d_max}"
            )
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must be in (0, 1), got {self.beta}")
        if self.table_size < 2:
            raise ValueError(f"table_size must be >= 2, got {self.table_size}")

    @classmethod
    def from_thresholds(cls, d_max: float, d_min: float, table_size: int = 64) -> "GbParams":
        return cls(d_max=d_max, d_min=d_min, beta=derive_beta(d_max, d_min), table_size=table_size)


@dataclass(frozen=True)
class GbState:
    level_index: int = 0


def pi_linear(accumulator: float, error: float, gain_p: float, gain_i: float) -> Tuple[float, float]:
    """Unclamped PI step: returns (K*e[n] + K_I*sum(e), new accumulator)."""
    accumulator = accumulator + gain_i * error
    return gain_p * error + accumulator, accumulator


def pi_update(
    state: PiState, measured_rate: float, desired_rate: float, params: PiParams
) -> Tuple[float, PiState]:
    """One PI interval. Output is clamped to [0, measured/(1-p_prev)].

    While the output is clamped and the error pushes further into the clamp the
    accumulator is held (conditional integration).
    """
    if measured_rate < 0 or desired_rate < 0:
        raise ValueError(f"rates must be >= 0, got measured={measured_rate} desired={desired_rate}")
    error = measured_rate - desired_rate
    raw, accumulator = pi_linear(state.accumulator, error, params.gain_p, params.gain_i)

    if state.last_drop_prob >= 1.0:
        upper = math.inf
    else:
        upper = measured_rate / (1.0 - state.last_drop_prob)

    drop_rate = raw
    if raw < 0.0:
        drop_rate = 0.0
        if error < 0.0:
            accumulator = state.accumulator
    elif raw > upper:
        drop_rate = upper
        if error > 0.0:
            accumulator = state.accumulator
    return drop_rate, replace(state, accumulator=accumulator, last_error=error)


def drop_prob_from_rate(drop_rate: float, fabric_out_rate: float, prev_prob: float) -> float:
    if fabric_out_rate <= 0:
        logger.debug("drop_prob kept reason=zero_fabric_out_rate prev_prob=%.6f", prev_prob)
        return prev_prob
    prob = (1.0 - prev_prob) * drop_rate / fabric_out_rate
    return min(1.0, max(0.0, prob))


def gb_delta(error: float, prev_error: float, fabric_out_rate: float, params: PiParams) -> float:
    if fabric_out_rate <= 0:
        raise UndefinedDeltaError("undefined delta: fabric_out_rate is zero")
    return ((params.gain_p + params.gain_i) * error - params.gain_p * prev_error) / fabric_out_rate


def quantize_delta(delta: float, delta_max: float, delta_min: float, beta: float) -> float:
    """Three-level quantizer. The dead zone [-delta_min, delta_max] must be non-empty."""
    if delta_max + delta_min <= 0:
        raise ValueError(f"empty dead zone: delta_max={delta_max} delta_min={delta_min}")
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must be in (0, 1), got {beta}")
    if delta > delta_max:
        return beta
    if delta < -delta_min:
        return beta / (beta - 1.0)
    return 0.0


def quantized_drop_update(prev_prob: float, delta_q: float) -> float:
    return (1.0 - delta_q) * prev_prob + delta_q


def signal_from_quantized(delta_q: float) -> FeedbackSignal:
    if delta_q > 0:
        return FeedbackSignal.INCREASE
    if delta_q < 0:
        return FeedbackSignal.DECREASE
    return FeedbackSignal.HOLD


def gb_signal_from_congestion(relative_congestion: float, params: GbParams) -> FeedbackSignal:
    if relative_congestion > params.d_max:
        return FeedbackSignal.INCREASE
    if relative_congestion < params.d_min:
        return FeedbackSignal.DECREASE
    return FeedbackSignal.HOLD


def drop_level_table(beta: float, table_size: int) -> List[float]:
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must be in (0, 1), got {beta}")
    if table_size < 2:
        raise ValueError(f"table_size must be >= 2, got {table_size}")
    return [1.0 - (1.0 - beta) ** k for k in range(table_size)]


def apply_gb_signal(state: GbState, signal: FeedbackSignal, table_size: int) -> GbState:
    if signal is FeedbackSignal.INCREASE:
        return GbState(min(state.level_index + 1, table_size - 1))
    if signal is FeedbackSignal.DECREASE:
        return GbState(max(state.level_index - 1, 0))
    return state


def _check_band(d_max: float, d_min: float) -> None:
    if not 0.0 <= d_min < d_max < 1.0:
        raise DegenerateBandError(
            f"degenerate hysteresis band: need 0 <= d_min < d_max < 1, got d_min={d_min} d_max={d_max}"
        )


def derive_beta(d_max: float, d_min: float) -> float:
    _check_band(d_max, d_min)
    return 1.0 - math.sqrt((1.0 - d_max) / (1.0 - d_min))


def d_mid(d_min: float, d_max: float) -> float:
    _check_band(d_max, d_min)
    return 1.0 - math.sqrt((1.0 - d_min) * (1.0 - d_max))


def derive_thresholds(
    alpha: float, speedup: float, gain_i: float, delta_max: float, delta_min: float
) -> Tuple[float, float]:
    headroom = alpha * speedup
    if headroom <= 1.0:
        raise NoHeadroomError(f"no congestion headroom: alpha*speedup={headroom:.6g} <= 1")
    if gain_i <= 0:
        raise ValueError(f"gain_i must be > 0, got {gain_i}")
    base = 1.0 - 1.0 / headroom
    d_max = base + delta_max / (headroom * gain_i)
    d_min = base - delta_min / (headroom * gain_i)
    if d_min < 0.0:
        logger.info("d_min clamped raw=%.6g clamped=0", d_min)
        d_min = 0.0
    if d_min >= d_max:
        logger.warning("degenerate hysteresis band d_min=%.6g d_max=%.6g", d_min, d_max)
    return d_max, d_min


def invert_thresholds(
    alpha: float, speedup: float, gain_i: float, d_max: float, d_min: float
) -> Tuple[float, float]:
    """Dead-zone edges (delta_max, delta_min) that reproduce the given thresholds."""
    headroom = alpha * speedup
    if headroom <= 1.0:
        raise NoHeadroomError(f"no congestion headroom: alpha*speedup={headroom:.6g} <= 1")
    if gain_i <= 0:
        raise ValueError(f"gain_i must be > 0, got {gain_i}")
    delta_max = (headroom * (d_max - 1.0) + 1.0) * gain_i
    delta_min = (headroom * (1.0 - d_min) - 1.0) * gain_i
    return delta_max, delta_min


def post_step_congestion(congestion: float, beta: float, signal: FeedbackSignal) -> float:
    """Fluid-model congestion after one step with the OUT service rate held constant."""
    admit = 1.0 - congestion
    if signal is FeedbackSignal.INCREASE:
        return 1.0 - admit / (1.0 - beta)
    if signal is FeedbackSignal.DECREASE:
        return 1.0 - admit * (1.0 - beta)
    return congestion
