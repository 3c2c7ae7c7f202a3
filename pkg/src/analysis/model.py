"""Single-flow loop analysis of the PI drop-rate controller.

Time is counted in sampling intervals n; rates are bits/s and queue contents
are bits. During the initial period (arrival above the fabric interface
capacity sc) the OUT queue input saturates at sc and the controller output
ramps linearly. Once the modeled fabric queue empties the loop runs on a new
time axis n' = n - N0 with the accumulator holding S_N0 and the previous drop
rate taken as zero, which is the step-input convention of the z-domain
solution.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from controller.law import pi_linear

logger = logging.getLogger(__name__)

QUEUE_EMPTY_RTOL = 1e-9


class UnstableGainsError(ValueError):
    pass


@dataclass(frozen=True)
class StepScenario:
    arrival_rate: float
    desired_rate: float
    fabric_capacity: float
    gain_p: float
    gain_i: float
    interval: float = 1.0

    def __post_init__(self) -> None:
        if self.arrival_rate <= 0:
            raise ValueError(f"arrival_rate must be > 0, got {self.arrival_rate}")
        if self.desired_rate >= self.fabric_capacity:
            raise ValueError(
                f"desired_rate must be < fabric_capacity, got {self.desired_rate} >= {self.fabric_capacity}"
            )
        if self.interval <= 0:
            raise ValueError(f"interval must be > 0, got {self.interval}")

    @property
    def rate_gap(self) -> float:
        return self.arrival_rate - self.desired_rate

    @property
    def saturation_gap(self) -> float:
        return self.fabric_capacity - self.desired_rate

    @property
    def queue_tolerance(self) -> float:
        return QUEUE_EMPTY_RTOL * self.interval * max(self.arrival_rate, self.fabric_capacity)


@dataclass
class StepResponse:
    n0: int
    s_n0: float
    pole1: float
    pole2: float
    coeff1: float
    coeff2: float
    rate_gap: float
    drop_sequence: np.ndarray = field(repr=False)
    queue_sequence: np.ndarray = field(repr=False)
    max_queue: float = 0.0


def poles(gain_p: float, gain_i: float) -> Tuple[float, float]:
    if gain_p < 0:
        raise ValueError(f"gain_p must be >= 0, got {gain_p}")
    b = gain_p + gain_i - 1.0
    root = math.sqrt(b * b + 4.0 * gain_p)
    return 0.5 * (-b + root), 0.5 * (-b - root)


def is_stable(gain_p: float, gain_i: float) -> bool:
    return 0.0 < gain_i < 2.0 * (1.0 - gain_p)


def transfer_functions(gain_p: float, gain_i: float) -> Dict[str, Tuple[List[float], List[float]]]:
    """Output-rate transfer functions as (numerator, denominator) in descending powers of z.

    Keys: ``arrival`` (R/lambda), ``desired`` (R/r_opt), ``accumulator`` (R per unit
    step of the accumulator initial condition).
    """
    den = [1.0, gain_p + gain_i - 1.0, -gain_p]
    return {
        "arrival": ([1.0, -1.0, 0.0], den),
        "desired": ([gain_p + gain_i, -gain_p], den),
        "accumulator": ([-1.0, 1.0], den),
    }


def _queue_expr(scenario: StepScenario, n):
    g = scenario.saturation_gap
    excess = scenario.arrival_rate - scenario.fabric_capacity
    return scenario.interval * (
        (n + 1.0) * excess - n * scenario.gain_p * g - 0.5 * n * (n + 1.0) * scenario.gain_i * g
    )


def queue_trajectory(scenario: StepScenario, length: int) -> np.ndarray:
    """q_n over n in [0, length) while the controller ramps at saturation. May go negative."""
    return _queue_expr(scenario, np.arange(length, dtype=float))


def _queue_at(scenario: StepScenario, n: int) -> float:
    return float(_queue_expr(scenario, float(n))) if n >= 0 else 0.0


def initial_period(scenario: StepScenario) -> Tuple[int, float, float]:
    """(N0, S_N0, max_queue). N0 is the smallest n >= 1 with q_{n-1} <= tolerance."""
    if scenario.arrival_rate <= scenario.fabric_capacity:
        return 0, 0.0, 0.0
    tol = scenario.queue_tolerance
    g = scenario.saturation_gap
    excess = scenario.arrival_rate - scenario.fabric_capacity
    # q(n)/T = -a n^2 + b n + c
    a = 0.5 * scenario.gain_i * g
    b = excess - scenario.gain_p * g - a
    c = excess
    if a > 0:
        crossing = (b + math.sqrt(b * b + 4.0 * a * c)) / (2.0 * a)
    elif b < 0:
        crossing = c / -b
    else:
        raise UnstableGainsError(
            f"fabric queue never empties: gain_p={scenario.gain_p} gain_i={scenario.gain_i}"
        )
    n0 = max(1, int(math.floor(crossing)) + 1)
    while n0 > 1 and _queue_at(scenario, n0 - 2) <= tol:
        n0 -= 1
    while _queue_at(scenario, n0 - 1) > tol:
        n0 += 1
    s_n0 = scenario.gain_i * n0 * g
    max_queue = float(max(0.0, queue_trajectory(scenario, n0).max()))
    return n0, s_n0, max_queue


def worst_case_delay(scenario: StepScenario) -> float:
    """Seconds a bit waits in the fabric queue at the peak of the initial period."""
    _, _, max_queue = initial_period(scenario)
    return max_queue / scenario.fabric_capacity


def _check_stable(gain_p: float, gain_i: float) -> None:
    if not is_stable(gain_p, gain_i):
        raise UnstableGainsError(
            f"closed form diverges: gains K={gain_p} K_I={gain_i} outside stability region 0 < K_I < 2(1-K)"
        )


def step_response_closed_form(scenario: StepScenario, horizon: int) -> StepResponse:
    k, ki = scenario.gain_p, scenario.gain_i
    _check_stable(k, ki)
    n0, s_n0, max_queue = initial_period(scenario)
    z1, z2 = poles(k, ki)
    gap = scenario.rate_gap
    g = scenario.saturation_gap

    rho0 = (k + ki) * gap + s_n0
    rho1 = (1.0 - k - ki) * rho0 + ki * gap

    n = np.arange(horizon, dtype=float)
    ramp = (k + (n + 1.0) * ki) * g
    shifted = np.maximum(n - n0, 0.0)

    if z1 == z2:
        b = rho0 - gap
        c = rho1 - gap - b * z1
        tail = gap + b * np.power(z1, shifted) + c * shifted * np.power(z1, np.maximum(shifted - 1.0, 0.0))
        b1, b2 = b, c
    else:
        b1 = ((rho1 - gap) - z2 * (rho0 - gap)) / (z1 - z2)
        b2 = (rho0 - gap) - b1
        tail = gap + b1 * np.power(z1, shifted) + b2 * np.power(z2, shifted)

    drops = np.where(n < n0, ramp, tail)
    queue = np.zeros(horizon)
    if n0 > 0:
        q = np.maximum(queue_trajectory(scenario, min(n0, horizon)), 0.0)
        queue[: len(q)] = q

    coeff1 = -b1 / gap if gap else 0.0
    coeff2 = b2 / gap if gap else 0.0
    return StepResponse(
        n0=n0,
        s_n0=s_n0,
        pole1=z1,
        pole2=z2,
        coeff1=coeff1,
        coeff2=coeff2,
        rate_gap=gap,
        drop_sequence=drops,
        queue_sequence=queue,
        max_queue=max_queue,
    )


def step_response_recurrence(scenario: StepScenario, horizon: int) -> np.ndarray:
    """Time-steps the unclamped PI law with an explicit fabric queue. Works for any gains."""
    k, ki = scenario.gain_p, scenario.gain_i
    tol = scenario.queue_tolerance
    saturated = scenario.arrival_rate > scenario.fabric_capacity
    accumulator = 0.0
    rho_prev = 0.0
    queue = 0.0
    out = np.empty(horizon)
    for n in range(horizon):
        if saturated:
            rate = scenario.fabric_capacity
            queue += scenario.interval * (scenario.arrival_rate - scenario.fabric_capacity - rho_prev)
        else:
            rate = scenario.arrival_rate - rho_prev
        rho, accumulator = pi_linear(accumulator, rate - scenario.desired_rate, k, ki)
        out[n] = rho
        rho_prev = rho
        if saturated and queue <= tol:
            saturated = False
            rho_prev = 0.0
            logger.debug("fabric queue empty n=%d accumulator=%.6g", n, accumulator)
    return out


def diverges(sequence: Sequence[float], bound: float) -> bool:
    arr = np.asarray(sequence, dtype=float)
    if not np.all(np.isfinite(arr)):
        return True
    return bool(np.any(np.abs(arr) > bound))


def multiflow_initial_rate(own_rate: float, other_rate: float, fabric_capacity: float) -> float:
    total = own_rate + other_rate
    if total <= 0:
        raise ValueError("multiflow_initial_rate: own_rate + other_rate must be > 0")
    if total > fabric_capacity:
        return fabric_capacity * own_rate / total
    return own_rate


def multiflow_initial_period(
    own_rate: float, other_rate: float, scenario: StepScenario, max_steps: int = 100000
) -> Tuple[int, float]:
    """Intervals until own + other traffic fits through sc with only the own flow controlled.

    The own flow sees r[n] = sc*u/(u+v) with u = own_rate - rho[n-1] while the
    fabric interface is oversubscribed. Returns (N0, accumulator at N0).
    """
    k, ki = scenario.gain_p, scenario.gain_i
    accumulator = 0.0
    rho_prev = 0.0
    for n in range(max_steps):
        admitted = own_rate - rho_prev
        if admitted + other_rate <= scenario.fabric_capacity:
            return n, accumulator
        rate = multiflow_initial_rate(admitted, other_rate, scenario.fabric_capacity)
        rho_prev, accumulator = pi_linear(accumulator, rate - scenario.desired_rate, k, ki)
    raise ValueError(f"initial period exceeds max_steps={max_steps}")
