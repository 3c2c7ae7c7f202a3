from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

from switchcore.streams import RandomStream


@dataclass(frozen=True)
class SubnetGroup:
    source_count: int
    link_rate: float
    start_window: Tuple[float, float]
    one_way_delay: float = 0.02

    def __post_init__(self) -> None:
        if self.source_count <= 0:
            raise ValueError(f"source_count must be > 0, got {self.source_count}")
        if self.link_rate <= 0:
            raise ValueError(f"link_rate must be > 0, got {self.link_rate}")
        lo, hi = self.start_window
        if hi < lo:
            raise ValueError(f"start_window must be (low, high) with low <= high, got {self.start_window}")


def staged_start(groups: Sequence[SubnetGroup], seed: int) -> List[List[float]]:
    """Start time of every source, drawn uniformly inside its group's window.

    Groups must be ordered by window start; windows may overlap.
    """
    starts = [g.start_window[0] for g in groups]
    if starts != sorted(starts):
        raise ValueError(f"subnet groups must be ordered by start window, got starts {starts}")
    out: List[List[float]] = []
    for idx, group in enumerate(groups):
        rng = RandomStream(seed, f"staged_start/{idx}")
        lo, hi = group.start_window
        out.append([rng.uniform_range(lo, hi) for _ in range(group.source_count)])
    return out


def overload_ratios(groups: Sequence[SubnetGroup], destination_rate: float) -> List[float]:
    """Potential offered:capacity ratio at the destination after each stage starts."""
    if destination_rate <= 0:
        raise ValueError(f"destination_rate must be > 0, got {destination_rate}")
    ratios = []
    total = 0.0
    for g in groups:
        total += g.link_rate
        ratios.append(total / destination_rate)
    return ratios
