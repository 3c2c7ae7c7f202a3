"""Quantities with units in config files: ``"9.52Mb/s"``, ``"50KB"``, ``"1ms"``.

Bits are lower-case ``b`` and bytes upper-case ``B``. Plain numbers are taken
to be in the base unit of the key (bits/s, bytes, seconds).
"""

from __future__ import annotations

import re
from typing import Dict, Union

QUANTITY_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-z/]+)?\s*$")

UNIT_SCALE: Dict[str, Dict[str, float]] = {
    "rate": {
        "bps": 1.0,
        "b/s": 1.0,
        "kbps": 1e3,
        "kb/s": 1e3,
        "Kb/s": 1e3,
        "Mbps": 1e6,
        "Mb/s": 1e6,
        "Gbps": 1e9,
        "Gb/s": 1e9,
    },
    "size": {
        "B": 1.0,
        "KB": 1e3,
        "kB": 1e3,
        "MB": 1e6,
        "GB": 1e9,
    },
    "time": {
        "s": 1.0,
        "ms": 1e-3,
        "us": 1e-6,
        "ns": 1e-9,
    },
}


class UnitError(ValueError):
    pass


def unit_dimension(unit: str) -> str:
    for dim, table in UNIT_SCALE.items():
        if unit in table:
            return dim
    raise UnitError(f"unknown unit '{unit}'")


def parse_quantity(value: Union[str, int, float], dimension: str) -> float:
    if isinstance(value, bool):
        raise UnitError(f"expected a {dimension} quantity, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise UnitError(f"expected a {dimension} quantity, got {type(value).__name__}")
    match = QUANTITY_RE.match(value)
    if not match:
        raise UnitError(f"cannot parse quantity {value!r}")
    number, unit = match.group(1), match.group(2)
    if unit is None:
        return float(number)
    found = unit_dimension(unit)
    if found != dimension:
        raise UnitError(f"unit mismatch: '{unit}' is a {found} unit, expected {dimension}")
    return float(number) * UNIT_SCALE[dimension][unit]
