"""Length-unit parsing for CLI flags.

Flags carry explicit unit suffixes (``50um``, ``1cm``, ``5mm``, ``420nm``).
Internally the toolkit uses um for transverse lengths, mm for longitudinal
lengths, nm for wavelengths and cm for loss-budget path lengths.
"""

from __future__ import annotations

import re

from .errors import InputError

_TO_UM = {
    "nm": 1e-3,
    "um": 1.0,
    "µm": 1.0,
    "mm": 1e3,
    "cm": 1e4,
    "m": 1e6,
}

_QTY = re.compile(r"^\s*([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*([a-zA-Zµ]+)\s*$")


def parse_length(text: str, target: str = "um") -> float:
    """Parse a length with an explicit unit suffix into ``target`` units."""
    if target not in _TO_UM:
        raise InputError(f"unknown target unit {target!r}")
    m = _QTY.match(text)
    if m is None:
        raise InputError(
            f"cannot parse length {text!r}; expected e.g. '50um', '5mm', '1cm', '420nm'"
        )
    value, unit = float(m.group(1)), m.group(2)
    if unit not in _TO_UM:
        raise InputError(f"unknown length unit {unit!r} in {text!r}")
    return value * _TO_UM[unit] / _TO_UM[target]
